//! The cloud side: item ledger, suspicion correlation, alert delivery and
//! model distribution.

pub mod client;
pub mod correlate;
pub mod ledger;
pub mod notify;
pub mod server;

pub use correlate::{
    alert_id, CameraZoneMap, Correlator, StockDiscrepancy, SuspicionAudit, DEFAULT_WINDOW_MS,
};
pub use ledger::{
    read_catalog, DeadLetter, EventLogFile, ItemRecord, Ledger, LedgerDelta, LedgerError,
    LedgerEvent, RestockEvent, SkuState, StockFinding, DEFAULT_FRESHNESS_MS,
};
pub use notify::{sink_from_spec, DeliveryRecord, Dispatcher, Notifier};
pub use server::{CloudServer, ServerConfig, DEFAULT_DISTRIBUTE_TIMEOUT_MS};

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;

use crate::config::{split_list, ConfigError, KeyValues};
use crate::protocol::{Alert, SaleEvent, ShelfObservation, SuspicionEvent, DEFAULT_CLOUD_PORT};

pub const CLOUD_CONFIG_KEYS: &[&str] = &[
    "listen",
    "catalog",
    "correlation_window_ms",
    "distribute_timeout_ms",
    "notifiers",
    "notify_retries",
    "notify_retry_delay_ms",
    "webhook_timeout_ms",
    "snapshot_every",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CloudConfig {
    pub listen: String,
    /// NDJSON item records registered at startup.
    pub catalog: Option<PathBuf>,
    /// Camera id to the shelf zones it covers.
    pub camera_zones: Vec<(String, Vec<String>)>,
    pub correlation_window_ms: u64,
    pub distribute_timeout_ms: u64,
    pub notifiers: Vec<String>,
    pub notify_retries: u32,
    pub notify_retry_delay_ms: u64,
    pub webhook_timeout_ms: u64,
    /// Applied ledger events between snapshot writes.
    pub snapshot_every: u64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            listen: format!("127.0.0.1:{DEFAULT_CLOUD_PORT}"),
            catalog: None,
            camera_zones: Vec::new(),
            correlation_window_ms: DEFAULT_WINDOW_MS,
            distribute_timeout_ms: DEFAULT_DISTRIBUTE_TIMEOUT_MS,
            notifiers: vec!["stdout".into()],
            notify_retries: notify::DEFAULT_RETRIES,
            notify_retry_delay_ms: 200,
            webhook_timeout_ms: 2_000,
            snapshot_every: 100,
        }
    }
}

impl CloudConfig {
    /// `base_dir` resolves a relative `catalog` path.
    pub fn from_key_values(kv: &KeyValues, base_dir: &Path) -> Result<Self, ConfigError> {
        kv.deny_unknown(CLOUD_CONFIG_KEYS, &["camera"])?;
        let d = Self::default();
        let cfg = Self {
            listen: kv.get("listen").map(String::from).unwrap_or(d.listen),
            catalog: kv.get("catalog").map(|p| base_dir.join(p)),
            camera_zones: kv
                .with_prefix("camera")
                .map(|(cam, zones)| (cam.to_string(), split_list(zones)))
                .collect(),
            correlation_window_ms: kv
                .parsed_or("correlation_window_ms", d.correlation_window_ms)?,
            distribute_timeout_ms: kv
                .parsed_or("distribute_timeout_ms", d.distribute_timeout_ms)?,
            notifiers: if kv.get("notifiers").is_some() {
                kv.list("notifiers")
            } else {
                d.notifiers
            },
            notify_retries: kv.parsed_or("notify_retries", d.notify_retries)?,
            notify_retry_delay_ms: kv
                .parsed_or("notify_retry_delay_ms", d.notify_retry_delay_ms)?,
            webhook_timeout_ms: kv.parsed_or("webhook_timeout_ms", d.webhook_timeout_ms)?,
            snapshot_every: kv.parsed_or("snapshot_every", d.snapshot_every)?,
        };
        for spec in &cfg.notifiers {
            sink_from_spec(spec, Duration::ZERO).map_err(|reason| ConfigError::Invalid {
                key: "notifiers".into(),
                reason,
            })?;
        }
        if cfg.snapshot_every == 0 {
            return Err(ConfigError::Invalid {
                key: "snapshot_every".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(cfg)
    }

    pub fn load_catalog(&self) -> Result<Vec<ItemRecord>, LedgerError> {
        match &self.catalog {
            None => Ok(Vec::new()),
            Some(p) => {
                let f = File::open(p)
                    .map_err(|e| LedgerError::Snapshot(format!("{}: {e}", p.display())))?;
                read_catalog(BufReader::new(f))
            }
        }
    }

    pub fn dispatcher(&self) -> Dispatcher {
        let timeout = Duration::from_millis(self.webhook_timeout_ms);
        let sinks = self
            .notifiers
            .iter()
            .map(|s| sink_from_spec(s, timeout).expect("validated at load"))
            .collect();
        Dispatcher::new(sinks).with_retry(
            self.notify_retries,
            Duration::from_millis(self.notify_retry_delay_ms),
        )
    }
}

/// Path of the event log kept next to a snapshot.
pub fn events_path(snapshot: &Path) -> PathBuf {
    let mut s = snapshot.as_os_str().to_owned();
    s.push(".events");
    PathBuf::from(s)
}

/// Ledger plus correlator: the single apply point for every cloud input.
pub struct CloudCore {
    ledger: Ledger,
    correlator: Correlator,
    zones: CameraZoneMap,
    log: Option<EventLogFile>,
    alerts: Vec<Alert>,
    discrepancies: Vec<StockDiscrepancy>,
}

impl CloudCore {
    pub fn new(ledger: Ledger, camera_zones: &[(String, Vec<String>)], window_ms: u64) -> Self {
        let zones = CameraZoneMap::from_zones(
            camera_zones.iter().cloned(),
            ledger
                .state()
                .items()
                .map(|s| (s.sku.as_str(), s.zone.as_str()))
                .collect::<Vec<_>>(),
        );
        Self {
            ledger,
            correlator: Correlator::new(window_ms),
            zones,
            log: None,
            alerts: Vec::new(),
            discrepancies: Vec::new(),
        }
    }

    /// Build from config, restoring from `snapshot` and its event log when
    /// present. Catalog items not yet in the ledger are registered.
    pub fn open(
        config: &CloudConfig,
        catalog: Vec<ItemRecord>,
        snapshot: Option<&Path>,
    ) -> Result<Self, LedgerError> {
        let io_err = |e: io::Error| LedgerError::Snapshot(e.to_string());
        let (mut ledger, log) = match snapshot {
            None => (Ledger::new(), None),
            Some(snap) => {
                let events_file = events_path(snap);
                let events = EventLogFile::read_all(&events_file).map_err(io_err)?;
                let ledger = if snap.exists() {
                    let f = File::open(snap).map_err(io_err)?;
                    Ledger::restore(BufReader::new(f), events)?
                } else {
                    Ledger::replay(events)?
                };
                info!(
                    "restored ledger at log offset {} ({} items)",
                    ledger.log_offset(),
                    ledger.state().items().count()
                );
                (
                    ledger,
                    Some(EventLogFile::open(events_file).map_err(io_err)?),
                )
            }
        };
        let before = ledger.log().len();
        for item in catalog {
            if ledger.state().get(&item.sku).is_none() {
                ledger.register(item)?;
            }
        }
        let mut log = log;
        if let Some(f) = log.as_mut() {
            for ev in &ledger.log()[before..] {
                f.append(ev).map_err(io_err)?;
            }
        }
        let mut core = Self::new(ledger, &config.camera_zones, config.correlation_window_ms);
        core.log = log;
        Ok(core)
    }

    fn persist_last(&mut self, delta: &LedgerDelta) -> io::Result<()> {
        if let (true, Some(f)) = (delta.applied, self.log.as_mut()) {
            f.append(self.ledger.log().last().expect("applied event is logged"))?;
        }
        Ok(())
    }

    pub fn on_sale(&mut self, sale: SaleEvent) -> io::Result<LedgerDelta> {
        let delta = self.ledger.ingest_sale(sale);
        self.persist_last(&delta)?;
        Ok(delta)
    }

    pub fn on_restock(&mut self, restock: RestockEvent) -> io::Result<LedgerDelta> {
        let delta = self.ledger.ingest_restock(restock);
        self.persist_last(&delta)?;
        Ok(delta)
    }

    pub fn on_observation(&mut self, obs: ShelfObservation) -> io::Result<Vec<Alert>> {
        let (sku, ts) = (obs.sku.clone(), obs.timestamp_ms);
        let delta = self.ledger.record_shelf_observation(obs);
        self.persist_last(&delta)?;
        if !delta.applied {
            return Ok(Vec::new());
        }
        let (alerts, disc) = self
            .correlator
            .on_observation(&sku, ts, &self.ledger, &self.zones);
        if let Some(d) = disc {
            info!(
                "stock discrepancy on {}: {} unexplained",
                d.sku, d.unexplained
            );
            self.discrepancies.push(d);
        }
        self.alerts.extend(alerts.iter().cloned());
        Ok(alerts)
    }

    pub fn on_suspicion(&mut self, suspicion: SuspicionEvent) -> Vec<Alert> {
        let alert = self
            .correlator
            .on_suspicion(suspicion, &self.ledger, &self.zones);
        self.alerts.extend(alert.iter().cloned());
        alert.into_iter().collect()
    }

    /// Close out pending suspicions into the audit log.
    pub fn finish(&mut self) {
        self.correlator.flush();
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn correlator(&self) -> &Correlator {
        &self.correlator
    }

    pub fn zones(&self) -> &CameraZoneMap {
        &self.zones
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn discrepancies(&self) -> &[StockDiscrepancy] {
        &self.discrepancies
    }

    /// Write the snapshot through a temporary file and rename.
    pub fn write_snapshot(&self, path: &Path) -> io::Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        self.ledger.write_snapshot(File::create(&tmp)?)?;
        std::fs::rename(&tmp, path)
    }
}
