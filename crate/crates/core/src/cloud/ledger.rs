//! Event-sourced item stock ledger.
//!
//! The log is the source of truth; per-SKU state is a fold over it. Events
//! for unregistered SKUs never enter the log and are kept as dead letters.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{SaleEvent, ShelfObservation};

pub const DEFAULT_FRESHNESS_MS: u64 = 120_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("unknown sku `{0}`")]
    UnknownSku(String),
    #[error("sku `{0}` is already registered")]
    DuplicateSku(String),
    #[error("no observation of `{sku}` within {window_ms} ms of {as_of_ms}")]
    NoFreshObservation {
        sku: String,
        as_of_ms: u64,
        window_ms: u64,
    },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub sku: String,
    pub name: String,
    pub recorded_stock: i64,
    pub zone: String,
    /// Units held off the shelf; subtracted from the expected shelf count.
    #[serde(default)]
    pub backroom: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestockEvent {
    pub sku: String,
    pub quantity: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LedgerEvent {
    Register(ItemRecord),
    Sale(SaleEvent),
    Restock(RestockEvent),
    Observation(ShelfObservation),
}

impl LedgerEvent {
    pub fn sku(&self) -> &str {
        match self {
            LedgerEvent::Register(r) => &r.sku,
            LedgerEvent::Sale(s) => &s.sku,
            LedgerEvent::Restock(r) => &r.sku,
            LedgerEvent::Observation(o) => &o.sku,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkuState {
    pub sku: String,
    pub name: String,
    pub zone: String,
    pub backroom: i64,
    pub initial_stock: i64,
    pub restocked: i64,
    pub sold: i64,
    pub recorded_stock: i64,
    pub last_observation: Option<ShelfObservation>,
}

impl SkuState {
    /// Stock below zero: more sold than ever recorded.
    pub fn has_discrepancy(&self) -> bool {
        self.recorded_stock < 0
    }
}

/// Derived per-SKU state. Only [`LedgerState::apply`] mutates it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    items: BTreeMap<String, SkuState>,
}

impl LedgerState {
    pub fn apply(&mut self, event: &LedgerEvent) -> Result<(), LedgerError> {
        if let LedgerEvent::Register(r) = event {
            if self.items.contains_key(&r.sku) {
                return Err(LedgerError::DuplicateSku(r.sku.clone()));
            }
            self.items.insert(
                r.sku.clone(),
                SkuState {
                    sku: r.sku.clone(),
                    name: r.name.clone(),
                    zone: r.zone.clone(),
                    backroom: r.backroom,
                    initial_stock: r.recorded_stock,
                    restocked: 0,
                    sold: 0,
                    recorded_stock: r.recorded_stock,
                    last_observation: None,
                },
            );
            return Ok(());
        }
        let state = self
            .items
            .get_mut(event.sku())
            .ok_or_else(|| LedgerError::UnknownSku(event.sku().to_string()))?;
        match event {
            LedgerEvent::Register(_) => unreachable!(),
            LedgerEvent::Sale(s) => {
                state.sold += s.quantity as i64;
                state.recorded_stock -= s.quantity as i64;
            }
            LedgerEvent::Restock(r) => {
                state.restocked += r.quantity as i64;
                state.recorded_stock += r.quantity as i64;
            }
            LedgerEvent::Observation(o) => state.last_observation = Some(o.clone()),
        }
        Ok(())
    }

    pub fn get(&self, sku: &str) -> Option<&SkuState> {
        self.items.get(sku)
    }

    pub fn items(&self) -> impl Iterator<Item = &SkuState> {
        self.items.values()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadLetter {
    pub event: LedgerEvent,
    pub reason: String,
}

/// What an ingest did to the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerDelta {
    pub sku: String,
    /// False when the event went to the dead-letter list.
    pub applied: bool,
    pub recorded_stock: Option<i64>,
    pub discrepancy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StockFinding {
    pub sku: String,
    pub expected_on_shelf: i64,
    pub observed: u64,
    pub missing_count: u64,
    pub observed_at_ms: u64,
    pub window_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    log: Vec<LedgerEvent>,
    /// Number of leading log events folded into the state a snapshot restored.
    base_offset: usize,
    state: LedgerState,
    dead_letters: Vec<DeadLetter>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_items(items: impl IntoIterator<Item = ItemRecord>) -> Result<Self, LedgerError> {
        let mut l = Self::new();
        for item in items {
            l.register(item)?;
        }
        Ok(l)
    }

    /// Folds a full event log from empty.
    pub fn replay(log: impl IntoIterator<Item = LedgerEvent>) -> Result<Self, LedgerError> {
        let mut l = Self::new();
        for ev in log {
            l.state.apply(&ev)?;
            l.log.push(ev);
        }
        Ok(l)
    }

    pub fn register(&mut self, item: ItemRecord) -> Result<(), LedgerError> {
        let ev = LedgerEvent::Register(item);
        self.state.apply(&ev)?;
        self.log.push(ev);
        Ok(())
    }

    fn ingest(&mut self, ev: LedgerEvent) -> LedgerDelta {
        let sku = ev.sku().to_string();
        match self.state.apply(&ev) {
            Ok(()) => {
                self.log.push(ev);
                let s = self.state.get(&sku).expect("applied");
                LedgerDelta {
                    recorded_stock: Some(s.recorded_stock),
                    discrepancy: s.has_discrepancy(),
                    sku,
                    applied: true,
                }
            }
            Err(e) => {
                self.dead_letters.push(DeadLetter {
                    event: ev,
                    reason: e.to_string(),
                });
                LedgerDelta {
                    sku,
                    applied: false,
                    recorded_stock: None,
                    discrepancy: false,
                }
            }
        }
    }

    /// Decrements recorded stock. Negative stock is kept and flagged.
    pub fn ingest_sale(&mut self, sale: SaleEvent) -> LedgerDelta {
        self.ingest(LedgerEvent::Sale(sale))
    }

    pub fn ingest_restock(&mut self, restock: RestockEvent) -> LedgerDelta {
        self.ingest(LedgerEvent::Restock(restock))
    }

    pub fn record_shelf_observation(&mut self, obs: ShelfObservation) -> LedgerDelta {
        self.ingest(LedgerEvent::Observation(obs))
    }

    /// Compare recorded stock with the latest shelf count of `sku`.
    ///
    /// The observation must lie within `freshness_ms` of `as_of_ms` on either
    /// side. All non-backroom stock is assumed to be shelved.
    pub fn check_consistency(
        &self,
        sku: &str,
        as_of_ms: u64,
        freshness_ms: u64,
    ) -> Result<StockFinding, LedgerError> {
        let s = self
            .state
            .get(sku)
            .ok_or_else(|| LedgerError::UnknownSku(sku.to_string()))?;
        let obs = s
            .last_observation
            .as_ref()
            .filter(|o| o.timestamp_ms.abs_diff(as_of_ms) <= freshness_ms)
            .ok_or_else(|| LedgerError::NoFreshObservation {
                sku: sku.to_string(),
                as_of_ms,
                window_ms: freshness_ms,
            })?;
        let expected_on_shelf = s.recorded_stock - s.backroom;
        let missing = (expected_on_shelf - obs.observed_count as i64).max(0) as u64;
        Ok(StockFinding {
            sku: sku.to_string(),
            expected_on_shelf,
            observed: obs.observed_count,
            missing_count: missing,
            observed_at_ms: obs.timestamp_ms,
            window_ms: freshness_ms,
        })
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    /// Events since the ledger was created or restored, in apply order.
    pub fn log(&self) -> &[LedgerEvent] {
        &self.log
    }

    /// Absolute offset of the end of the log.
    pub fn log_offset(&self) -> usize {
        self.base_offset + self.log.len()
    }

    pub fn dead_letters(&self) -> &[DeadLetter] {
        &self.dead_letters
    }

    pub fn discrepancies(&self) -> Vec<&SkuState> {
        self.state.items().filter(|s| s.has_discrepancy()).collect()
    }

    /// Write derived state plus the log offset it covers.
    pub fn write_snapshot(&self, out: impl Write) -> io::Result<()> {
        let mut w = BufWriter::new(out);
        serde_json::to_writer(
            &mut w,
            &SnapshotHeader {
                kind: "snapshot".into(),
                log_offset: self.log_offset(),
            },
        )?;
        w.write_all(b"\n")?;
        for item in self.state.items() {
            serde_json::to_writer(&mut w, item)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Restore from a snapshot, then fold the event-log entries past its offset.
    pub fn restore(
        snapshot: impl BufRead,
        full_log: impl IntoIterator<Item = LedgerEvent>,
    ) -> Result<Self, LedgerError> {
        let bad = |e: &dyn std::fmt::Display| LedgerError::Snapshot(e.to_string());
        let mut lines = snapshot.lines();
        let header = lines
            .next()
            .ok_or_else(|| LedgerError::Snapshot("empty snapshot".into()))?
            .map_err(|e| bad(&e))?;
        let header: SnapshotHeader = serde_json::from_str(&header).map_err(|e| bad(&e))?;
        if header.kind != "snapshot" {
            return Err(LedgerError::Snapshot("missing snapshot header".into()));
        }
        let mut state = LedgerState::default();
        for line in lines {
            let line = line.map_err(|e| bad(&e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: SkuState = serde_json::from_str(&line).map_err(|e| bad(&e))?;
            state.items.insert(item.sku.clone(), item);
        }
        let mut ledger = Ledger {
            log: Vec::new(),
            base_offset: header.log_offset,
            state,
            dead_letters: Vec::new(),
        };
        for ev in full_log.into_iter().skip(header.log_offset) {
            ledger.state.apply(&ev)?;
            ledger.log.push(ev);
        }
        Ok(ledger)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotHeader {
    kind: String,
    log_offset: usize,
}

/// Append-only NDJSON event log on disk.
pub struct EventLogFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EventLogFile {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, ev: &LedgerEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, ev)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_all(path: &Path) -> io::Result<Vec<LedgerEvent>> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            );
        }
        Ok(out)
    }
}

/// Parse an NDJSON catalog of [`ItemRecord`]s.
pub fn read_catalog(reader: impl BufRead) -> Result<Vec<ItemRecord>, LedgerError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LedgerError::Snapshot(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| LedgerError::Snapshot(format!("catalog line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
