//! Joins edge suspicions with ledger shortfalls.
//!
//! An alert needs both signals: a suspicion from a camera and a stock finding
//! with a shortfall for a SKU that camera sees, no further apart than the
//! correlation window. Each unit of shortfall explains at most one alert.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ledger::Ledger;
use crate::protocol::{Alert, SuspicionEvent};

pub const DEFAULT_WINDOW_MS: u64 = 60_000;

/// Camera id to the SKUs in its field of view. Unknown cameras see nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CameraZoneMap {
    cameras: BTreeMap<String, BTreeSet<String>>,
}

impl CameraZoneMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, camera: impl Into<String>, sku: impl Into<String>) {
        self.cameras
            .entry(camera.into())
            .or_default()
            .insert(sku.into());
    }

    /// Expand camera-to-zone assignments through the items' zones.
    pub fn from_zones<'a>(
        camera_zones: impl IntoIterator<Item = (String, Vec<String>)>,
        items: impl IntoIterator<Item = (&'a str, &'a str)> + Clone,
    ) -> Self {
        let mut map = Self::new();
        for (camera, zones) in camera_zones {
            map.cameras.entry(camera.clone()).or_default();
            for (sku, zone) in items.clone() {
                if zones.iter().any(|z| z == zone) {
                    map.insert(camera.clone(), sku);
                }
            }
        }
        map
    }

    pub fn skus(&self, camera: &str) -> impl Iterator<Item = &str> {
        self.cameras
            .get(camera)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn cameras(&self) -> impl Iterator<Item = &str> {
        self.cameras.keys().map(String::as_str)
    }

    pub fn sees(&self, camera: &str, sku: &str) -> bool {
        self.cameras.get(camera).is_some_and(|s| s.contains(sku))
    }
}

/// Shortfall seen on the shelf that no suspicion has explained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StockDiscrepancy {
    pub sku: String,
    pub missing_count: u64,
    pub unexplained: u64,
    pub observed_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuspicionAudit {
    pub camera_id: String,
    pub timestamp_ms: u64,
    pub anomaly_score: f64,
    pub alert_id: Option<String>,
}

/// Deterministic id so replays of one input stream give the same alerts.
pub fn alert_id(camera: &str, sku: &str, suspicion_ts: u64) -> String {
    let mut h = Sha256::new();
    h.update(camera.as_bytes());
    h.update([0]);
    h.update(sku.as_bytes());
    h.update([0]);
    h.update(suspicion_ts.to_be_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone)]
pub struct Correlator {
    window_ms: u64,
    /// Shortfall units per SKU already explained by an alert.
    accounted: BTreeMap<String, u64>,
    /// Shortfall per SKU already reported as a discrepancy.
    reported: BTreeMap<String, u64>,
    /// Last fresh shortfall per SKU and when it last grew.
    rise: BTreeMap<String, (u64, u64)>,
    pending: VecDeque<SuspicionEvent>,
    audit: Vec<SuspicionAudit>,
}

impl Correlator {
    pub fn new(window_ms: u64) -> Self {
        Self {
            window_ms,
            accounted: BTreeMap::new(),
            reported: BTreeMap::new(),
            rise: BTreeMap::new(),
            pending: VecDeque::new(),
            audit: Vec::new(),
        }
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    /// Correlate a fresh suspicion. Without a current shortfall it waits for
    /// later observations until the window closes.
    pub fn on_suspicion(
        &mut self,
        suspicion: SuspicionEvent,
        ledger: &Ledger,
        zones: &CameraZoneMap,
    ) -> Option<Alert> {
        self.expire(suspicion.timestamp_ms);
        match self.try_alert(&suspicion, ledger, zones) {
            Some(alert) => {
                self.record(&suspicion, Some(alert.alert_id.clone()));
                Some(alert)
            }
            None => {
                self.pending.push_back(suspicion);
                None
            }
        }
    }

    /// Re-check waiting suspicions after the shelf count of `sku` changed,
    /// then report any shortfall left unexplained.
    pub fn on_observation(
        &mut self,
        sku: &str,
        observed_at_ms: u64,
        ledger: &Ledger,
        zones: &CameraZoneMap,
    ) -> (Vec<Alert>, Option<StockDiscrepancy>) {
        self.expire(observed_at_ms);
        let finding = ledger
            .check_consistency(sku, observed_at_ms, self.window_ms)
            .ok();
        if let Some(f) = &finding {
            self.settle(sku, f.missing_count);
            let (last, at) = self.rise.entry(sku.to_string()).or_insert((0, 0));
            if f.missing_count > *last {
                *at = observed_at_ms;
            }
            *last = f.missing_count;
        }
        let mut alerts = Vec::new();
        let waiting = std::mem::take(&mut self.pending);
        for s in waiting {
            if !zones.sees(&s.camera_id, sku) {
                self.pending.push_back(s);
                continue;
            }
            match self.try_alert(&s, ledger, zones) {
                Some(a) => {
                    self.record(&s, Some(a.alert_id.clone()));
                    alerts.push(a);
                }
                None => self.pending.push_back(s),
            }
        }

        let discrepancy = finding.and_then(|f| {
            let accounted = self.accounted.get(sku).copied().unwrap_or(0);
            let reported = self.reported.entry(sku.to_string()).or_default();
            *reported = (*reported).min(f.missing_count);
            let unexplained = f.missing_count.saturating_sub(accounted);
            if unexplained >= 1 && f.missing_count > *reported {
                *reported = f.missing_count;
                Some(StockDiscrepancy {
                    sku: sku.to_string(),
                    missing_count: f.missing_count,
                    unexplained,
                    observed_at_ms,
                })
            } else {
                None
            }
        });
        (alerts, discrepancy)
    }

    /// Clamp the explained count to a freshly observed shortfall.
    fn settle(&mut self, sku: &str, missing: u64) {
        let acc = self.accounted.entry(sku.to_string()).or_default();
        *acc = (*acc).min(missing);
    }

    fn try_alert(
        &mut self,
        s: &SuspicionEvent,
        ledger: &Ledger,
        zones: &CameraZoneMap,
    ) -> Option<Alert> {
        let mut best: Option<(u64, super::ledger::StockFinding)> = None;
        for sku in zones.skus(&s.camera_id) {
            let Ok(f) = ledger.check_consistency(sku, s.timestamp_ms, self.window_ms) else {
                continue;
            };
            // a shortfall that grew long before the suspicion is not its
            let grew_at = self.rise.get(sku).map(|&(_, at)| at);
            if grew_at.is_none_or(|at| at.abs_diff(s.timestamp_ms) > self.window_ms) {
                continue;
            }
            // only a fresh count of this sku may lower the explained total;
            // here the count can predate a sale and dip transiently
            let accounted = self.accounted.get(sku).copied().unwrap_or(0);
            let new = f.missing_count.saturating_sub(accounted);
            if new >= 1 && best.as_ref().is_none_or(|(b, _)| new > *b) {
                best = Some((new, f));
            }
        }
        let (_, f) = best?;
        *self.accounted.entry(f.sku.clone()).or_default() += 1;
        Some(Alert {
            alert_id: alert_id(&s.camera_id, &f.sku, s.timestamp_ms),
            camera_id: s.camera_id.clone(),
            sku: f.sku,
            missing_count: f.missing_count,
            created_at_ms: s.timestamp_ms.max(f.observed_at_ms),
            suspicion: s.clone(),
        })
    }

    fn expire(&mut self, now_ms: u64) {
        while let Some(s) = self.pending.front() {
            if s.timestamp_ms + self.window_ms >= now_ms {
                break;
            }
            let s = self.pending.pop_front().unwrap();
            self.record(&s, None);
        }
    }

    fn record(&mut self, s: &SuspicionEvent, alert_id: Option<String>) {
        self.audit.push(SuspicionAudit {
            camera_id: s.camera_id.clone(),
            timestamp_ms: s.timestamp_ms,
            anomaly_score: s.anomaly_score,
            alert_id,
        });
    }

    /// Close the books: every pending suspicion goes to the audit log.
    pub fn flush(&mut self) {
        while let Some(s) = self.pending.pop_front() {
            self.record(&s, None);
        }
    }

    pub fn pending(&self) -> impl Iterator<Item = &SuspicionEvent> {
        self.pending.iter()
    }

    /// Suspicions that were alerted or whose window closed.
    pub fn audit(&self) -> &[SuspicionAudit] {
        &self.audit
    }
}

impl Default for Correlator {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_MS)
    }
}
