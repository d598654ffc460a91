//! In-process, simulated-time replay of a scenario through edge and cloud.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::scenario::{GroundTruth, InjectionKind, Scenario, CLOUD_CONFIG_FILE, EDGE_CONFIG_FILE};
use super::SimError;
use crate::cloud::{CloudConfig, CloudCore, Ledger};
use crate::config::KeyValues;
use crate::edge::{EdgeAgent, EdgeConfig, ModelStore};
use crate::learn::Model;
use crate::protocol::Alert;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub ground_truth_events: u64,
    pub alerts_raised: u64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// 1.0 when no alert was raised.
    pub precision: f64,
    /// 1.0 when there was nothing to find.
    pub recall: f64,
    pub frames: u64,
    pub suspicions: u64,
    pub stock_discrepancies: u64,
    pub alert_ids: Vec<String>,
}

impl ScenarioReport {
    pub fn table(&self) -> String {
        let rows = [
            ("ground truth thefts", self.ground_truth_events.to_string()),
            ("alerts raised", self.alerts_raised.to_string()),
            ("true positives", self.true_positives.to_string()),
            ("false positives", self.false_positives.to_string()),
            ("false negatives", self.false_negatives.to_string()),
            ("precision", format!("{:.3}", self.precision)),
            ("recall", format!("{:.3}", self.recall)),
            ("frames scored", self.frames.to_string()),
            ("suspicion events", self.suspicions.to_string()),
            ("stock discrepancies", self.stock_discrepancies.to_string()),
        ];
        rows.iter()
            .map(|(k, v)| format!("{k:<20} {v:>8}\n"))
            .collect()
    }
}

enum Input<'a> {
    Sale(&'a crate::protocol::SaleEvent),
    Frame(&'a crate::features::LandmarkFrame),
    Shelf(&'a crate::protocol::ShelfObservation),
}

/// Run the timeline in timestamp order. At equal timestamps sales go first,
/// then frames, then shelf counts.
pub fn replay(
    scenario: &Scenario,
    edge_config: EdgeConfig,
    cloud_config: &CloudConfig,
) -> Result<ScenarioReport, SimError> {
    let store = Arc::new(ModelStore::new());
    store.install(Model::Anomaly(scenario.reference.clone()));
    let mut edge = EdgeAgent::new(edge_config, store);
    let ledger = Ledger::with_items(scenario.catalog.iter().cloned())?;
    let mut cloud = CloudCore::new(
        ledger,
        &cloud_config.camera_zones,
        cloud_config.correlation_window_ms,
    );

    let mut inputs: Vec<(u64, u8, usize, Input)> = Vec::new();
    inputs.extend(
        scenario
            .sales
            .iter()
            .enumerate()
            .map(|(i, s)| (s.timestamp_ms, 0, i, Input::Sale(s))),
    );
    inputs.extend(
        scenario
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (f.timestamp_ms, 1, i, Input::Frame(f))),
    );
    inputs.extend(
        scenario
            .observations
            .iter()
            .enumerate()
            .map(|(i, o)| (o.timestamp_ms, 2, i, Input::Shelf(o))),
    );
    inputs.sort_by_key(|&(ts, order, i, _)| (ts, order, i));

    let (mut frames, mut suspicions) = (0, 0);
    for (_, _, _, input) in inputs {
        match input {
            Input::Sale(s) => {
                cloud.on_sale(s.clone())?;
            }
            Input::Shelf(o) => {
                cloud.on_observation(o.clone())?;
            }
            Input::Frame(f) => {
                frames += 1;
                if let Some(ev) = edge.evaluate_frame(f)? {
                    suspicions += 1;
                    cloud.on_suspicion(ev);
                }
            }
        }
    }
    cloud.finish();
    let mut report = score(
        &scenario.ground_truth,
        cloud.alerts(),
        cloud_config.correlation_window_ms,
    );
    report.frames = frames;
    report.suspicions = suspicions;
    report.stock_discrepancies = cloud.discrepancies().len() as u64;
    Ok(report)
}

/// Match alerts to thefts by camera, SKU and time, each at most once.
pub fn score(ground_truth: &[GroundTruth], alerts: &[Alert], window_ms: u64) -> ScenarioReport {
    let thefts: Vec<&GroundTruth> = ground_truth
        .iter()
        .filter(|g| g.kind == InjectionKind::Theft)
        .collect();
    let mut used = vec![false; thefts.len()];
    let mut tp = 0u64;
    for a in alerts {
        let t = a.suspicion.timestamp_ms;
        let best = thefts
            .iter()
            .enumerate()
            .filter(|(i, g)| {
                !used[*i]
                    && g.camera_id == a.camera_id
                    && g.sku == a.sku
                    && g.time_ms.abs_diff(t) <= window_ms
            })
            .min_by_key(|(i, g)| (g.time_ms.abs_diff(t), *i));
        if let Some((i, _)) = best {
            used[i] = true;
            tp += 1;
        }
    }
    let n_alerts = alerts.len() as u64;
    let n_gt = thefts.len() as u64;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    ScenarioReport {
        ground_truth_events: n_gt,
        alerts_raised: n_alerts,
        true_positives: tp,
        false_positives: n_alerts - tp,
        false_negatives: n_gt - tp,
        precision: ratio(tp, n_alerts),
        recall: ratio(tp, n_gt),
        frames: 0,
        suspicions: 0,
        stock_discrepancies: 0,
        alert_ids: alerts.iter().map(|a| a.alert_id.clone()).collect(),
    }
}

/// Replay a generated scenario directory with its own configs.
pub fn replay_dir(dir: &Path) -> Result<ScenarioReport, SimError> {
    let scenario = Scenario::read_dir(dir)?;
    let edge_kv = KeyValues::load(&dir.join(EDGE_CONFIG_FILE))?;
    let edge_config = EdgeConfig::from_key_values(&edge_kv)?;
    let cloud_kv = KeyValues::load(&dir.join(CLOUD_CONFIG_FILE))?;
    let cloud_config = CloudConfig::from_key_values(&cloud_kv, dir)?;
    replay(&scenario, edge_config, &cloud_config)
}
