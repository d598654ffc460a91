//! Shop timelines with planted thefts.
//!
//! Every customer visit is a burst of landmark frames on one camera and,
//! usually, one item taken from a shelf that camera watches. Honest customers
//! ring the item up at pick time. A theft takes the item without a sale while
//! a few frames in the burst show an out-of-distribution posture. The two
//! variant modes keep only one of those signals.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::oracle::BruteLof;
use super::{face_template, frame_from_features, SimError};
use crate::cloud::ItemRecord;
use crate::config::{split_list, KeyValues};
use crate::features::{
    emit_landmark_record, normalize_landmarks, parse_landmark_record, FeatureVector, LandmarkFrame,
};
use crate::learn::{deserialize_model, serialize_model, AnomalyModel, Model};
use crate::protocol::{SaleEvent, ShelfObservation};

/// Normal frames are kept only below this oracle score.
pub const NORMAL_LOF_CEILING: f64 = 1.2;
/// Theft frames must score above this under the oracle.
pub const ANOMALY_LOF_FLOOR: f64 = 1.5;
/// Minimum gap between consecutive planted thefts.
pub const MIN_THEFT_SPACING_MS: u64 = 20_000;
const MAX_DRAWS: usize = 1_000;
/// Frames per theft burst that show the anomalous posture.
const ANOMALOUS_FRAMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    /// Thefts show both an anomalous posture and a shelf loss.
    Both,
    /// Anomalous postures, nothing taken.
    AnomalyOnly,
    /// Items taken, posture looks normal.
    StockOnly,
}

impl fmt::Display for ScenarioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioMode::Both => "both",
            ScenarioMode::AnomalyOnly => "anomaly_only",
            ScenarioMode::StockOnly => "stock_only",
        })
    }
}

impl FromStr for ScenarioMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(Self::Both),
            "anomaly_only" => Ok(Self::AnomalyOnly),
            "stock_only" => Ok(Self::StockOnly),
            _ => Err(format!(
                "unknown mode `{s}` (both, anomaly_only, stock_only)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub duration_ms: u64,
    pub n_customers: usize,
    pub n_shoplifts: usize,
    pub seed: u64,
    pub mode: ScenarioMode,
    /// SKU and initial shelf stock.
    pub skus: Vec<(String, i64)>,
    /// Zone and the SKUs shelved there.
    pub zones: Vec<(String, Vec<String>)>,
    /// Camera and the zones it watches.
    pub cameras: Vec<(String, Vec<String>)>,
    pub frames_per_visit: usize,
    pub frame_interval_ms: u64,
    pub observation_interval_ms: u64,
    pub reference_size: usize,
    pub k_lof: usize,
    /// Per-coordinate posture noise of normal frames.
    pub noise: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self {
            duration_ms: 600_000,
            n_customers: 100,
            n_shoplifts: 10,
            seed: 42,
            mode: ScenarioMode::Both,
            skus: ["tea", "coffee", "gum", "soap", "razor", "battery"]
                .iter()
                .map(|s| (s.to_string(), 40))
                .collect(),
            zones: vec![
                ("drinks".into(), s(&["tea", "coffee", "gum"])),
                ("care".into(), s(&["soap", "razor", "battery"])),
            ],
            cameras: vec![
                ("cam-1".into(), s(&["drinks"])),
                ("cam-2".into(), s(&["care"])),
            ],
            frames_per_visit: 10,
            frame_interval_ms: 500,
            observation_interval_ms: 5_000,
            reference_size: 200,
            k_lof: 10,
            noise: 0.01,
        }
    }
}

pub const SCENARIO_SPEC_KEYS: &[&str] = &[
    "duration_ms",
    "n_customers",
    "n_shoplifts",
    "seed",
    "mode",
    "frames_per_visit",
    "frame_interval_ms",
    "observation_interval_ms",
    "reference_size",
    "k_lof",
    "noise",
];

impl ScenarioSpec {
    /// Layout keys `sku.<id>=<stock>`, `zone.<id>=<skus>` and
    /// `camera.<id>=<zones>` replace the default layout when any is present.
    pub fn from_key_values(kv: &KeyValues, default_seed: u64) -> Result<Self, SimError> {
        kv.deny_unknown(SCENARIO_SPEC_KEYS, &["sku", "zone", "camera"])?;
        let d = Self::default();
        let mode = match kv.get("mode") {
            Some(m) => m.parse().map_err(SimError::InvalidSpec)?,
            None => d.mode,
        };
        let custom = kv.with_prefix("sku").next().is_some()
            || kv.with_prefix("zone").next().is_some()
            || kv.with_prefix("camera").next().is_some();
        let (skus, zones, cameras) = if custom {
            let skus = kv
                .with_prefix("sku")
                .map(|(k, v)| {
                    v.parse().map(|n| (k.to_string(), n)).map_err(|_| {
                        SimError::InvalidSpec(format!("sku.{k}: stock must be an integer"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let list = |p: &str| -> Vec<(String, Vec<String>)> {
                kv.with_prefix(p)
                    .map(|(k, v)| (k.to_string(), split_list(v)))
                    .collect()
            };
            (skus, list("zone"), list("camera"))
        } else {
            (d.skus, d.zones, d.cameras)
        };
        let spec = Self {
            duration_ms: kv.parsed_or("duration_ms", d.duration_ms)?,
            n_customers: kv.parsed_or("n_customers", d.n_customers)?,
            n_shoplifts: kv.parsed_or("n_shoplifts", d.n_shoplifts)?,
            seed: kv.parsed_or("seed", default_seed)?,
            mode,
            skus,
            zones,
            cameras,
            frames_per_visit: kv.parsed_or("frames_per_visit", d.frames_per_visit)?,
            frame_interval_ms: kv.parsed_or("frame_interval_ms", d.frame_interval_ms)?,
            observation_interval_ms: kv
                .parsed_or("observation_interval_ms", d.observation_interval_ms)?,
            reference_size: kv.parsed_or("reference_size", d.reference_size)?,
            k_lof: kv.parsed_or("k_lof", d.k_lof)?,
            noise: kv.parsed_or("noise", d.noise)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn visit_len_ms(&self) -> u64 {
        self.frames_per_visit as u64 * self.frame_interval_ms
    }

    /// Offset of the pick within a visit; the anomalous frames end on it.
    fn pick_offset_ms(&self) -> u64 {
        (self.frames_per_visit / 2) as u64 * self.frame_interval_ms
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidSpec(m));
        let infeasible = |m: String| Err(SimError::InfeasibleSpec(m));
        if self.n_shoplifts > self.n_customers {
            return invalid("n_shoplifts must not exceed n_customers".into());
        }
        if self.frames_per_visit < 2 * ANOMALOUS_FRAMES || self.frame_interval_ms == 0 {
            return invalid(format!(
                "frames_per_visit must be >= {} and frame_interval_ms >= 1",
                2 * ANOMALOUS_FRAMES
            ));
        }
        if self.observation_interval_ms == 0 {
            return invalid("observation_interval_ms must be >= 1".into());
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return invalid("noise must be > 0".into());
        }
        if self.k_lof == 0 || self.reference_size <= self.k_lof {
            return invalid("need 1 <= k_lof < reference_size".into());
        }
        if self.duration_ms < self.visit_len_ms() {
            return invalid("duration_ms is shorter than one visit".into());
        }
        let mut shelved = BTreeMap::new();
        for (zone, skus) in &self.zones {
            for sku in skus {
                if !self.skus.iter().any(|(s, _)| s == sku) {
                    return invalid(format!("zone {zone} lists unknown sku {sku}"));
                }
                if shelved.insert(sku.clone(), zone.clone()).is_some() {
                    return invalid(format!("sku {sku} is shelved in two zones"));
                }
            }
        }
        if let Some((s, _)) = self.skus.iter().find(|(s, _)| !shelved.contains_key(s)) {
            return invalid(format!("sku {s} is in no zone"));
        }
        if let Some((s, n)) = self.skus.iter().find(|(_, n)| *n < 0) {
            return invalid(format!("sku {s} has negative stock {n}"));
        }
        for (cam, zones) in &self.cameras {
            if let Some(z) = zones
                .iter()
                .find(|z| !self.zones.iter().any(|(id, _)| id == *z))
            {
                return invalid(format!("camera {cam} watches unknown zone {z}"));
            }
        }
        if self.cameras.iter().all(|(_, z)| z.is_empty()) {
            return infeasible("no camera watches any zone".into());
        }
        let total: i64 = self.skus.iter().map(|(_, n)| n).sum();
        if (total as u64) < self.n_customers as u64 {
            return infeasible(format!(
                "{total} items in stock cannot serve {} customers",
                self.n_customers
            ));
        }
        if self.n_shoplifts > 0 {
            let slot = self.duration_ms / self.n_shoplifts as u64;
            if slot < MIN_THEFT_SPACING_MS.max(self.visit_len_ms()) {
                return infeasible(format!(
                    "{} thefts need {} ms slots but only {slot} ms are available",
                    self.n_shoplifts,
                    MIN_THEFT_SPACING_MS.max(self.visit_len_ms())
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    Theft,
    AnomalyOnly,
    StockOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub kind: InjectionKind,
    /// Pick time, or the would-be pick time for anomaly-only visits.
    pub time_ms: u64,
    pub camera_id: String,
    pub sku: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<LandmarkFrame>,
    pub sales: Vec<SaleEvent>,
    pub observations: Vec<ShelfObservation>,
    pub ground_truth: Vec<GroundTruth>,
    pub catalog: Vec<ItemRecord>,
    pub reference: AnomalyModel,
    pub cameras: Vec<(String, Vec<String>)>,
}

struct Visit {
    start_ms: u64,
    camera: String,
    kind: Option<InjectionKind>,
}

pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Scenario, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let template = face_template();
    let noise = Normal::new(0.0, spec.noise).expect("noise > 0");
    let draw_normal = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        template
            .as_slice()
            .iter()
            .map(|m| m + noise.sample(rng))
            .collect()
    };

    let reference_raw: Vec<Vec<f64>> = (0..spec.reference_size)
        .map(|_| draw_normal(&mut rng))
        .collect();
    let reference = AnomalyModel::new(
        reference_raw
            .iter()
            .map(|v| FeatureVector::new(v.clone()).expect("finite"))
            .collect(),
        spec.k_lof,
    )?;
    let oracle = BruteLof::new(reference_raw, spec.k_lof);

    // certify on what the edge will see: the re-normalized frame
    let certify = |fv: Vec<f64>, accept: &dyn Fn(f64) -> bool| -> Option<FeatureVector> {
        let fv = FeatureVector::new(fv).ok()?;
        let seen = normalize_landmarks(&frame_from_features(&fv, "c", 1, 0)).ok()?;
        accept(oracle.score(seen.as_slice())).then_some(fv)
    };
    let normal_frame = |rng: &mut ChaCha8Rng| -> Result<FeatureVector, SimError> {
        (0..MAX_DRAWS)
            .find_map(|_| certify(draw_normal(rng), &|s| s < NORMAL_LOF_CEILING))
            .ok_or_else(|| {
                SimError::Guarantee(format!("no normal frame below LOF {NORMAL_LOF_CEILING}"))
            })
    };
    let anomalous_frame = |rng: &mut ChaCha8Rng| -> Result<FeatureVector, SimError> {
        (0..MAX_DRAWS)
            .find_map(|_| {
                // head dropped toward the shelf and turned aside
                let dy = rng.gen_range(0.10..0.16);
                let dx = rng.gen_range(-0.08..0.08);
                let mut v = draw_normal(rng);
                let half = v.len() / 2;
                v[..half].iter_mut().for_each(|x| *x += dx);
                v[half..].iter_mut().for_each(|y| *y += dy);
                certify(v, &|s| s > ANOMALY_LOF_FLOOR)
            })
            .ok_or_else(|| {
                SimError::Guarantee(format!("no anomalous frame above LOF {ANOMALY_LOF_FLOOR}"))
            })
    };

    let cameras: Vec<&(String, Vec<String>)> =
        spec.cameras.iter().filter(|(_, z)| !z.is_empty()).collect();
    let mut visits = Vec::with_capacity(spec.n_customers);
    let injection = match spec.mode {
        ScenarioMode::Both => InjectionKind::Theft,
        ScenarioMode::AnomalyOnly => InjectionKind::AnomalyOnly,
        ScenarioMode::StockOnly => InjectionKind::StockOnly,
    };
    if spec.n_shoplifts > 0 {
        let slot = spec.duration_ms / spec.n_shoplifts as u64;
        for i in 0..spec.n_shoplifts as u64 {
            visits.push(Visit {
                start_ms: i * slot + (slot - spec.visit_len_ms()) / 2,
                camera: cameras[rng.gen_range(0..cameras.len())].0.clone(),
                kind: Some(injection),
            });
        }
    }
    let latest_start = spec.duration_ms - spec.visit_len_ms();
    for _ in spec.n_shoplifts..spec.n_customers {
        visits.push(Visit {
            start_ms: rng.gen_range(0..=latest_start),
            camera: cameras[rng.gen_range(0..cameras.len())].0.clone(),
            kind: None,
        });
    }
    visits.sort_by_key(|v| v.start_ms);

    let zone_skus: BTreeMap<&str, &Vec<String>> =
        spec.zones.iter().map(|(z, s)| (z.as_str(), s)).collect();
    let camera_zones: BTreeMap<&str, &Vec<String>> =
        spec.cameras.iter().map(|(c, z)| (c.as_str(), z)).collect();
    let mut shelf: BTreeMap<String, i64> = spec.skus.iter().cloned().collect();
    // (time, sku, delta) of shelf changes
    let mut removals: Vec<(u64, String)> = Vec::new();
    let mut sales = Vec::new();
    let mut ground_truth = Vec::new();
    let mut raw_frames: Vec<(u64, String, FeatureVector)> = Vec::new();

    for v in &visits {
        let pick_ms = v.start_ms + spec.pick_offset_ms();
        let visible: Vec<&String> = camera_zones[v.camera.as_str()]
            .iter()
            .flat_map(|z| zone_skus[z.as_str()].iter())
            .collect();
        let takes = !matches!(v.kind, Some(InjectionKind::AnomalyOnly));
        let in_stock: Vec<&String> = visible.iter().copied().filter(|s| shelf[*s] > 0).collect();
        let sku = if takes {
            in_stock.choose(&mut rng).map(|s| s.to_string())
        } else {
            visible.choose(&mut rng).map(|s| s.to_string())
        };
        if v.kind.is_some_and(|k| k != InjectionKind::AnomalyOnly) && sku.is_none() {
            return Err(SimError::InfeasibleSpec(format!(
                "no stock left for a theft on {} at {pick_ms} ms",
                v.camera
            )));
        }
        if let (true, Some(s)) = (takes, &sku) {
            *shelf.get_mut(s).unwrap() -= 1;
            removals.push((pick_ms, s.clone()));
            if v.kind.is_none() {
                sales.push(SaleEvent {
                    sku: s.clone(),
                    quantity: 1,
                    terminal_id: "pos-1".into(),
                    timestamp_ms: pick_ms,
                });
            }
        }
        if let (Some(kind), Some(s)) = (v.kind, &sku) {
            ground_truth.push(GroundTruth {
                kind,
                time_ms: pick_ms,
                camera_id: v.camera.clone(),
                sku: s.clone(),
            });
        }
        let anomalous = matches!(
            v.kind,
            Some(InjectionKind::Theft | InjectionKind::AnomalyOnly)
        );
        let first_odd = spec.frames_per_visit / 2 + 1 - ANOMALOUS_FRAMES;
        for f in 0..spec.frames_per_visit {
            let fv = if anomalous && (first_odd..first_odd + ANOMALOUS_FRAMES).contains(&f) {
                anomalous_frame(&mut rng)?
            } else {
                normal_frame(&mut rng)?
            };
            raw_frames.push((
                v.start_ms + f as u64 * spec.frame_interval_ms,
                v.camera.clone(),
                fv,
            ));
        }
    }

    raw_frames.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut seqs: BTreeMap<String, u64> = BTreeMap::new();
    let frames = raw_frames
        .into_iter()
        .map(|(ts, cam, fv)| {
            let seq = seqs.entry(cam.clone()).or_insert(0);
            *seq += 1;
            frame_from_features(&fv, &cam, *seq, ts)
        })
        .collect();

    let zone_of: BTreeMap<&str, &str> = spec
        .zones
        .iter()
        .flat_map(|(z, skus)| skus.iter().map(move |s| (s.as_str(), z.as_str())))
        .collect();
    let watcher = |sku: &str| -> String {
        spec.cameras
            .iter()
            .find(|(_, zones)| zones.iter().any(|z| z == zone_of[sku]))
            .map(|(c, _)| c.clone())
            .unwrap_or_else(|| "shelf-counter".into())
    };
    removals.sort();
    let mut observations = Vec::new();
    let mut counts: BTreeMap<String, i64> = spec.skus.iter().cloned().collect();
    let mut next_removal = 0;
    let mut t = spec.observation_interval_ms;
    while t <= spec.duration_ms {
        while next_removal < removals.len() && removals[next_removal].0 <= t {
            *counts.get_mut(&removals[next_removal].1).unwrap() -= 1;
            next_removal += 1;
        }
        for (sku, _) in &spec.skus {
            observations.push(ShelfObservation {
                sku: sku.clone(),
                observed_count: counts[sku] as u64,
                camera_id: watcher(sku),
                timestamp_ms: t,
            });
        }
        t += spec.observation_interval_ms;
    }

    let catalog = spec
        .skus
        .iter()
        .map(|(sku, stock)| ItemRecord {
            sku: sku.clone(),
            name: sku.clone(),
            recorded_stock: *stock,
            zone: zone_of[sku.as_str()].to_string(),
            backroom: 0,
        })
        .collect();

    Ok(Scenario {
        frames,
        sales,
        observations,
        ground_truth,
        catalog,
        reference,
        cameras: spec.cameras.clone(),
    })
}

pub const LANDMARKS_FILE: &str = "landmarks.ndjson";
pub const SALES_FILE: &str = "sales.ndjson";
pub const OBSERVATIONS_FILE: &str = "observations.ndjson";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.ndjson";
pub const CATALOG_FILE: &str = "catalog.ndjson";
pub const REFERENCE_FILE: &str = "reference.model";
pub const EDGE_CONFIG_FILE: &str = "edge.conf";
pub const CLOUD_CONFIG_FILE: &str = "cloud.conf";

fn write_lines<T>(path: &Path, items: &[T], f: impl Fn(&T) -> String) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        writeln!(w, "{}", f(item))?;
    }
    w.flush()
}

fn read_lines<T>(
    dir: &Path,
    name: &str,
    f: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, SimError> {
    let err = |reason: String| SimError::ScenarioFile {
        file: name.into(),
        reason,
    };
    let file = File::open(dir.join(name)).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(f(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

fn de<T: serde::de::DeserializeOwned>(line: &str) -> Result<T, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

impl Scenario {
    /// Write the timeline files plus matching edge and cloud configs.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        write_lines(
            &dir.join(LANDMARKS_FILE),
            &self.frames,
            emit_landmark_record,
        )?;
        write_lines(&dir.join(SALES_FILE), &self.sales, json)?;
        write_lines(&dir.join(OBSERVATIONS_FILE), &self.observations, json)?;
        write_lines(&dir.join(GROUND_TRUTH_FILE), &self.ground_truth, json)?;
        write_lines(&dir.join(CATALOG_FILE), &self.catalog, json)?;
        fs::write(
            dir.join(REFERENCE_FILE),
            serialize_model(&Model::Anomaly(self.reference.clone())),
        )?;
        let cams: Vec<&str> = self.cameras.iter().map(|(c, _)| c.as_str()).collect();
        fs::write(
            dir.join(EDGE_CONFIG_FILE),
            format!(
                "edge_id=edge-sim\ncamera_ids={}\nanomaly_model={REFERENCE_FILE}\n",
                cams.join(",")
            ),
        )?;
        let mut cloud = format!("catalog={CATALOG_FILE}\nnotifiers=stdout\n");
        for (cam, zones) in &self.cameras {
            cloud.push_str(&format!("camera.{cam}={}\n", zones.join(",")));
        }
        fs::write(dir.join(CLOUD_CONFIG_FILE), cloud)?;
        Ok(())
    }

    /// Read back what [`Scenario::write_dir`] wrote. Configs are read by the
    /// replay, not here; `cameras` comes from the cloud config.
    pub fn read_dir(dir: &Path) -> Result<Self, SimError> {
        let frames = read_lines(dir, LANDMARKS_FILE, |l| {
            parse_landmark_record(l).map_err(|e| e.to_string())
        })?;
        let sales = read_lines(dir, SALES_FILE, de::<SaleEvent>)?;
        let observations = read_lines(dir, OBSERVATIONS_FILE, de::<ShelfObservation>)?;
        let ground_truth = read_lines(dir, GROUND_TRUTH_FILE, de::<GroundTruth>)?;
        let catalog = read_lines(dir, CATALOG_FILE, de::<ItemRecord>)?;
        let model_err = |reason: String| SimError::ScenarioFile {
            file: REFERENCE_FILE.into(),
            reason,
        };
        let bytes = fs::read(dir.join(REFERENCE_FILE)).map_err(|e| model_err(e.to_string()))?;
        let reference = match deserialize_model(&bytes).map_err(|e| model_err(e.to_string()))? {
            Model::Anomaly(m) => m,
            other => {
                return Err(model_err(format!(
                    "expected an anomaly model, found {}",
                    other.kind()
                )))
            }
        };
        let kv = KeyValues::load(&dir.join(CLOUD_CONFIG_FILE))?;
        let cameras = kv
            .with_prefix("camera")
            .map(|(c, z)| (c.to_string(), split_list(z)))
            .collect();
        Ok(Self {
            frames,
            sales,
            observations,
            ground_truth,
            catalog,
            reference,
            cameras,
        })
    }
}
