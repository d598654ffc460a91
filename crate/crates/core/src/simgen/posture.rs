//! Labeled posture datasets drawn from Gaussian clusters in feature space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{face_template, frame_from_features, SimError};
use crate::config::{split_list, KeyValues};
use crate::features::{emit_labeled_record, FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct PostureDatasetSpec {
    pub classes: Vec<String>,
    pub n: usize,
    /// One center per class, in class order.
    pub centers: Vec<FeatureVector>,
    /// Per-coordinate standard deviation, one per class.
    pub spreads: Vec<f64>,
    pub seed: u64,
}

pub const POSTURE_SPEC_KEYS: &[&str] = &["classes", "n", "spread", "separation", "seed"];

impl PostureDatasetSpec {
    /// Centers are the face template plus a seeded offset of scale
    /// `separation` per coordinate.
    pub fn with_separation(
        classes: Vec<String>,
        n: usize,
        spread: f64,
        separation: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(separation >= 0.0) || !separation.is_finite() {
            return Err(SimError::InvalidSpec("separation must be >= 0".into()));
        }
        // centers use their own stream so `n` does not shift them
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let base = face_template();
        let offset = Normal::new(0.0, separation.max(f64::MIN_POSITIVE)).expect("valid normal");
        let centers = classes
            .iter()
            .map(|_| {
                let v = base
                    .as_slice()
                    .iter()
                    .map(|b| {
                        b + if separation > 0.0 {
                            offset.sample(&mut rng)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                FeatureVector::new(v).expect("finite")
            })
            .collect();
        let spec = Self {
            spreads: vec![spread; classes.len()],
            classes,
            n,
            centers,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Keys: `classes`, `n`, `spread`, `separation`, `seed`, and optional
    /// `spread.<label>` and `center.<label>` (136 comma-separated values).
    pub fn from_key_values(kv: &KeyValues, default_seed: u64) -> Result<Self, SimError> {
        kv.deny_unknown(POSTURE_SPEC_KEYS, &["spread", "center"])?;
        let classes = match kv.get("classes") {
            Some(v) => split_list(v),
            None => vec!["neutral".into(), "look_away".into(), "reach".into()],
        };
        let mut spec = Self::with_separation(
            classes,
            kv.parsed_or("n", 1103usize)?,
            kv.parsed_or("spread", 0.01)?,
            kv.parsed_or("separation", 0.03)?,
            kv.parsed_or("seed", default_seed)?,
        )?;
        for (label, v) in kv.with_prefix("spread") {
            let i = spec.class_index(label)?;
            spec.spreads[i] = v
                .parse()
                .map_err(|_| SimError::InvalidSpec(format!("spread.{label}: not a number")))?;
        }
        for (label, v) in kv.with_prefix("center") {
            let i = spec.class_index(label)?;
            let values: Result<Vec<f64>, _> = split_list(v).iter().map(|s| s.parse()).collect();
            spec.centers[i] = values
                .ok()
                .and_then(|v| FeatureVector::new(v).ok())
                .ok_or_else(|| {
                    SimError::InvalidSpec(format!("center.{label}: need {FEATURE_DIM} numbers"))
                })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn class_index(&self, label: &str) -> Result<usize, SimError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| SimError::InvalidSpec(format!("`{label}` is not in classes")))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.into()));
        if self.classes.is_empty() {
            return bad("classes must be non-empty");
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return bad("class labels must be unique");
        }
        if self.n < self.classes.len() {
            return bad("n must be at least the number of classes");
        }
        if self.centers.len() != self.classes.len() || self.spreads.len() != self.classes.len() {
            return bad("one center and one spread per class");
        }
        if self.spreads.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("spread must be > 0");
        }
        Ok(())
    }
}

/// Draw the examples as (features, label), in output order.
pub fn sample_postures(
    spec: &PostureDatasetSpec,
) -> Result<Vec<(FeatureVector, String)>, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.classes.len();
    let mut order: Vec<usize> = (0..spec.n).map(|j| j % c).collect();
    order.shuffle(&mut rng);
    Ok(order
        .into_iter()
        .map(|class| {
            let noise = Normal::new(0.0, spec.spreads[class]).expect("spread > 0");
            let v = spec.centers[class]
                .as_slice()
                .iter()
                .map(|m| m + noise.sample(&mut rng))
                .collect();
            (
                FeatureVector::new(v).expect("finite"),
                spec.classes[class].clone(),
            )
        })
        .collect())
}

/// Labeled landmark NDJSON lines, one per example.
pub fn gen_posture_dataset(spec: &PostureDatasetSpec) -> Result<Vec<String>, SimError> {
    Ok(sample_postures(spec)?
        .iter()
        .enumerate()
        .map(|(j, (fv, label))| {
            let frame = frame_from_features(fv, "dataset", j as u64 + 1, j as u64 * 40);
            emit_labeled_record(&frame, label)
        })
        .collect())
}
