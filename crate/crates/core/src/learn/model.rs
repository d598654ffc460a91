//! Canonical model bytes and content hashes.
//!
//! A model is encoded as compact JSON with a fixed field order, classes in
//! label order and shortest round-trip decimals. Decoding re-encodes and
//! rejects any input that is not byte-identical to the canonical form, so the
//! SHA-256 of the bytes identifies the model.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::linear::WEIGHT_LEN;
use super::{AnomalyModel, KnnModel, LabeledExample, LearnError, LinearModel};
use crate::features::FeatureVector;
use crate::json::{self, FieldError, ObjectReader};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Knn(KnnModel),
    Anomaly(AnomalyModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Knn,
    Anomaly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Knn => "knn",
            ModelKind::Anomaly => "anomaly",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "knn" => Ok(ModelKind::Knn),
            "anomaly" => Ok(ModelKind::Anomaly),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// SHA-256 of canonical model bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelHash(pub [u8; 32]);

impl ModelHash {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Display for ModelHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ModelHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelHash({})", &self.to_hex()[..12])
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Knn(_) => ModelKind::Knn,
            Model::Anomaly(_) => ModelKind::Anomaly,
        }
    }

    pub fn hash(&self) -> ModelHash {
        ModelHash::of(&serialize_model(self))
    }
}

#[derive(Serialize)]
struct LinearRow<'a> {
    label: &'a str,
    weights: &'a [f64],
}

#[derive(Serialize)]
struct KnnRow<'a> {
    label: &'a str,
    features: &'a FeatureVector,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Encoded<'a> {
    Linear {
        epochs_trained: u64,
        classes: Vec<LinearRow<'a>>,
    },
    Knn {
        k: usize,
        examples: Vec<KnnRow<'a>>,
    },
    Anomaly {
        k_lof: usize,
        reference: &'a [FeatureVector],
    },
}

pub fn serialize_model(model: &Model) -> Vec<u8> {
    let encoded = match model {
        Model::Linear(m) => Encoded::Linear {
            epochs_trained: m.epochs_trained,
            classes: m
                .weights
                .iter()
                .map(|(label, weights)| LinearRow { label, weights })
                .collect(),
        },
        Model::Knn(m) => Encoded::Knn {
            k: m.k,
            examples: m
                .examples
                .iter()
                .map(|e| KnnRow {
                    label: &e.label,
                    features: &e.features,
                })
                .collect(),
        },
        Model::Anomaly(m) => Encoded::Anomaly {
            k_lof: m.k_lof(),
            reference: m.reference(),
        },
    };
    serde_json::to_vec(&encoded).expect("model encodes")
}

fn corrupt(e: impl fmt::Display) -> LearnError {
    LearnError::CorruptModel(e.to_string())
}

fn feature_vector(v: &Value, field: &str) -> Result<FeatureVector, LearnError> {
    let values = json::f64_array(v, field).map_err(corrupt)?;
    FeatureVector::new(values).map_err(|e| corrupt(format!("{field}: {e}")))
}

fn usize_field(r: &ObjectReader<'_>, name: &str) -> Result<usize, LearnError> {
    usize::try_from(r.u64(name).map_err(corrupt)?).map_err(corrupt)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Model, LearnError> {
    let value: Value = serde_json::from_slice(bytes).map_err(corrupt)?;
    let r = ObjectReader::new(&value, "").map_err(corrupt)?;
    let kind: ModelKind = r.str("kind").map_err(corrupt)?.parse().map_err(corrupt)?;

    let model = match kind {
        ModelKind::Linear => {
            r.deny_unknown(&["kind", "epochs_trained", "classes"])
                .map_err(corrupt)?;
            let epochs_trained = r.u64("epochs_trained").map_err(corrupt)?;
            let mut weights = std::collections::BTreeMap::new();
            for row in r.array("classes").map_err(corrupt)? {
                let row = ObjectReader::new(row, "classes").map_err(corrupt)?;
                row.deny_unknown(&["label", "weights"]).map_err(corrupt)?;
                let label = row.str("label").map_err(corrupt)?.to_string();
                let w = json::f64_array(row.value("weights").map_err(corrupt)?, "weights")
                    .map_err(corrupt)?;
                if w.len() != WEIGHT_LEN {
                    return Err(corrupt(FieldError::new(
                        "classes.weights",
                        format!("expected {WEIGHT_LEN} values, got {}", w.len()),
                    )));
                }
                if weights.insert(label.clone(), w).is_some() {
                    return Err(corrupt(format!("duplicate class {label:?}")));
                }
            }
            Model::Linear(LinearModel::from_weights(weights, epochs_trained).map_err(corrupt)?)
        }
        ModelKind::Knn => {
            r.deny_unknown(&["kind", "k", "examples"])
                .map_err(corrupt)?;
            let k = usize_field(&r, "k")?;
            let mut examples = Vec::new();
            for row in r.array("examples").map_err(corrupt)? {
                let row = ObjectReader::new(row, "examples").map_err(corrupt)?;
                row.deny_unknown(&["label", "features"]).map_err(corrupt)?;
                let label = row.str("label").map_err(corrupt)?;
                let features =
                    feature_vector(row.value("features").map_err(corrupt)?, "examples.features")?;
                examples.push(LabeledExample::new(features, label).map_err(corrupt)?);
            }
            Model::Knn(KnnModel::from_examples(examples, k).map_err(corrupt)?)
        }
        ModelKind::Anomaly => {
            r.deny_unknown(&["kind", "k_lof", "reference"])
                .map_err(corrupt)?;
            let k_lof = usize_field(&r, "k_lof")?;
            let reference = r
                .array("reference")
                .map_err(corrupt)?
                .iter()
                .map(|v| feature_vector(v, "reference"))
                .collect::<Result<Vec<_>, _>>()?;
            Model::Anomaly(AnomalyModel::new(reference, k_lof).map_err(corrupt)?)
        }
    };

    if serialize_model(&model) != bytes {
        return Err(corrupt("bytes are not in canonical form"));
    }
    Ok(model)
}
