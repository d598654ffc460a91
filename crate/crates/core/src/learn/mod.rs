//! Online posture classifiers, LOF anomaly scoring, and the k-fold harness.

mod cv;
mod knn;
mod linear;
mod lof;
mod model;

pub use cv::{
    cross_validate, cross_validate_with, kfold_split, select_best, AccuracyReport, Algorithm,
    CvConfig, DEFAULT_EPOCHS, DEFAULT_KNN_K,
};
pub use knn::{KnnModel, KnnPrediction, Neighbor};
pub use linear::{linear_train_epochs, LinearModel, LinearPrediction};
pub use lof::{lof_score, AnomalyModel, DEFAULT_K_LOF, LOF_EPSILON};
pub use model::{deserialize_model, serialize_model, Model, ModelHash, ModelKind};

use std::io::BufRead;

use thiserror::Error;

use crate::features::{normalize_landmarks, parse_labeled_record, FeatureError, FeatureVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("model has no classes or examples")]
    EmptyModel,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("anomaly reference needs at least {need} vectors, got {have}")]
    InsufficientReference { have: usize, need: usize },
    #[error("fold count k={k} must satisfy 2 <= k <= n (n={n})")]
    BadFoldCount { n: usize, k: usize },
    #[error("{labels} labels given for {n} examples")]
    LabelCountMismatch { n: usize, labels: usize },
    #[error("reports differ in dataset size or fold count")]
    MismatchedReports,
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A feature vector with its posture class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: String,
}

impl LabeledExample {
    pub fn new(features: FeatureVector, label: impl Into<String>) -> Result<Self, LearnError> {
        let label = label.into();
        if label.is_empty() {
            return Err(LearnError::InvalidParameter(
                "label must be non-empty".into(),
            ));
        }
        Ok(Self { features, label })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read a labeled landmark NDJSON dataset and normalize every record.
/// Blank lines are skipped.
pub fn read_labeled_dataset(reader: impl BufRead) -> Result<Vec<LabeledExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = |source| DatasetError::Record {
            line: i + 1,
            source,
        };
        let (frame, label) = parse_labeled_record(&line).map_err(record)?;
        let features = normalize_landmarks(&frame).map_err(record)?;
        out.push(LabeledExample { features, label });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn fv_from(prefix: &[f64]) -> FeatureVector {
    let mut v = vec![0.0; crate::features::FEATURE_DIM];
    v[..prefix.len()].copy_from_slice(prefix);
    FeatureVector::new(v).unwrap()
}
