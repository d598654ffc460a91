use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledExample, LearnError};
use crate::features::{FeatureVector, FEATURE_DIM};

/// Weights per class: 136 feature weights followed by the bias.
pub(crate) const WEIGHT_LEN: usize = FEATURE_DIM + 1;

/// Multiclass perceptron. Classes iterate in label order, which is also the
/// tie-break order for prediction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearModel {
    pub(crate) weights: BTreeMap<String, Vec<f64>>,
    pub(crate) epochs_trained: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrediction {
    pub label: String,
    pub scores: Vec<(String, f64)>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero-weight model over the given classes.
    pub fn with_classes<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut m = Self::new();
        for c in classes {
            m.ensure_class(&c.into());
        }
        m
    }

    /// Builds a model from explicit weight rows (137 values each).
    pub fn from_weights(
        weights: BTreeMap<String, Vec<f64>>,
        epochs_trained: u64,
    ) -> Result<Self, LearnError> {
        for (label, w) in &weights {
            if label.is_empty() {
                return Err(LearnError::InvalidParameter("empty class label".into()));
            }
            if w.len() != WEIGHT_LEN {
                return Err(LearnError::InvalidParameter(format!(
                    "class {label:?} has {} weights, expected {WEIGHT_LEN}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(LearnError::InvalidParameter(format!(
                    "class {label:?} has non-finite weights"
                )));
            }
        }
        Ok(Self {
            weights,
            epochs_trained,
        })
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn weights(&self, class: &str) -> Option<&[f64]> {
        self.weights.get(class).map(Vec::as_slice)
    }

    pub fn epochs_trained(&self) -> u64 {
        self.epochs_trained
    }

    fn ensure_class(&mut self, label: &str) {
        if !self.weights.contains_key(label) {
            self.weights
                .insert(label.to_string(), vec![0.0; WEIGHT_LEN]);
        }
    }

    fn score(w: &[f64], fv: &FeatureVector) -> f64 {
        let dot: f64 = w[..FEATURE_DIM]
            .iter()
            .zip(fv.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        w[FEATURE_DIM] + dot
    }

    /// Label with the highest score; the first class wins ties.
    fn argmax(&self, fv: &FeatureVector) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (label, w) in &self.weights {
            let s = Self::score(w, fv);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((label, s));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<LinearPrediction, LearnError> {
        let label = self.argmax(fv).ok_or(LearnError::EmptyModel)?.to_string();
        let scores = self
            .weights
            .iter()
            .map(|(l, w)| (l.clone(), Self::score(w, fv)))
            .collect();
        Ok(LinearPrediction { label, scores })
    }

    /// One perceptron step; returns whether the example was misclassified.
    fn update(&mut self, ex: &LabeledExample) -> bool {
        self.ensure_class(&ex.label);
        let predicted = self
            .argmax(&ex.features)
            .expect("at least one class")
            .to_string();
        if predicted == ex.label {
            return false;
        }
        let x = ex.features.as_slice();
        let truth = self.weights.get_mut(&ex.label).expect("class present");
        for (w, v) in truth.iter_mut().zip(x) {
            *w += v;
        }
        truth[FEATURE_DIM] += 1.0;
        let wrong = self.weights.get_mut(&predicted).expect("class present");
        for (w, v) in wrong.iter_mut().zip(x) {
            *w -= v;
        }
        wrong[FEATURE_DIM] -= 1.0;
        true
    }

    /// Returns the model after one online perceptron step on `ex`.
    pub fn train_one(&self, ex: &LabeledExample) -> LinearModel {
        let mut next = self.clone();
        next.update(ex);
        next
    }
}

/// Runs up to `epochs` passes, each over a seeded shuffle of `dataset`,
/// stopping after the first pass without mistakes.
pub fn linear_train_epochs(
    model: &LinearModel,
    dataset: &[LabeledExample],
    epochs: u32,
    seed: u64,
) -> Result<LinearModel, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if epochs == 0 {
        return Err(LearnError::InvalidParameter("epochs must be >= 1".into()));
    }
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut mistakes = 0usize;
        for &i in &order {
            if m.update(&dataset[i]) {
                mistakes += 1;
            }
        }
        m.epochs_trained += 1;
        if mistakes == 0 {
            break;
        }
    }
    Ok(m)
}
