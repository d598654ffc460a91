use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{linear_train_epochs, KnnModel, LabeledExample, LearnError, LinearModel};

/// Epoch budget for the linear learner inside cross-validation.
pub const DEFAULT_EPOCHS: u32 = 50;
pub const DEFAULT_KNN_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Linear,
    Knn,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Linear => "linear",
            Algorithm::Knn => "knn",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Algorithm::Linear),
            "knn" => Ok(Algorithm::Knn),
            other => Err(format!(
                "unknown algorithm {other:?} (expected linear or knn)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub epochs: u32,
    pub knn_k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            knn_k: DEFAULT_KNN_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub algorithm: Algorithm,
    pub k_folds: usize,
    pub n_examples: usize,
    pub fold_sizes: Vec<usize>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Pooled over all folds; `None` for a class that was never predicted.
    pub per_class_precision: BTreeMap<String, Option<f64>>,
}

/// Stratified, seed-deterministic partition of `0..n` into `k` folds.
///
/// Indices are grouped by label (label order), each group shuffled, and the
/// concatenation dealt round-robin. Fold sizes differ by at most one, and so
/// do each class's counts across folds. Each fold is returned sorted.
pub fn kfold_split<S: AsRef<str>>(
    n: usize,
    k: usize,
    labels: &[S],
    seed: u64,
) -> Result<Vec<Vec<usize>>, LearnError> {
    if k < 2 || k > n {
        return Err(LearnError::BadFoldCount { n, k });
    }
    if labels.len() != n {
        return Err(LearnError::LabelCountMismatch {
            n,
            labels: labels.len(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    let mut slot = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn cross_validate(
    dataset: &[LabeledExample],
    k: usize,
    algorithm: Algorithm,
    seed: u64,
) -> Result<AccuracyReport, LearnError> {
    cross_validate_with(dataset, k, algorithm, seed, &CvConfig::default())
}

type Predictor = Box<dyn Fn(&LabeledExample) -> Result<String, LearnError>>;

pub fn cross_validate_with(
    dataset: &[LabeledExample],
    k: usize,
    algorithm: Algorithm,
    seed: u64,
    config: &CvConfig,
) -> Result<AccuracyReport, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let labels: Vec<&str> = dataset.iter().map(|e| e.label.as_str()).collect();
    let folds = kfold_split(dataset.len(), k, &labels, seed)?;

    let mut in_fold = vec![usize::MAX; dataset.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            in_fold[i] = f;
        }
    }

    // label -> (correct predictions, total predictions)
    let mut predicted_counts: BTreeMap<String, (usize, usize)> =
        labels.iter().map(|l| (l.to_string(), (0, 0))).collect();
    let mut fold_accuracies = Vec::with_capacity(k);

    for (f, members) in folds.iter().enumerate() {
        let train: Vec<LabeledExample> = dataset
            .iter()
            .zip(&in_fold)
            .filter(|(_, &g)| g != f)
            .map(|(e, _)| e.clone())
            .collect();
        let predict: Predictor = match algorithm {
            Algorithm::Linear => {
                let m = linear_train_epochs(
                    &LinearModel::new(),
                    &train,
                    config.epochs,
                    seed.wrapping_add(f as u64),
                )?;
                Box::new(move |e| Ok(m.predict(&e.features)?.label))
            }
            Algorithm::Knn => {
                let m = KnnModel::from_examples(train, config.knn_k)?;
                Box::new(move |e| Ok(m.predict(&e.features)?.label))
            }
        };
        let mut correct = 0usize;
        for &i in members {
            let truth = labels[i];
            let guess = predict(&dataset[i])?;
            let entry = predicted_counts.entry(guess.clone()).or_default();
            entry.1 += 1;
            if guess == truth {
                correct += 1;
                entry.0 += 1;
            }
        }
        fold_accuracies.push(correct as f64 / members.len() as f64);
    }

    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let per_class_precision = predicted_counts
        .into_iter()
        .map(|(label, (hits, predicted))| {
            let p = (predicted > 0).then(|| hits as f64 / predicted as f64);
            (label, p)
        })
        .collect();

    Ok(AccuracyReport {
        algorithm,
        k_folds: k,
        n_examples: dataset.len(),
        fold_sizes: folds.iter().map(Vec::len).collect(),
        fold_accuracies,
        mean_accuracy,
        per_class_precision,
    })
}

/// Higher mean accuracy wins; an exact tie goes to the linear learner.
pub fn select_best(a: &AccuracyReport, b: &AccuracyReport) -> Result<Algorithm, LearnError> {
    if a.n_examples != b.n_examples || a.k_folds != b.k_folds {
        return Err(LearnError::MismatchedReports);
    }
    Ok(if a.mean_accuracy > b.mean_accuracy {
        a.algorithm
    } else if b.mean_accuracy > a.mean_accuracy {
        b.algorithm
    } else if a.algorithm == Algorithm::Linear || b.algorithm == Algorithm::Linear {
        Algorithm::Linear
    } else {
        a.algorithm
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::fv_from;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn report(algorithm: Algorithm, mean: f64, n: usize) -> AccuracyReport {
        AccuracyReport {
            algorithm,
            k_folds: 10,
            n_examples: n,
            fold_sizes: vec![],
            fold_accuracies: vec![mean; 10],
            mean_accuracy: mean,
            per_class_precision: BTreeMap::new(),
        }
    }

    #[test]
    fn singleton_folds() {
        let labels = vec!["a"; 10];
        let folds = kfold_split(10, 10, &labels, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn fold_sizes_for_1103_by_10() {
        let labels: Vec<String> = (0..1103).map(|i| format!("c{}", i % 3)).collect();
        let folds = kfold_split(1103, 10, &labels, 42).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![110; 7], vec![111; 3]].concat());
        assert_eq!(folds, kfold_split(1103, 10, &labels, 42).unwrap());
        assert_ne!(folds, kfold_split(1103, 10, &labels, 43).unwrap());
    }

    #[test]
    fn bad_fold_counts() {
        let labels = vec!["a"; 5];
        assert_eq!(
            kfold_split(5, 1, &labels, 0),
            Err(LearnError::BadFoldCount { n: 5, k: 1 })
        );
        assert_eq!(
            kfold_split(5, 6, &labels, 0),
            Err(LearnError::BadFoldCount { n: 5, k: 6 })
        );
        assert!(matches!(
            kfold_split(5, 2, &labels[..4], 0),
            Err(LearnError::LabelCountMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            labels in proptest::collection::vec(0u8..4, 2..200),
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let n = labels.len();
            let k = 2 + ((n - 2) as f64 * k_frac) as usize;
            let names: Vec<String> = labels.iter().map(|l| format!("L{l}")).collect();
            let folds = kfold_split(n, k, &names, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let all: BTreeSet<usize> = folds.iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), n);
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for class in 0u8..4 {
                let per_fold: Vec<usize> = folds.iter()
                    .map(|f| f.iter().filter(|&&i| labels[i] == class).count())
                    .collect();
                prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
            }
        }
    }

    fn far_clusters() -> Vec<LabeledExample> {
        (0..60)
            .map(|i| {
                let c = (i % 3) as f64 * 100.0;
                let jitter = (i / 3) as f64 * 0.01;
                LabeledExample::new(fv_from(&[c + jitter, -c]), format!("class{}", i % 3)).unwrap()
            })
            .collect()
    }

    #[test]
    fn knn_memorizes_far_clusters() {
        let r = cross_validate(&far_clusters(), 10, Algorithm::Knn, 7).unwrap();
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.fold_accuracies.len(), 10);
        assert!(r.per_class_precision.values().all(|p| *p == Some(1.0)));
    }

    #[test]
    fn reports_are_reproducible() {
        let data = far_clusters();
        for alg in [Algorithm::Linear, Algorithm::Knn] {
            let a = cross_validate(&data, 5, alg, 3).unwrap();
            let b = cross_validate(&data, 5, alg, 3).unwrap();
            assert_eq!(a, b);
            let mean = a.fold_accuracies.iter().sum::<f64>() / 5.0;
            assert!((a.mean_accuracy - mean).abs() <= 1e-12);
            assert!(a.fold_accuracies.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn cv_rejects_small_dataset() {
        let data = far_clusters();
        assert!(matches!(
            cross_validate(&data[..3], 10, Algorithm::Knn, 0),
            Err(LearnError::BadFoldCount { .. })
        ));
        assert_eq!(
            cross_validate(&[], 10, Algorithm::Knn, 0),
            Err(LearnError::EmptyDataset)
        );
    }

    #[test]
    fn selection_rules() {
        let lin = report(Algorithm::Linear, 0.72, 1103);
        let knn = report(Algorithm::Knn, 0.65, 1103);
        assert_eq!(select_best(&lin, &knn).unwrap(), Algorithm::Linear);
        assert_eq!(select_best(&knn, &lin).unwrap(), Algorithm::Linear);
        let knn_hi = report(Algorithm::Knn, 0.8, 1103);
        assert_eq!(select_best(&lin, &knn_hi).unwrap(), Algorithm::Knn);
        let knn_eq = report(Algorithm::Knn, 0.72, 1103);
        assert_eq!(select_best(&knn_eq, &lin).unwrap(), Algorithm::Linear);
        let other = report(Algorithm::Knn, 0.5, 1000);
        assert_eq!(
            select_best(&lin, &other),
            Err(LearnError::MismatchedReports)
        );
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("knn".parse::<Algorithm>().unwrap(), Algorithm::Knn);
        assert_eq!(Algorithm::Linear.to_string(), "linear");
        assert!("svm".parse::<Algorithm>().is_err());
    }
}
