//! Local Outlier Factor against a fixed corpus of normal-behavior vectors.
//!
//! For a reference point `o` with k nearest neighbors `N(o)` (itself excluded):
//!
//! ```text
//! reach(a, o) = max(kdist(o), d(a, o))
//! lrd(a)      = 1 / (mean_{o in N(a)} reach(a, o) + eps)
//! lof(q)      = mean_{o in N(q)} lrd(o) / lrd(q)
//! ```
//!
//! Neighbor sets contain exactly k points; distance ties keep the lower index.
//! `eps` keeps densities finite on duplicated points.

use super::LearnError;
use crate::features::{squared_distance, FeatureVector};

pub const DEFAULT_K_LOF: usize = 10;
pub const LOF_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AnomalyModel {
    reference: Vec<FeatureVector>,
    k_lof: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

impl PartialEq for AnomalyModel {
    fn eq(&self, other: &Self) -> bool {
        self.k_lof == other.k_lof && self.reference == other.reference
    }
}

/// The `k` nearest (distance, index) pairs, ascending, skipping `exclude`.
fn nearest(
    points: &[FeatureVector],
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (squared_distance(p.as_slice(), query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all.into_iter().map(|(d, i)| (d.sqrt(), i)).collect()
}

impl AnomalyModel {
    pub fn new(reference: Vec<FeatureVector>, k_lof: usize) -> Result<Self, LearnError> {
        if k_lof == 0 {
            return Err(LearnError::InvalidParameter("k_lof must be >= 1".into()));
        }
        if reference.len() < k_lof + 1 {
            return Err(LearnError::InsufficientReference {
                have: reference.len(),
                need: k_lof + 1,
            });
        }
        let neighborhoods: Vec<Vec<(f64, usize)>> = (0..reference.len())
            .map(|i| nearest(&reference, reference[i].as_slice(), k_lof, Some(i)))
            .collect();
        let k_distance: Vec<f64> = neighborhoods
            .iter()
            .map(|n| n.last().expect("k >= 1").0)
            .collect();
        let lrd = neighborhoods
            .iter()
            .map(|n| local_density(n, &k_distance))
            .collect();
        Ok(Self {
            reference,
            k_lof,
            k_distance,
            lrd,
        })
    }

    pub fn reference(&self) -> &[FeatureVector] {
        &self.reference
    }

    pub fn k_lof(&self) -> usize {
        self.k_lof
    }

    /// LOF of `fv` relative to the reference corpus; about 1 for inliers.
    pub fn score(&self, fv: &FeatureVector) -> f64 {
        let n = nearest(&self.reference, fv.as_slice(), self.k_lof, None);
        let lrd_q = local_density(&n, &self.k_distance);
        let mean_lrd: f64 = n.iter().map(|&(_, i)| self.lrd[i]).sum::<f64>() / n.len() as f64;
        mean_lrd / lrd_q
    }
}

fn local_density(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let total: f64 = neighbors.iter().map(|&(d, i)| d.max(k_distance[i])).sum();
    1.0 / (total / neighbors.len() as f64 + LOF_EPSILON)
}

/// Scores a feature vector; kept as a free function to mirror the other learners.
pub fn lof_score(model: &AnomalyModel, fv: &FeatureVector) -> f64 {
    model.score(fv)
}
