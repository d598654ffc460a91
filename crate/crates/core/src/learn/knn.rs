use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{LabeledExample, LearnError};
use crate::features::{squared_distance, FeatureVector};

/// Memorizing k-nearest-neighbor classifier over Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) examples: Vec<LabeledExample>,
    pub(crate) k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub label: String,
    /// Insertion index of the stored example.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub label: String,
    pub neighbors: Vec<Neighbor>,
}

/// Heap entry ordered by (squared distance, insertion index).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist_sq: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl KnnModel {
    pub fn new(k: usize) -> Result<Self, LearnError> {
        Self::from_examples(Vec::new(), k)
    }

    pub fn from_examples(examples: Vec<LabeledExample>, k: usize) -> Result<Self, LearnError> {
        if k == 0 {
            return Err(LearnError::InvalidParameter("k must be >= 1".into()));
        }
        Ok(Self { examples, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    /// Online training is memorization.
    pub fn train_one(&self, ex: LabeledExample) -> KnnModel {
        let mut next = self.clone();
        next.examples.push(ex);
        next
    }

    /// Majority vote among the `min(k, n)` nearest stored examples.
    ///
    /// Equal distances keep insertion order. Equal vote counts go to the
    /// smaller summed distance, then to the smaller label.
    pub fn predict(&self, fv: &FeatureVector) -> Result<KnnPrediction, LearnError> {
        if self.examples.is_empty() {
            return Err(LearnError::EmptyModel);
        }
        let k = self.k.min(self.examples.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (index, ex) in self.examples.iter().enumerate() {
            let c = Candidate {
                dist_sq: squared_distance(ex.features.as_slice(), fv.as_slice()),
                index,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(c);
            }
        }
        let nearest = heap.into_sorted_vec();

        let neighbors: Vec<Neighbor> = nearest
            .iter()
            .map(|c| Neighbor {
                distance: c.dist_sq.sqrt(),
                label: self.examples[c.index].label.clone(),
                index: c.index,
            })
            .collect();

        let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for n in &neighbors {
            let v = votes.entry(n.label.as_str()).or_insert((0, 0.0));
            v.0 += 1;
            v.1 += n.distance;
        }
        // BTreeMap iterates labels ascending, so keeping the first of equals
        // implements the label-order rule.
        let mut best: Option<(&str, usize, f64)> = None;
        for (label, (count, sum)) in votes {
            let better = match best {
                None => true,
                Some((_, bc, bs)) => count > bc || (count == bc && sum < bs),
            };
            if better {
                best = Some((label, count, sum));
            }
        }
        let label = best.expect("at least one neighbor").0.to_string();
        Ok(KnnPrediction { label, neighbors })
    }
}
