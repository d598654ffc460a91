//! Brute-force Local Outlier Factor used to certify generated frames.
//!
//! Written from the textbook definition with full sorts and no shared code
//! with the production scorer, so the two can check each other.

pub struct BruteLof {
    points: Vec<Vec<f64>>,
    k: usize,
    kdist: Vec<f64>,
    lrd: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Indices of the k nearest points to `q`, ties to the lower index.
fn knn(points: &[Vec<f64>], q: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..points.len())
        .filter(|&i| Some(i) != skip)
        .map(|i| (i, dist(&points[i], q)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

impl BruteLof {
    /// Needs more than `k` points.
    pub fn new(points: Vec<Vec<f64>>, k: usize) -> Self {
        assert!(
            k >= 1 && points.len() > k,
            "need more than k reference points"
        );
        let hoods: Vec<Vec<(usize, f64)>> = (0..points.len())
            .map(|i| knn(&points, &points[i], k, Some(i)))
            .collect();
        let kdist: Vec<f64> = hoods.iter().map(|h| h[k - 1].1).collect();
        let lrd = hoods
            .iter()
            .map(|h| {
                let reach: f64 = h
                    .iter()
                    .map(|&(o, d)| if kdist[o] > d { kdist[o] } else { d })
                    .sum();
                1.0 / (reach / k as f64 + 1e-10)
            })
            .collect();
        Self {
            points,
            k,
            kdist,
            lrd,
        }
    }

    pub fn score(&self, q: &[f64]) -> f64 {
        let hood = knn(&self.points, q, self.k, None);
        let reach: f64 = hood
            .iter()
            .map(|&(o, d)| if self.kdist[o] > d { self.kdist[o] } else { d })
            .sum();
        let lrd_q = 1.0 / (reach / self.k as f64 + 1e-10);
        let mut ratio = 0.0;
        for &(o, _) in &hood {
            ratio += self.lrd[o] / lrd_q;
        }
        ratio / self.k as f64
    }
}
