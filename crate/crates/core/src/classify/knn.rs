use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Spec("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Brute-force neighbor store over standardized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborStore {
    pub(crate) rows: Vec<Vec<f64>>,
    pub(crate) labels: Vec<usize>,
    pub(crate) n_classes: usize,
    pub(crate) k: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborStore {
    /// Majority label of the `k` nearest rows (all rows when fewer than `k`).
    /// Tied classes are resolved by whichever holds the single closest
    /// neighbor; exact distance ties between classes fall back to class order.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut dist: Vec<(f64, usize)> = self.rows.iter().enumerate().map(|(i, r)| (sq_dist(r, x), i)).collect();
        let k = self.k.min(dist.len());
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_distance);
            dist.truncate(k);
        }
        let mut votes = vec![0usize; self.n_classes];
        let mut closest = vec![f64::INFINITY; self.n_classes];
        for &(d, i) in &dist {
            let c = self.labels[i];
            votes[c] += 1;
            closest[c] = closest[c].min(d);
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && closest[c] < closest[best]) {
                best = c;
            }
        }
        best
    }
}
