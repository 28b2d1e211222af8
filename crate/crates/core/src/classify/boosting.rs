//! One-vs-rest gradient boosting on logistic loss.
//!
//! Each class gets its own additive model of shallow regression trees fit to
//! the negative gradient `y − σ(F)`; leaves take a single Newton step. Trees
//! are grown level by level over feature orders sorted once per fit, so a
//! level costs `O(n_features · n_samples)` regardless of the number of nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::argmax;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_depth() -> usize {
    3
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Spec("n_estimators must be positive".into()));
        }
        if self.min_samples_leaf < 1 || self.min_samples_split < 2 {
            return Err(Error::Spec("min_samples_leaf ≥ 1 and min_samples_split ≥ 2 required".into()));
        }
        if !(self.learning_rate > 0.0) || self.max_depth == 0 {
            return Err(Error::Spec("learning_rate and max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum RNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<RNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                RNode::Leaf { value } => return *value,
                RNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBooster {
    pub(crate) init: f64,
    pub(crate) trees: Vec<RegressionTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    pub(crate) learning_rate: f64,
    pub(crate) heads: Vec<ClassBooster>,
}

impl BoostingModel {
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        self.heads
            .iter()
            .map(|h| h.init + self.learning_rate * h.trees.iter().map(|t| t.predict(x)).sum::<f64>())
            .collect()
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.raw_scores(x))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Presorted {
    /// per feature: sample indices ordered by value (index breaks ties)
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let order = (0..d)
            .into_par_iter()
            .map(|f| {
                let mut o: Vec<u32> = (0..rows.len() as u32).collect();
                o.sort_by(|&a, &b| rows[a as usize][f].total_cmp(&rows[b as usize][f]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { order }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Fit one regression tree to `residual`, with Newton leaf values
/// `Σ residual / Σ hessian`.
fn fit_regression_tree(
    rows: &[Vec<f64>],
    pre: &Presorted,
    residual: &[f64],
    hessian: &[f64],
    params: &BoostingParams,
) -> RegressionTree {
    let n = rows.len();
    let mut nodes = vec![RNode::Leaf { value: 0.0 }];
    // node id per sample; usize::MAX once the sample's node is final
    let mut node_of = vec![0usize; n];
    let mut frontier = vec![0usize];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        // dense slot per frontier node
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot[id] = s;
        }
        let m = frontier.len();
        let mut count = vec![0usize; m];
        let mut sum = vec![0.0f64; m];
        for i in 0..n {
            if node_of[i] != usize::MAX {
                let s = slot[node_of[i]];
                count[s] += 1;
                sum[s] += residual[i];
            }
        }
        let splittable: Vec<bool> = count
            .iter()
            .map(|&c| c >= params.min_samples_split && c >= 2 * params.min_samples_leaf)
            .collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = pre
            .order
            .par_iter()
            .enumerate()
            .map(|(f, order)| {
                let mut best: Vec<Option<Candidate>> = vec![None; m];
                let mut left_n = vec![0usize; m];
                let mut left_s = vec![0.0f64; m];
                let mut last = vec![f64::NAN; m];
                for &i in order {
                    let i = i as usize;
                    let id = node_of[i];
                    if id == usize::MAX {
                        continue;
                    }
                    let s = slot[id];
                    if !splittable[s] {
                        continue;
                    }
                    let x = rows[i][f];
                    let ln = left_n[s];
                    if ln >= params.min_samples_leaf && count[s] - ln >= params.min_samples_leaf && last[s] < x {
                        let rn = count[s] - ln;
                        let ls = left_s[s];
                        let rs = sum[s] - ls;
                        let gain = ls * ls / ln as f64 + rs * rs / rn as f64 - sum[s] * sum[s] / count[s] as f64;
                        if best[s].is_none_or(|b| gain > b.gain) {
                            let lo = last[s];
                            let mut threshold = lo + (x - lo) / 2.0;
                            if threshold >= x {
                                threshold = lo;
                            }
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                    left_n[s] += 1;
                    left_s[s] += residual[i];
                    last[s] = x;
                }
                best
            })
            .collect();

        let mut next = Vec::new();
        let mut split_of: Vec<Option<(usize, f64, usize, usize)>> = vec![None; m];
        for s in 0..m {
            // features are merged in index order, so equal gains keep the lower feature
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[s] {
                    if best.is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            if let Some(b) = best.filter(|b| b.gain > 1e-12) {
                let left = nodes.len();
                nodes.push(RNode::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(RNode::Leaf { value: 0.0 });
                nodes[frontier[s]] = RNode::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                split_of[s] = Some((b.feature, b.threshold, left, right));
                next.push(left);
                next.push(right);
            }
        }
        for i in 0..n {
            let id = node_of[i];
            if id == usize::MAX {
                continue;
            }
            node_of[i] = match split_of[slot[id]] {
                Some((f, t, l, r)) => {
                    if rows[i][f] <= t {
                        l
                    } else {
                        r
                    }
                }
                None => usize::MAX,
            };
        }
        frontier = next;
    }

    // leaf values from final membership; settled samples need re-routing
    let mut num = vec![0.0f64; nodes.len()];
    let mut den = vec![0.0f64; nodes.len()];
    for i in 0..n {
        let mut at = 0;
        while let RNode::Split {
            feature,
            threshold,
            left,
            right,
        } = &nodes[at]
        {
            at = if rows[i][*feature] <= *threshold { *left } else { *right };
        }
        num[at] += residual[i];
        den[at] += hessian[i];
    }
    for (id, node) in nodes.iter_mut().enumerate() {
        if let RNode::Leaf { value } = node {
            *value = if den[id].abs() < 1e-150 { 0.0 } else { num[id] / den[id] };
        }
    }
    RegressionTree { nodes }
}

pub(crate) fn fit_boosting(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, params: &BoostingParams) -> BoostingModel {
    let pre = Presorted::new(rows);
    let n = rows.len();
    let heads = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { 0.0 }).collect();
            let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-12, 1.0 - 1e-12);
            let init = (p / (1.0 - p)).ln();
            let mut f = vec![init; n];
            let mut trees = Vec::with_capacity(params.n_estimators);
            for _ in 0..params.n_estimators {
                let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
                let residual: Vec<f64> = y.iter().zip(&prob).map(|(y, p)| y - p).collect();
                let hessian: Vec<f64> = prob.iter().map(|p| p * (1.0 - p)).collect();
                let tree = fit_regression_tree(rows, &pre, &residual, &hessian, params);
                for (fi, row) in f.iter_mut().zip(rows) {
                    *fi += params.learning_rate * tree.predict(row);
                }
                trees.push(tree);
            }
            ClassBooster { init, trees }
        })
        .collect();
    BoostingModel {
        learning_rate: params.learning_rate,
        heads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> BoostingParams {
        BoostingParams {
            n_estimators: n,
            min_samples_leaf: 1,
            min_samples_split: 2,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }

    #[test]
    fn regression_tree_finds_the_step() {
        let rows: Vec<Vec<f64>> = (0..8).map(|v| vec![v as f64, 0.0]).collect();
        let residual = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        let hessian = [1.0; 8];
        let pre = Presorted::new(&rows);
        let p = BoostingParams { max_depth: 1, ..params(1) };
        let t = fit_regression_tree(&rows, &pre, &residual, &hessian, &p);
        assert!(matches!(t.nodes[0], RNode::Split { feature: 0, threshold, .. } if threshold == 3.5));
        assert_eq!(t.predict(&[0.0, 0.0]), -1.0);
        assert_eq!(t.predict(&[7.0, 0.0]), 1.0);
    }

    #[test]
    fn boosting_learns_three_bands() {
        let rows: Vec<Vec<f64>> = (0..30).map(|v| vec![v as f64, (v % 7) as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|v| v / 10).collect();
        let m = fit_boosting(&rows, &labels, 3, &params(20));
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict_index(r), l);
        }
    }

    #[test]
    fn more_stages_reduce_training_loss() {
        let rows: Vec<Vec<f64>> = (0..20).map(|v| vec![(v * 7 % 20) as f64]).collect();
        let labels: Vec<usize> = (0..20).map(|v| usize::from(v * 7 % 20 >= 10)).collect();
        let loss = |m: &BoostingModel| -> f64 {
            rows.iter()
                .zip(&labels)
                .map(|(r, &l)| {
                    let p = sigmoid(m.raw_scores(r)[1]);
                    if l == 1 {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum()
        };
        let a = loss(&fit_boosting(&rows, &labels, 2, &params(5)));
        let b = loss(&fit_boosting(&rows, &labels, 2, &params(50)));
        assert!(b < a, "{b} !< {a}");
    }
}
