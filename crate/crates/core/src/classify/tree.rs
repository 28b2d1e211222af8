//! CART classification trees.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::impurity::Criterion;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    /// Every feature at every split.
    All,
}

impl MaxFeatures {
    /// Candidate features per split: `⌊√d⌋` or `⌊log₂ d⌋`, at least one.
    pub fn count(self, n_features: usize) -> usize {
        let d = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => d.sqrt().floor() as usize,
            MaxFeatures::Log2 => d.log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            max_depth: None,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf < 1 {
            return Err(Error::Spec("min_samples_leaf must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Spec("min_samples_split must be at least 2".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Spec("max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    pub(crate) nodes: Vec<Node>,
}

impl ClassificationTree {
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    mtry: usize,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    child_impurity: f64,
    /// position in the sorted sample order where the right child starts
    pos: usize,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < self.params.min_samples_split || n < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some(best) = self.find_split(&idx) else {
            return id;
        };
        let mut sorted = idx;
        sorted.sort_by(|&a, &b| {
            self.rows[a][best.feature]
                .total_cmp(&self.rows[b][best.feature])
                .then(a.cmp(&b))
        });
        let right_idx = sorted.split_off(best.pos);
        let left = self.grow(sorted, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Features are visited in a random order until `mtry` non-constant ones
    /// have been scanned. Among equally good splits the lower feature index
    /// and then the lower threshold win, so the result does not depend on the
    /// visiting order.
    fn find_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let d = self.rows[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        let min_leaf = self.params.min_samples_leaf;
        let n = idx.len();
        let mut best: Option<BestSplit> = None;
        let mut scanned = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for k in 0..d {
            if scanned >= self.mtry {
                break;
            }
            let swap = self.rng.random_range(k..d);
            order.swap(k, swap);
            let f = order[k];

            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.rows[i][f], self.labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            scanned += 1;

            let mut left = vec![0usize; self.n_classes];
            let mut right = vec![0usize; self.n_classes];
            for &(_, l) in &pairs {
                right[l] += 1;
            }
            for pos in 1..n {
                let l = pairs[pos - 1].1;
                left[l] += 1;
                right[l] -= 1;
                if pos < min_leaf || n - pos < min_leaf || pairs[pos - 1].0 == pairs[pos].0 {
                    continue;
                }
                let (nl, nr) = (pos as f64, (n - pos) as f64);
                let child = (nl * self.params.criterion.impurity(&left) + nr * self.params.criterion.impurity(&right))
                    / n as f64;
                let lo = pairs[pos - 1].0;
                let hi = pairs[pos].0;
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                let better = match &best {
                    None => true,
                    Some(b) => {
                        child < b.child_impurity
                            || (child == b.child_impurity
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        child_impurity: child,
                        pos,
                    });
                }
            }
        }
        best
    }
}

/// Grow a tree on `rows[i]` for every `i` in `sample` (repeats allowed).
/// `rows` are expected to be standardized already.
pub(crate) fn grow_tree(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    sample: Vec<usize>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> ClassificationTree {
    let mtry = params.max_features.count(rows[0].len());
    let mut b = Builder {
        rows,
        labels,
        n_classes,
        params: *params,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    b.grow(sample, 0);
    ClassificationTree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fit(rows: &[Vec<f64>], labels: &[usize], params: TreeParams) -> ClassificationTree {
        let n_classes = labels.iter().max().unwrap() + 1;
        grow_tree(rows, labels, n_classes, (0..rows.len()).collect(), &params, &mut rng::stream(0))
    }

    #[test]
    fn max_features_rounding_on_512() {
        assert_eq!(MaxFeatures::Sqrt.count(512), 22);
        assert_eq!(MaxFeatures::Log2.count(512), 9);
        assert_eq!(MaxFeatures::All.count(512), 512);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }

    #[test]
    fn depth_one_stump_separates_two_groups() {
        let rows: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0].iter().map(|&v| vec![v]).collect();
        let labels = [0, 0, 0, 1, 1, 1];
        let t = fit(
            &rows,
            &labels,
            TreeParams {
                max_depth: Some(1),
                ..Default::default()
            },
        );
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_leaves(), 2);
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict_index(r), l);
        }
        assert!(matches!(t.nodes[0], Node::Split { threshold, .. } if threshold == 6.0));
    }

    #[test]
    fn xor_is_fit_exactly_without_depth_cap() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let labels = [0, 1, 1, 0];
        let t = fit(&rows, &labels, TreeParams::default());
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict_index(r), l);
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|v| vec![v as f64]).collect();
        let labels = [0, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        let t = fit(
            &rows,
            &labels,
            TreeParams {
                min_samples_leaf: 3,
                ..Default::default()
            },
        );
        // the lone class-1 sample cannot be isolated
        assert_eq!(t.predict_index(&[1.0]), 0);
    }

    #[test]
    fn tied_majority_goes_to_lower_class() {
        assert_eq!(majority(&[2, 2, 1]), 0);
        assert_eq!(majority(&[1, 3, 3]), 1);
    }
}
