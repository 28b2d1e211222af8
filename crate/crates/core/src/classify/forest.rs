use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impurity::Criterion;
use super::tree::{grow_tree, ClassificationTree, MaxFeatures, TreeParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    #[serde(default = "gini")]
    pub criterion: Criterion,
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn gini() -> Criterion {
    Criterion::Gini
}

fn yes() -> bool {
    true
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            criterion: self.criterion,
            max_depth: self.max_depth,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Spec("n_estimators must be positive".into()));
        }
        self.tree_params().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub(crate) trees: Vec<ClassificationTree>,
    pub(crate) n_classes: usize,
}

/// Stream used for bootstrap draws, kept apart from the split-sampling stream
/// so tree 0 without bootstrap grows exactly like a lone decision tree.
const BOOTSTRAP_SALT: u64 = 0xB007_5712_A9E0_0001;

pub(crate) fn fit_forest(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Forest {
    let n = rows.len();
    let tree_params = params.tree_params();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let sample: Vec<usize> = if params.bootstrap {
                let mut r = rng::substream(rng::derive(seed, BOOTSTRAP_SALT), t as u64);
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut r = rng::substream(seed, t as u64);
            grow_tree(rows, labels, n_classes, sample, &tree_params, &mut r)
        })
        .collect();
    Forest { trees, n_classes }
}

impl Forest {
    /// Hard majority vote; ties go to the lower class index.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_index(x)] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }
}
