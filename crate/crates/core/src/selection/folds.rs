use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Build from an explicit example → fold map.
    pub fn from_vec(k: usize, fold_of: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {k}")));
        }
        if let Some(&bad) = fold_of.iter().find(|&&f| f >= k) {
            return Err(Error::Config(format!("fold id {bad} out of range for k={k}")));
        }
        Ok(Self { k, fold_of })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// `counts[class][fold]` for the given label indices.
    pub fn class_fold_counts(&self, labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.k]; n_classes];
        for (&c, &f) in labels.iter().zip(&self.fold_of) {
            counts[c][f] += 1;
        }
        counts
    }
}

/// Stratified assignment of examples to `k` folds.
///
/// Each class is shuffled independently and dealt round-robin. The dealing
/// position carries over from one class to the next so that fold sizes stay
/// balanced as well as per-class counts.
pub fn stratified_folds(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if dataset.len() < k {
        return Err(Error::Dataset(format!("{} examples cannot fill {k} folds", dataset.len())));
    }
    let n_classes = dataset.class_set().len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in dataset.labels().iter().enumerate() {
        members[c].push(i);
    }
    let mut r = rng::stream(seed);
    let mut fold_of = vec![0; dataset.len()];
    let mut pos = 0;
    for (c, idx) in members.iter_mut().enumerate() {
        if idx.len() < k {
            tracing::warn!(
                student = %dataset.class_set()[c],
                examples = idx.len(),
                folds = k,
                "class has fewer examples than folds"
            );
        }
        idx.shuffle(&mut r);
        for &i in idx.iter() {
            fold_of[i] = pos % k;
            pos += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}
