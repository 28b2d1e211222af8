use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(pub String);

impl StudentId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StudentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Feature rows with labels. `class_set` is the sorted set of labels that
/// occur; `labels[i]` indexes into it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_set: Vec<StudentId>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<(Vec<f64>, StudentId)>) -> Result<Self> {
        let class_set: Vec<StudentId> = examples
            .iter()
            .map(|(_, s)| s.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut rows = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        for (row, id) in examples {
            labels.push(class_set.binary_search(&id).expect("label collected above"));
            rows.push(row);
        }
        Self::from_parts(rows, labels, class_set)
    }

    pub(crate) fn from_parts(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_set: Vec<StudentId>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::Dataset("examples have no features".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Dataset(format!("example {i} has {} features, expected {d}", r.len())));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self {
            rows,
            labels,
            class_set,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_set(&self) -> &[StudentId] {
        &self.class_set
    }

    pub fn label_of(&self, i: usize) -> &StudentId {
        &self.class_set[self.labels[i]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_set.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Training needs at least two classes.
    pub fn check_trainable(&self) -> Result<()> {
        if self.class_set.len() < 2 {
            return Err(Error::Dataset(format!(
                "training needs at least 2 classes, found {}",
                self.class_set.len()
            )));
        }
        Ok(())
    }

    /// Examples at `indices`, relabelled against the classes that remain.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| (self.rows[i].clone(), self.label_of(i).clone())).collect())
    }

    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != self.rows.len() {
            return Err(Error::Dataset("row count changed".into()));
        }
        Self::from_parts(rows, self.labels.clone(), self.class_set.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_set_is_sorted_and_unique() {
        let ds = LabeledDataset::new(vec![
            (vec![1.0], "b".into()),
            (vec![2.0], "a".into()),
            (vec![3.0], "b".into()),
        ])
        .unwrap();
        assert_eq!(ds.class_set(), &[StudentId::from("a"), StudentId::from("b")]);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.class_counts(), vec![1, 2]);
    }

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(LabeledDataset::new(vec![]).is_err());
        assert!(LabeledDataset::new(vec![(vec![1.0], "a".into()), (vec![1.0, 2.0], "b".into())]).is_err());
    }

    #[test]
    fn single_class_is_not_trainable() {
        let ds = LabeledDataset::new(vec![(vec![1.0], "a".into()), (vec![2.0], "a".into())]).unwrap();
        assert!(ds.check_trainable().is_err());
    }
}
