use std::collections::BTreeMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::classify::StudentId;
use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_set: Vec<StudentId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(class_set: Vec<StudentId>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = class_set.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Contract(format!("confusion counts must be {n}x{n}")));
        }
        Ok(Self { class_set, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.class_set.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// True count per class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Predicted count per class.
    pub fn predicted(&self) -> Vec<u64> {
        (0..self.n_classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

pub fn confusion_matrix(truth: &[StudentId], pred: &[StudentId], class_set: &[StudentId]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} truth labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let index: BTreeMap<&StudentId, usize> = class_set.iter().enumerate().map(|(i, s)| (s, i)).collect();
    if index.len() != class_set.len() {
        return Err(Error::Contract("class set has duplicates".into()));
    }
    let lookup = |s: &StudentId| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| Error::Contract(format!("label {s} is not in the class set")))
    };
    let n = class_set.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (t, p) in truth.iter().zip(pred) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        class_set: class_set.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Per-class values weighted by true support.
    #[default]
    Weighted,
    /// Unweighted mean over every class in the class set.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub student: StudentId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn per_class(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let support = cm.support();
    let predicted = cm.predicted();
    (0..cm.n_classes())
        .map(|i| {
            let tp = cm.counts[i][i];
            let p = ratio(tp, predicted[i]);
            let r = ratio(tp, support[i]);
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            ClassMetrics {
                student: cm.class_set[i].clone(),
                precision: p,
                recall: r,
                f1,
                support: support[i],
            }
        })
        .collect()
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    metrics_with(cm, Averaging::Weighted)
}

pub fn metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("no evaluated records".into()));
    }
    let pcs = per_class(cm);
    let avg = |f: fn(&ClassMetrics) -> f64| -> f64 {
        match averaging {
            Averaging::Weighted => pcs.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64,
            Averaging::Macro => pcs.iter().map(f).sum::<f64>() / pcs.len() as f64,
        }
    };
    Ok(Metrics {
        accuracy: ratio(cm.trace(), total),
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
    })
}

/// Chance-corrected agreement between two raters over the same items.
///
/// Computed from integer counts as `(n·a − S) / (n² − S)` where `a` is the
/// number of agreements and `S = Σ_l n₁(l)·n₂(l)`.
pub fn cohen_kappa<T: Ord + Eq + Hash>(rater1: &[T], rater2: &[T]) -> Result<f64> {
    if rater1.len() != rater2.len() {
        return Err(Error::Contract(format!(
            "raters labeled {} and {} items",
            rater1.len(),
            rater2.len()
        )));
    }
    if rater1.is_empty() {
        return Err(Error::Contract("no items to compare".into()));
    }
    let n = rater1.len() as u128;
    let agree = rater1.iter().zip(rater2).filter(|(a, b)| a == b).count() as u128;
    let mut marg: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    for (a, b) in rater1.iter().zip(rater2) {
        marg.entry(a).or_default().0 += 1;
        marg.entry(b).or_default().1 += 1;
    }
    let s: u128 = marg.values().map(|(x, y)| x * y).sum();
    let denom = n * n - s;
    if denom == 0 {
        // Both raters used one and the same label throughout.
        return Ok(1.0);
    }
    Ok(((n * agree) as f64 - s as f64) / denom as f64)
}
