use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn impurity(self, counts: &[usize]) -> f64 {
        match self {
            Criterion::Gini => gini_impurity(counts),
            Criterion::Entropy => entropy_impurity(counts),
        }
    }
}

/// `1 − Σ pᵢ²`. Counts must not all be zero.
pub fn gini_impurity(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// `−Σ pᵢ log₂ pᵢ` with `0·log 0 = 0`.
pub fn entropy_impurity(counts: &[usize]) -> f64 {
    let t: usize = counts.iter().sum();
    let t = t as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(&[1, 1]), 0.5);
        assert_eq!(gini_impurity(&[4]), 0.0);
        assert_eq!(gini_impurity(&[4, 0]), 0.0);
        assert!((gini_impurity(&[3, 1]) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_impurity(&[1, 1]), 1.0);
        assert_eq!(entropy_impurity(&[7, 0]), 0.0);
        // -(0.75 log2 0.75 + 0.25 log2 0.25)
        let expected = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((entropy_impurity(&[3, 1]) - expected).abs() < 1e-15);
        assert!((entropy_impurity(&[3, 1]) - 0.8113).abs() < 1e-4);
    }
}
