use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Per-feature affine map to zero mean and unit population variance.
/// Constant features pass through with scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

pub fn fit_standardizer(train: &LabeledDataset) -> Standardizer {
    Standardizer::fit(train.rows())
}

pub fn standardize(s: &Standardizer, v: &[f64]) -> Result<Vec<f64>> {
    s.transform(v)
}

impl Standardizer {
    /// `rows` must be non-empty and rectangular.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scale = vec![0.0; d];
        for (j, s) in scale.iter_mut().enumerate() {
            let first = rows[0][j];
            if rows.iter().all(|r| r[j] == first) {
                *s = 1.0;
                continue;
            }
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            *s = if sd > 0.0 { sd } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::Contract(format!(
                "vector has {} features, standardizer expects {}",
                v.len(),
                self.mean.len()
            )));
        }
        Ok(v.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect())
    }

    pub fn transform_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Standardizer {
        Standardizer::fit(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn symmetric_pair() {
        let s = col(&[0.0, 2.0]);
        assert_eq!((s.mean[0], s.scale[0]), (1.0, 1.0));
    }

    #[test]
    fn constant_column_passes_through() {
        let s = col(&[5.0, 5.0, 5.0]);
        assert_eq!((s.mean[0], s.scale[0]), (5.0, 1.0));
        let s = col(&[0.1, 0.1, 0.1]);
        assert_eq!(s.scale[0], 1.0);
    }

    #[test]
    fn population_sd() {
        let s = col(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean[0], 2.5);
        // sqrt(((1.5^2 + 0.5^2) * 2) / 4) = sqrt(1.25)
        assert!((s.scale[0] - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((s.scale[0] - 1.1180).abs() < 1e-4);
    }

    #[test]
    fn transform_examples() {
        let s = Standardizer {
            mean: vec![1.0],
            scale: vec![1.0],
        };
        assert_eq!(s.transform(&[4.0]).unwrap(), vec![3.0]);
        assert_eq!(s.transform(&[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(s.transform(&[1.0, 2.0]), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn standardized_columns_have_zero_mean_unit_variance(
            rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 4), 2..40)
        ) {
            let s = Standardizer::fit(&rows);
            let z = s.transform_rows(&rows).unwrap();
            let n = rows.len() as f64;
            for j in 0..4 {
                let constant = rows.iter().all(|r| r[j] == rows[0][j]);
                let m = z.iter().map(|r| r[j]).sum::<f64>() / n;
                prop_assert!(m.abs() < 1e-9);
                if !constant {
                    let v = z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
                    prop_assert!((v - 1.0).abs() < 1e-6, "variance {}", v);
                }
            }
        }
    }
}
