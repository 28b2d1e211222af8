//! One-vs-rest kernel support vector machines trained with an SMO solver.
//!
//! The dual is solved with maximal-violating-pair working set selection, in
//! the formulation popularized by LIBSVM: minimize `½αᵀQα − eᵀα` subject to
//! `0 ≤ α ≤ C` and `yᵀα = 0`, with `Q_ij = y_i y_j K(x_i, x_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
    Linear,
    Poly,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / n_features`
    Auto,
    /// `1 / (n_features · Var(X))` over all training entries
    Scale,
}

pub const POLY_DEGREE: i32 = 3;
pub const COEF0: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    pub kernel: Kernel,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-3
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Spec(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Spec("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub kind: Kernel,
    pub gamma: f64,
}

impl KernelFn {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d).exp()
            }
            Kernel::Poly => (self.gamma * dot(a, b) + COEF0).powi(POLY_DEGREE),
            Kernel::Sigmoid => (self.gamma * dot(a, b) + COEF0).tanh(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn resolve_gamma(gamma: Gamma, rows: &[Vec<f64>]) -> f64 {
    let d = rows[0].len() as f64;
    match gamma {
        Gamma::Auto => 1.0 / d,
        Gamma::Scale => {
            let n = (rows.len() * rows[0].len()) as f64;
            let mean = rows.iter().flatten().sum::<f64>() / n;
            let var = rows.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (d * var)
            } else {
                1.0
            }
        }
    }
}

/// Decision function of one binary head: `Σ coef_i K(sv_i, x) − rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHead {
    /// indices into the shared support row table
    pub(crate) support: Vec<usize>,
    pub(crate) coef: Vec<f64>,
    pub(crate) rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub(crate) kernel: KernelFn,
    pub(crate) support_rows: Vec<Vec<f64>>,
    pub(crate) heads: Vec<BinaryHead>,
}

impl SvmModel {
    pub fn decision_scores(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.support_rows.iter().map(|r| self.kernel.eval(r, x)).collect();
        self.heads
            .iter()
            .map(|h| h.support.iter().zip(&h.coef).map(|(&i, c)| c * k[i]).sum::<f64>() - h.rho)
            .collect()
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.decision_scores(x))
    }
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

const TAU: f64 = 1e-12;

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
}

/// Solve one binary dual. `y` holds ±1.
fn solve_binary(kmat: &[f64], n: usize, y: &[f64], c: f64, tol: f64) -> Solution {
    let q = |i: usize, j: usize| y[i] * y[j] * kmat[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(100_000);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && !upper(alpha[t])) || (y[t] < 0.0 && !lower(alpha[t]));
            let in_low = (y[t] > 0.0 && !lower(alpha[t])) || (y[t] < 0.0 && !upper(alpha[t]));
            if in_up && v > gmax {
                gmax = v;
                i_sel = t;
            }
            if in_low && v < gmin {
                gmin = v;
                j_sel = t;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin < tol {
            break;
        }
        iter += 1;
        if iter > max_iter {
            tracing::warn!(max_iter, "SMO stopped at the iteration cap");
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        if dai == 0.0 && daj == 0.0 {
            break;
        }
        for t in 0..n {
            grad[t] += q(t, i) * dai + q(t, j) * daj;
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Solution { alpha, rho }
}

pub(crate) fn fit_svm(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, params: &SvmParams) -> SvmModel {
    let n = rows.len();
    let kernel = KernelFn {
        kind: params.kernel,
        gamma: resolve_gamma(params.gamma, rows),
    };
    let kmat: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| kernel.eval(&rows[ij / n], &rows[ij % n]))
        .collect();
    let solutions: Vec<Solution> = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            solve_binary(&kmat, n, &y, params.c, params.tol)
        })
        .collect();

    let mut used = vec![false; n];
    for s in &solutions {
        for (u, &a) in used.iter_mut().zip(&s.alpha) {
            *u |= a > 0.0;
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut support_rows = Vec::new();
    for i in 0..n {
        if used[i] {
            remap[i] = support_rows.len();
            support_rows.push(rows[i].clone());
        }
    }
    let heads = solutions
        .iter()
        .enumerate()
        .map(|(class, s)| {
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for i in 0..n {
                if s.alpha[i] > 0.0 {
                    support.push(remap[i]);
                    let yi = if labels[i] == class { 1.0 } else { -1.0 };
                    coef.push(s.alpha[i] * yi);
                }
            }
            BinaryHead {
                support,
                coef,
                rho: s.rho,
            }
        })
        .collect();
    SvmModel {
        kernel,
        support_rows,
        heads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [[-3.0, 0.0], [3.0, 0.0], [0.0, 4.0]].iter().enumerate() {
            for k in 0..8 {
                let a = k as f64 * 0.7;
                rows.push(vec![center[0] + 0.4 * a.cos(), center[1] + 0.4 * a.sin()]);
                labels.push(c);
            }
        }
        (rows, labels)
    }

    #[test]
    fn separates_blobs_with_every_kernel() {
        let (rows, labels) = blobs();
        for kernel in [Kernel::Linear, Kernel::Rbf, Kernel::Poly] {
            let m = fit_svm(
                &rows,
                &labels,
                3,
                &SvmParams {
                    c: 1.0,
                    gamma: Gamma::Scale,
                    kernel,
                    tol: 1e-3,
                },
            );
            for (r, &l) in rows.iter().zip(&labels) {
                assert_eq!(m.predict_index(r), l, "{kernel:?}");
            }
        }
    }

    #[test]
    fn linear_two_class_margin_matches_closed_form() {
        // points at x = ±1 and ±2: hard-margin solution is w = 1, b = 0
        let rows = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        let labels = vec![0, 0, 1, 1];
        let m = fit_svm(
            &rows,
            &labels,
            2,
            &SvmParams {
                c: 100.0,
                gamma: Gamma::Auto,
                kernel: Kernel::Linear,
                tol: 1e-6,
            },
        );
        let s = m.decision_scores(&[0.5]);
        assert!((s[1] - 0.5).abs() < 1e-6, "{s:?}");
        assert!((s[0] + 0.5).abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn gamma_resolution() {
        let rows = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        assert_eq!(resolve_gamma(Gamma::Auto, &rows), 0.5);
        // entries {0, 2, 2, 0}: mean 1, variance 1
        assert_eq!(resolve_gamma(Gamma::Scale, &rows), 0.5);
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
