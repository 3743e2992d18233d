// SPDX-License-Identifier: Apache-2.0

//! Conventional dual SVM solved by SMO with second-order working-set
//! selection, on a precomputed kernel matrix.

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::template::{kkt_bounds, recover_bias};
use super::{gram_outer, SolverReport, TrainingSet};
use crate::error::{Error, Result};

/// Support-vector threshold relative to `C`.
pub const SV_EPS_REL: f64 = 1e-6;

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// Outer product of the feature vectors.
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    /// RBF with `gamma = 1 / P`.
    pub fn rbf_default(p: usize) -> Self {
        Kernel::Rbf {
            gamma: 1.0 / p.max(1) as f64,
        }
    }

    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, z)| (x - z) * (x - z)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn matrix(&self, f: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            Kernel::Linear => gram_outer(f),
            Kernel::Rbf { .. } => {
                let m = f.nrows();
                let rows: Vec<Vec<f64>> = (0..m)
                    .into_par_iter()
                    .map(|i| (0..m).map(|j| self.eval(f.row(i), f.row(j))).collect())
                    .collect();
                Array2::from_shape_fn((m, m), |(i, j)| rows[i][j])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    /// `S x P` support vectors.
    pub support: Array2<f64>,
    pub labels: Vec<i8>,
    pub alpha: Vec<f64>,
    pub b: f64,
    pub kernel: Kernel,
    pub report: SolverReport,
}

impl BaselineModel {
    pub fn num_support(&self) -> usize {
        self.labels.len()
    }

    /// `S * P` multiply-accumulates per classification.
    pub fn mac_count(&self) -> usize {
        self.support.nrows() * self.support.ncols()
    }

    pub fn decision(&self, phi: &[f64]) -> Result<f64> {
        if phi.len() != self.support.ncols() {
            return Err(Error::Dimension {
                expected: self.support.ncols(),
                got: phi.len(),
            });
        }
        let x = ArrayView1::from(phi);
        let mut f = self.b;
        for ((row, &y), a) in self.support.outer_iter().zip(&self.labels).zip(&self.alpha) {
            f += a * f64::from(y) * self.kernel.eval(row, x);
        }
        Ok(f)
    }
}

pub fn train_baseline(data: &TrainingSet, c: f64, kernel: Kernel, tol: f64) -> Result<BaselineModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::TrainingSet(format!("C = {c} must be positive")));
    }
    let started = Instant::now();
    let k = kernel.matrix(data.features());
    let m = data.len();
    let y: Vec<f64> = data.labels().iter().map(|&l| f64::from(l)).collect();
    let mut alpha = vec![0.0; m];
    let mut grad = vec![-1.0; m];
    let max_iter = 10_000_000usize.max(100 * m);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            let in_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // j: second-order choice in I_low
        let mut gmin = f64::INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..m {
            let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !in_low {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX {
                let bgap = gmax - v;
                if bgap > 0.0 {
                    let mut a = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let o = -(bgap * bgap) / a;
                    if o <= obj_min {
                        obj_min = o;
                        j = t;
                    }
                }
            }
        }
        if gmax - gmin <= tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[[i, j]];
        if y[i] != y[j] {
            let mut quad = k[[i, i]] + k[[j, j]] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
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
            let mut quad = k[[i, i]] + k[[j, j]] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
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
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..m {
            grad[t] += y[t] * (y[i] * k[[i, t]] * di + y[j] * k[[j, t]] * dj);
        }
    }

    let bounds = kkt_bounds(&alpha, &grad, &y, c, 0.0);
    let gap = (bounds.0 - bounds.1).max(0.0);
    let (b, bias_fallback) = recover_bias(&alpha, &grad, &y, c, tol);
    let mut objective = 0.0;
    for t in 0..m {
        // G = Q alpha - 1, so alpha^T Q alpha / 2 - sum alpha = alpha^T (G - 1) / 2
        objective += 0.5 * alpha[t] * (grad[t] - 1.0);
    }
    let report = SolverReport {
        iterations,
        objective,
        max_kkt_residual: gap,
        equality_residual: alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs(),
        wall_time_s: started.elapsed().as_secs_f64(),
        converged,
        bias_fallback,
    };
    if !converged {
        return Err(Error::NonConvergence(Box::new(report)));
    }

    let eps = SV_EPS_REL * c;
    let idx: Vec<usize> = (0..m).filter(|&t| alpha[t] > eps).collect();
    Ok(BaselineModel {
        support: data.features().select(ndarray::Axis(0), &idx),
        labels: idx.iter().map(|&t| data.labels()[t]).collect(),
        alpha: idx.iter().map(|&t| alpha[t]).collect(),
        b,
        kernel,
        report,
    })
}
