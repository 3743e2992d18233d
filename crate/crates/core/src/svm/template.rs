// SPDX-License-Identifier: Apache-2.0

//! Template-SVM training.
//!
//! Minimizes `1/2 sum_p Q_p^2 - sum_m alpha_m` subject to
//! `Q = F^T diag(y) alpha`, `y^T alpha = 0` and `0 <= alpha <= C`.
//! Substituting `Q` leaves a box-and-hyperplane constrained QP in `alpha`
//! whose gradient `y_m Q . Phi_m - 1` costs `O(MP)`; the `M x M` kernel is
//! never formed.
//!
//! The solver is spectral projected gradient: Barzilai-Borwein step lengths,
//! exact projection onto the feasible set, and a nonmonotone acceptance test
//! that falls back to the exact line minimizer (the objective is quadratic).

use std::time::Instant;

use ndarray::{Array1, ArrayView2};

use super::projection::project_box_hyperplane;
use super::{SolverReport, TemplateModel, TrainingSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateParams {
    pub c: f64,
    /// Bound on the KKT violation and on `|y^T alpha|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Objective values remembered by the nonmonotone test.
    pub history: usize,
}

impl TemplateParams {
    pub fn new(c: f64, tol: f64) -> Self {
        Self {
            c,
            tol,
            max_iter: 500_000,
            history: 10,
        }
    }
}

const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;
const ARMIJO: f64 = 1e-4;
/// Iterations between exact recomputations of `Q` from `alpha`.
const REFRESH: usize = 64;

pub fn train_template(data: &TrainingSet, c: f64, tol: f64) -> Result<(TemplateModel, SolverReport)> {
    train_template_with(data, &TemplateParams::new(c, tol))
}

struct Problem<'a> {
    f: ArrayView2<'a, f64>,
    y: Vec<f64>,
}

impl Problem<'_> {
    fn weights(&self, alpha: &[f64]) -> Array1<f64> {
        let ya: Array1<f64> = alpha.iter().zip(&self.y).map(|(a, y)| a * y).collect();
        self.f.t().dot(&ya)
    }

    fn gradient(&self, q: &Array1<f64>, out: &mut [f64]) {
        let fq = self.f.dot(q);
        for ((g, v), y) in out.iter_mut().zip(fq.iter()).zip(&self.y) {
            *g = y * v - 1.0;
        }
    }
}

fn objective(q: &Array1<f64>, alpha: &[f64]) -> f64 {
    0.5 * q.dot(q) - alpha.iter().sum::<f64>()
}

/// `(max over I_up of -y G, min over I_low of -y G)`.
pub(crate) fn kkt_bounds(alpha: &[f64], grad: &[f64], y: &[f64], c: f64, slack: f64) -> (f64, f64) {
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for ((&a, &g), &yy) in alpha.iter().zip(grad).zip(y) {
        let v = -yy * g;
        let below_c = a < c - slack;
        let above_0 = a > slack;
        let in_up = if yy > 0.0 { below_c } else { above_0 };
        let in_low = if yy > 0.0 { above_0 } else { below_c };
        if in_up && v > up {
            up = v;
        }
        if in_low && v < low {
            low = v;
        }
    }
    (up, low)
}

/// Bias from free vectors, or the KKT-interval midpoint when none exist.
/// Multipliers within `tol` of a bound count as at that bound.
pub(crate) fn recover_bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64, tol: f64) -> (f64, bool) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&a, &g), &yy) in alpha.iter().zip(grad).zip(y) {
        if a > tol && a < c - tol {
            sum += -yy * g;
            n += 1;
        }
    }
    if n > 0 {
        (sum / n as f64, false)
    } else {
        let (up, low) = kkt_bounds(alpha, grad, y, c, tol);
        (0.5 * (up + low), true)
    }
}

pub fn train_template_with(
    data: &TrainingSet,
    params: &TemplateParams,
) -> Result<(TemplateModel, SolverReport)> {
    let c = params.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::TrainingSet(format!("C = {c} must be positive")));
    }
    let started = Instant::now();
    let prob = Problem {
        f: data.features(),
        y: data.labels().iter().map(|&l| f64::from(l)).collect(),
    };
    let m = data.len();
    let labels = data.labels();

    let mut alpha = vec![0.0; m];
    let mut q = Array1::<f64>::zeros(data.dim());
    let mut grad = vec![-1.0; m];
    let mut f = 0.0;
    let mut hist = vec![f; params.history.max(1)];
    let mut step = 1.0;

    let mut trial = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        let (up, low) = kkt_bounds(&alpha, &grad, &prob.y, c, 0.0);
        if up - low <= params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        for ((vi, a), g) in v.iter_mut().zip(&alpha).zip(&grad) {
            *vi = a - step * g;
        }
        project_box_hyperplane(&v, labels, c, &mut trial);
        let mut dd = 0.0;
        for ((di, t), a) in d.iter_mut().zip(&trial).zip(&alpha) {
            *di = t - a;
            dd += *di * *di;
        }
        if dd == 0.0 {
            // P(alpha - step G) == alpha yet the gap is open: rounding noise.
            step = 1.0;
            q = prob.weights(&alpha);
            prob.gradient(&q, &mut grad);
            f = objective(&q, &alpha);
            continue;
        }
        let dq = prob.weights(&d);
        let gd: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
        let dqq = dq.dot(&dq);

        let f_ref = hist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let f_full = f + gd + 0.5 * dqq;
        let t = if f_full <= f_ref + ARMIJO * gd || dqq <= 0.0 {
            1.0
        } else {
            (-gd / dqq).clamp(0.0, 1.0)
        };

        for (a, di) in alpha.iter_mut().zip(&d) {
            *a = (*a + t * di).clamp(0.0, c);
        }
        q.scaled_add(t, &dq);
        if iterations % REFRESH == 0 {
            q = prob.weights(&alpha);
            f = objective(&q, &alpha);
        } else {
            f += t * gd + 0.5 * t * t * dqq;
        }
        prob.gradient(&q, &mut grad);
        let slot = iterations % hist.len();
        hist[slot] = f;

        // BB1 step: s^T s / s^T (grad change), and s^T (grad change) = t^2 |dq|^2.
        step = if dqq > 0.0 {
            (dd / dqq).clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX
        };
    }

    let q = prob.weights(&alpha);
    prob.gradient(&q, &mut grad);
    let bounds = kkt_bounds(&alpha, &grad, &prob.y, c, 0.0);
    let gap = (bounds.0 - bounds.1).max(0.0);
    let (b, bias_fallback) = recover_bias(&alpha, &grad, &prob.y, c, params.tol);
    let report = SolverReport {
        iterations,
        objective: objective(&q, &alpha),
        max_kkt_residual: gap,
        equality_residual: alpha.iter().zip(&prob.y).map(|(a, y)| a * y).sum::<f64>().abs(),
        wall_time_s: started.elapsed().as_secs_f64(),
        converged: converged || gap <= params.tol,
        bias_fallback,
    };
    if !report.converged {
        return Err(Error::NonConvergence(Box::new(report)));
    }
    let model = TemplateModel {
        q: q.to_vec(),
        b,
        alpha,
        c,
    };
    Ok((model, report))
}
