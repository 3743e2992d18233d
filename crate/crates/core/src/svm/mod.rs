// SPDX-License-Identifier: Apache-2.0

//! Template SVM and a conventional kernel-SVM baseline.
//!
//! With the outer-product kernel `K(x, z) = sum_p Phi_p(x) Phi_p(z)` the
//! kernel expansion collapses to `f(x) = Q . Phi(x) + b` where
//! `Q = sum_m alpha_m y_m Phi(x_m)`. Training therefore never needs the
//! `M x M` Gram matrix: every gradient is `y_m Q . Phi_m - 1`.

mod baseline;
mod cv;
mod model_file;
mod projection;
mod template;

pub use baseline::{train_baseline, BaselineModel, Kernel};
pub use cv::{cross_validate, CvResult, DEFAULT_C_GRID};
pub use model_file::{ModelFile, MODEL_VERSION};
pub use projection::project_box_hyperplane;
pub use template::{train_template, train_template_with, TemplateParams};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Binary training data: `M x P` feature matrix and labels in `{+1, -1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    features: Array2<f64>,
    labels: Vec<i8>,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, labels: Vec<i8>) -> Result<Self> {
        let m = features.nrows();
        if m < 2 {
            return Err(Error::TrainingSet(format!("need M >= 2 samples, got {m}")));
        }
        if labels.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::TrainingSet(format!("label {bad} is not +1 or -1")));
        }
        if !labels.contains(&1) || !labels.contains(&-1) {
            return Err(Error::TrainingSet("both classes must be present".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingSet("non-finite feature".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i8>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Dimension {
                expected: p,
                got: r.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::TrainingSet(e.to_string()))?;
        Self::new(features, labels)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by index, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select(ndarray::Axis(0), idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Dual objective `1/2 |Q|^2 - sum alpha` at the returned point.
    #[serde(with = "crate::decimal")]
    pub objective: f64,
    /// Maximal KKT violation `max_up(-y G) - min_low(-y G)`.
    #[serde(with = "crate::decimal")]
    pub max_kkt_residual: f64,
    #[serde(with = "crate::decimal")]
    pub equality_residual: f64,
    /// Not serialized: model files must be byte-reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
    pub converged: bool,
    /// Bias came from the KKT interval midpoint, no free vectors were found.
    pub bias_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateModel {
    pub q: Vec<f64>,
    pub b: f64,
    /// Dual coefficients of the training run; empty for a model loaded from disk.
    pub alpha: Vec<f64>,
    pub c: f64,
}

impl TemplateModel {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Multiply-accumulates per decision.
    pub fn mac_count(&self) -> usize {
        self.q.len()
    }
}

/// `f(x) = sum_p Q_p Phi_p + b`, together with the number of MACs executed.
pub fn decision_counted(phi: &[f64], model: &TemplateModel) -> Result<(f64, usize)> {
    if phi.len() != model.q.len() {
        return Err(Error::Dimension {
            expected: model.q.len(),
            got: phi.len(),
        });
    }
    let mut acc = 0.0;
    let mut macs = 0;
    for (q, x) in model.q.iter().zip(phi) {
        acc += q * x;
        macs += 1;
    }
    Ok((acc + model.b, macs))
}

pub fn decision(phi: &[f64], model: &TemplateModel) -> Result<f64> {
    decision_counted(phi, model).map(|(f, _)| f)
}

/// Sign with `sgn(0) = +1`.
#[inline]
pub fn sign_label(f: f64) -> i8 {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn classify(phi: &[f64], model: &TemplateModel) -> Result<i8> {
    decision(phi, model).map(sign_label)
}

/// Outer-product Gram matrix `F F^T`.
pub fn gram_outer(features: ArrayView2<'_, f64>) -> Array2<f64> {
    features.dot(&features.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn decision_examples() {
        let m = TemplateModel {
            q: vec![2.0],
            b: -1.0,
            alpha: vec![],
            c: 1.0,
        };
        assert_eq!(decision(&[3.0], &m).unwrap(), 5.0);
        let z = TemplateModel {
            q: vec![0.0; 4],
            b: 0.25,
            alpha: vec![],
            c: 1.0,
        };
        assert_eq!(decision(&[1.0, -7.0, 3.0, 9.0], &z).unwrap(), 0.25);
        assert!(matches!(decision(&[1.0, 2.0], &m), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sign_tie_break() {
        assert_eq!(sign_label(5.0), 1);
        assert_eq!(sign_label(-0.01), -1);
        assert_eq!(sign_label(0.0), 1);
        assert_eq!(sign_label(-0.0), 1);
    }

    #[test]
    fn mac_count_is_p() {
        let m = TemplateModel {
            q: vec![0.5; 30],
            b: 0.0,
            alpha: vec![0.1; 900],
            c: 1.0,
        };
        let (_, macs) = decision_counted(&[1.0; 30], &m).unwrap();
        assert_eq!(macs, 30);
        assert_eq!(m.mac_count(), 30);
    }

    #[test]
    fn gram_examples() {
        let eye = Array2::<f64>::eye(3);
        assert_eq!(gram_outer(eye.view()), eye);
        let one = array![[1.0, -2.0, 2.0]];
        assert_eq!(gram_outer(one.view()), array![[9.0]]);
    }

    #[test]
    fn training_set_invariants() {
        let f = array![[1.0], [2.0]];
        assert!(TrainingSet::new(f.clone(), vec![1, 1]).is_err());
        assert!(TrainingSet::new(f.clone(), vec![1, 0]).is_err());
        assert!(TrainingSet::new(f.clone(), vec![1]).is_err());
        assert!(TrainingSet::new(array![[1.0]], vec![1]).is_err());
        assert!(TrainingSet::new(array![[1.0], [f64::NAN]], vec![1, -1]).is_err());
        let ok = TrainingSet::new(f, vec![1, -1]).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok.dim(), 1);
    }
}
