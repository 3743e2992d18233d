// SPDX-License-Identifier: Apache-2.0

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative floor applied to zero-variance channels: `sigma >= 1e-6 * max(1, |mu|)`.
pub const ZERO_VARIANCE_REL_FLOOR: f64 = 1e-6;

/// Per-channel affine map `(s - mu) / sigma`, fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "crate::decimal::vec")]
    pub mu: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub sigma: Vec<f64>,
    /// Channels whose sample deviation fell under the floor.
    #[serde(default)]
    pub floored: Vec<usize>,
}

/// Column means and sample standard deviations (`N - 1` denominator) of an
/// `N x P` accumulation matrix.
pub fn fit_standardizer(s: ArrayView2<'_, f64>) -> Result<Standardizer> {
    let n = s.nrows();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 rows, got {n}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite accumulation".into()));
    }
    let mut mu = Vec::with_capacity(s.ncols());
    let mut sigma = Vec::with_capacity(s.ncols());
    let mut floored = Vec::new();
    for (p, col) in s.axis_iter(Axis(1)).enumerate() {
        let m = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        let floor = ZERO_VARIANCE_REL_FLOOR * m.abs().max(1.0);
        mu.push(m);
        if sd < floor {
            floored.push(p);
            sigma.push(floor);
        } else {
            sigma.push(sd);
        }
    }
    Ok(Standardizer { mu, sigma, floored })
}

impl Standardizer {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn standardize(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.mu.len() {
            return Err(Error::Dimension {
                expected: self.mu.len(),
                got: s.len(),
            });
        }
        Ok(s.iter()
            .zip(&self.mu)
            .zip(&self.sigma)
            .map(|((v, m), sd)| (v - m) / sd)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(Error::Dimension {
                expected: self.mu.len(),
                got: self.sigma.len(),
            });
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Fit("sigma must be finite and positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cochlea::{design_filterbank, featurize, accumulate_window, CochleaConfig};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let st = fit_standardizer(array![[1.0], [2.0], [3.0]].view()).unwrap();
        assert_eq!(st.mu, vec![2.0]);
        assert_eq!(st.sigma, vec![1.0]);
        assert!(st.floored.is_empty());
    }

    #[test]
    fn constant_column_is_floored() {
        let st = fit_standardizer(array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]].view()).unwrap();
        assert!((st.sigma[0] - 5e-6).abs() < 1e-20);
        assert_eq!(st.floored, vec![0]);
        let z = st.standardize(&[5.0, 2.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn needs_two_rows() {
        assert!(matches!(
            fit_standardizer(array![[1.0, 2.0]].view()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn centering_and_unit_scaling() {
        let st = Standardizer {
            mu: vec![1.0, -2.0, 10.0],
            sigma: vec![0.5, 3.0, 2.0],
            floored: vec![],
        };
        assert_eq!(st.standardize(&st.mu.clone()).unwrap(), vec![0.0; 3]);
        let plus: Vec<f64> = st.mu.iter().zip(&st.sigma).map(|(m, s)| m + s).collect();
        assert_eq!(st.standardize(&plus).unwrap(), vec![1.0; 3]);
        assert!(st.standardize(&[1.0]).is_err());
    }

    #[test]
    fn featurize_is_the_composition() {
        let bank = design_filterbank(&CochleaConfig::new(6, 16_000.0).with_window_len(400)).unwrap();
        let sig: Vec<f64> = (0..400).map(|i| ((i * 37) % 23) as f64 / 23.0 - 0.5).collect();
        let st = Standardizer {
            mu: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            sigma: vec![0.5; 6],
            floored: vec![],
        };
        let fv = featurize(&sig, &bank, &st).unwrap();
        let s = accumulate_window(&bank, &sig).unwrap();
        let manual: Vec<f64> = (0..6).map(|p| (s[p] - st.mu[p]) / st.sigma[p]).collect();
        assert_eq!(fv.phi, manual);
    }

    proptest! {
        #[test]
        fn standardized_training_matrix_has_zero_mean_unit_std(
            rows in 2usize..40,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 200.0 - 50.0
            };
            let m = Array2::from_shape_fn((rows, cols), |_| next());
            let st = fit_standardizer(m.view()).unwrap();
            prop_assume!(st.floored.is_empty());
            for p in 0..cols {
                let z: Vec<f64> = (0..rows)
                    .map(|i| st.standardize(&m.row(i).to_vec()).unwrap()[p])
                    .collect();
                let mean = z.iter().sum::<f64>() / rows as f64;
                let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1) as f64;
                prop_assert!(mean.abs() < 1e-12);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }
}
