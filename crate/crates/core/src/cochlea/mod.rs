// SPDX-License-Identifier: Apache-2.0

//! CAR-IHC cochlear front end.
//!
//! A cascade of two-pole-two-zero resonators (the CAR part) is tapped after
//! every stage; each tap is half-wave rectified (the IHC part), summed over a
//! window and standardized with statistics fitted on training data. The
//! resulting `P` numbers are used both as features and as the templates of the
//! SVM kernel.

mod cascade;
mod design;
mod standardize;

pub use cascade::{accumulate_window, featurize, ihc_hwr, pcm_to_real, CascadeState};
pub use design::{design_filterbank, design_stage, greenwood_freq, greenwood_position};
pub use standardize::{fit_standardizer, Standardizer, ZERO_VARIANCE_REL_FLOOR};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version tag written into filter-bank documents.
pub const FILTERBANK_VERSION: u32 = 1;

/// Lowest normalized cochlear position used by default (about 103 Hz).
pub const DEFAULT_X_LO: f64 = 0.1;

/// Default ceiling on the top pole, as a fraction of the sample rate.
pub const DEFAULT_TOP_POLE_FRACTION: f64 = 0.45;

pub const DEFAULT_DAMPING: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CochleaConfig {
    #[serde(rename = "P")]
    pub num_channels: usize,
    #[serde(rename = "f_s", with = "crate::decimal")]
    pub sample_rate: f64,
    #[serde(with = "crate::decimal")]
    pub damping: f64,
    #[serde(with = "crate::decimal")]
    pub x_lo: f64,
    #[serde(with = "crate::decimal")]
    pub x_hi: f64,
    #[serde(rename = "W")]
    pub window_len: usize,
}

impl CochleaConfig {
    /// Defaults for a given channel count and rate: one-second window,
    /// damping 0.2, poles from `x = 0.1` up to `0.45 f_s` on the Greenwood map.
    pub fn new(num_channels: usize, sample_rate: f64) -> Self {
        let x_hi = greenwood_position(DEFAULT_TOP_POLE_FRACTION * sample_rate)
            .unwrap_or(1.0)
            .min(1.0);
        Self {
            num_channels,
            sample_rate,
            damping: DEFAULT_DAMPING,
            x_lo: DEFAULT_X_LO,
            x_hi,
            window_len: sample_rate.round().max(1.0) as usize,
        }
    }

    pub fn with_window_len(mut self, window_len: usize) -> Self {
        self.window_len = window_len;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::Config("P must be at least 1".into()));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Config(format!("f_s = {} is not positive", self.sample_rate)));
        }
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return Err(Error::Config(format!("damping = {} is not positive", self.damping)));
        }
        if !(0.0 <= self.x_lo && self.x_lo < self.x_hi && self.x_hi <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= x_lo < x_hi <= 1, got x_lo = {}, x_hi = {}",
                self.x_lo, self.x_hi
            )));
        }
        if self.window_len == 0 {
            return Err(Error::Config("W must be at least 1".into()));
        }
        Ok(())
    }

    /// Cochlear positions of the stages in cascade order (base first, so the
    /// highest position and frequency comes first).
    pub fn positions(&self) -> Vec<f64> {
        let p = self.num_channels;
        if p == 1 {
            return vec![0.5 * (self.x_lo + self.x_hi)];
        }
        let step = (self.x_hi - self.x_lo) / (p - 1) as f64;
        (0..p)
            .map(|i| {
                // Pin the endpoints so the grid is inclusive exactly.
                if i == 0 {
                    self.x_lo
                } else if i == p - 1 {
                    self.x_hi
                } else {
                    self.x_lo + step * i as f64
                }
            })
            .rev()
            .collect()
    }
}

impl Default for CochleaConfig {
    fn default() -> Self {
        Self::new(30, 16_000.0)
    }
}

/// Coefficients of one CAR stage.
///
/// `H(z) = g (z^2 + (-2 a0 + k c0) r z + r^2) / (z^2 - 2 a0 r z + r^2)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarStageCoeffs {
    #[serde(with = "crate::decimal")]
    pub a0: f64,
    #[serde(with = "crate::decimal")]
    pub c0: f64,
    #[serde(with = "crate::decimal")]
    pub r: f64,
    #[serde(with = "crate::decimal")]
    pub k: f64,
    #[serde(with = "crate::decimal")]
    pub g: f64,
    #[serde(with = "crate::decimal")]
    pub f_pole: f64,
}

/// Normalized biquad, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl CarStageCoeffs {
    pub fn biquad(&self) -> Biquad {
        let r2 = self.r * self.r;
        let n1 = (-2.0 * self.a0 + self.k * self.c0) * self.r;
        Biquad {
            b: [self.g, self.g * n1, self.g * r2],
            a: [1.0, -2.0 * self.a0 * self.r, r2],
        }
    }

    /// `|H(e^{jw})|` at `w = 2 pi f / f_s`.
    pub fn magnitude_at(&self, omega: f64) -> f64 {
        let q = self.biquad();
        // Evaluate in z^-1: z^-1 = cos w - j sin w.
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * omega.cos() + c[2] * (2.0 * omega).cos();
            let im = -c[1] * omega.sin() - c[2] * (2.0 * omega).sin();
            (re * re + im * im).sqrt()
        };
        eval(&q.b) / eval(&q.a)
    }

    pub fn dc_gain(&self) -> f64 {
        let q = self.biquad();
        (q.b[0] + q.b[1] + q.b[2]) / (q.a[0] + q.a[1] + q.a[2])
    }

    /// Checks the stage invariants; `Err` carries the violated condition.
    pub fn check(&self) -> std::result::Result<(), String> {
        if ((self.a0 * self.a0 + self.c0 * self.c0) - 1.0).abs() > 1e-12 {
            return Err(format!("a0^2 + c0^2 = {} != 1", self.a0 * self.a0 + self.c0 * self.c0));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(format!("pole radius r = {} outside (0, 1)", self.r));
        }
        let k_max = (2.0 + 2.0 * self.a0) / self.c0;
        if !(self.k > 0.0 && self.k < k_max) {
            return Err(format!(
                "complex-zero condition violated: k = {} not in (0, {k_max})",
                self.k
            ));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(format!("DC-gain factor g = {} is not positive", self.g));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub config: CochleaConfig,
    pub stages: Vec<CarStageCoeffs>,
}

#[derive(Serialize, Deserialize)]
struct FilterBankDoc {
    version: u32,
    #[serde(flatten)]
    bank: FilterBank,
}

impl FilterBank {
    pub fn num_channels(&self) -> usize {
        self.stages.len()
    }

    pub fn window_len(&self) -> usize {
        self.config.window_len
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.stages.len() != self.config.num_channels {
            return Err(Error::Dimension {
                expected: self.config.num_channels,
                got: self.stages.len(),
            });
        }
        for (i, st) in self.stages.iter().enumerate() {
            st.check().map_err(|reason| Error::Design { stage: Some(i + 1), reason })?;
        }
        if self.stages.windows(2).any(|w| w[1].f_pole >= w[0].f_pole) {
            return Err(Error::Design {
                stage: None,
                reason: "pole frequencies are not strictly decreasing along the cascade".into(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = FilterBankDoc {
            version: FILTERBANK_VERSION,
            bank: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("filter bank serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FilterBankDoc = serde_json::from_str(s)?;
        if doc.version != FILTERBANK_VERSION {
            return Err(Error::Format(format!(
                "unsupported filter-bank version {}",
                doc.version
            )));
        }
        doc.bank.validate()?;
        Ok(doc.bank)
    }

    /// SHA-256 over the canonical JSON document, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// One `Phi` vector: standardized accumulated energy per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub phi: Vec<f64>,
    pub source: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_below_nyquist() {
        let cfg = CochleaConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window_len, 16_000);
        let top = greenwood_freq(cfg.x_hi).unwrap();
        assert!(top <= 0.45 * cfg.sample_rate + 1e-6, "top pole {top}");
    }

    #[test]
    fn three_point_grid_is_inclusive() {
        let mut cfg = CochleaConfig::new(3, 16_000.0);
        cfg.x_lo = 0.2;
        cfg.x_hi = 0.8;
        let xs = cfg.positions();
        // cascade order runs high to low
        assert_eq!(xs.len(), 3);
        assert!((xs[0] - 0.8).abs() < 1e-15);
        assert!((xs[1] - 0.5).abs() < 1e-15);
        assert!((xs[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_channel_sits_at_midpoint() {
        let mut cfg = CochleaConfig::new(1, 16_000.0);
        cfg.x_lo = 0.2;
        cfg.x_hi = 0.6;
        assert_eq!(cfg.positions(), vec![0.4]);
        let bank = design_filterbank(&cfg).unwrap();
        let want = greenwood_freq(0.4).unwrap();
        assert_eq!(bank.stages[0].f_pole, want);
    }

    #[test]
    fn config_rejects_bad_fields() {
        let good = CochleaConfig::default();
        let mut c = good.clone();
        c.num_channels = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.damping = 0.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.x_lo = c.x_hi;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.window_len = 0;
        assert!(c.validate().is_err());
        let mut c = good;
        c.sample_rate = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let bank = design_filterbank(&CochleaConfig::default()).unwrap();
        let text = bank.to_json();
        assert!(text.contains("\"version\": 1"));
        assert!(text.contains("\"f_s\": \"16000\""));
        let back = FilterBank::from_json(&text).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.content_hash(), bank.content_hash());
    }

    #[test]
    fn from_json_rejects_other_versions() {
        let bank = design_filterbank(&CochleaConfig::new(2, 16_000.0)).unwrap();
        let text = bank.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(FilterBank::from_json(&text), Err(Error::Format(_))));
    }
}
