// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SolverReport, TemplateModel};
use crate::cochlea::{FilterBank, Standardizer};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

/// Trained template SVM together with its front end, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "C", with = "crate::decimal")]
    pub c: f64,
    #[serde(rename = "Q", with = "crate::decimal::vec")]
    pub q: Vec<f64>,
    #[serde(with = "crate::decimal")]
    pub b: f64,
    #[serde(with = "crate::decimal::vec")]
    pub mu: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub sigma: Vec<f64>,
    pub filterbank: FilterBank,
    pub solver_report: SolverReport,
    #[serde(with = "crate::decimal")]
    pub train_accuracy: f64,
}

impl ModelFile {
    pub fn new(
        model: &TemplateModel,
        std: &Standardizer,
        bank: &FilterBank,
        report: &SolverReport,
        train_accuracy: f64,
    ) -> Result<Self> {
        let f = Self {
            version: MODEL_VERSION,
            p: model.dim(),
            c: model.c,
            q: model.q.clone(),
            b: model.b,
            mu: std.mu.clone(),
            sigma: std.sigma.clone(),
            filterbank: bank.clone(),
            solver_report: report.clone(),
            train_accuracy,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        for (name, len) in [
            ("Q", self.q.len()),
            ("mu", self.mu.len()),
            ("sigma", self.sigma.len()),
            ("filterbank", self.filterbank.num_channels()),
        ] {
            if len != self.p {
                return Err(Error::Format(format!("{name} has {len} entries, P = {}", self.p)));
            }
        }
        self.filterbank.validate()?;
        self.standardizer().validate()
    }

    pub fn template(&self) -> TemplateModel {
        TemplateModel {
            q: self.q.clone(),
            b: self.b,
            alpha: Vec::new(),
            c: self.c,
        }
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
            floored: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cochlea::{design_filterbank, CochleaConfig};

    fn sample() -> ModelFile {
        let bank = design_filterbank(&CochleaConfig::new(3, 8000.0)).unwrap();
        let model = TemplateModel {
            q: vec![0.1, -2.5e-7, 1.0 / 3.0],
            b: -0.7,
            alpha: vec![0.5, 0.5],
            c: 1.0,
        };
        let std = Standardizer {
            mu: vec![1.0, 2.0, 3.0],
            sigma: vec![0.1, 0.2, 0.3],
            floored: vec![],
        };
        let rep = SolverReport {
            iterations: 12,
            objective: -0.25,
            wall_time_s: 3.5,
            converged: true,
            ..Default::default()
        };
        ModelFile::new(&model, &std, &bank, &rep, 0.875).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let s = m.to_json();
        let back = ModelFile::from_json(&s).unwrap();
        assert_eq!(back.q, m.q);
        assert_eq!(back.filterbank, m.filterbank);
        assert_eq!(back.solver_report.wall_time_s, 0.0);
        assert_eq!(back.to_json(), s);
        assert!(s.contains("\"Q\""));
        assert!(s.contains("\"0.3333333333333333\""));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut m = sample();
        m.mu.pop();
        assert!(ModelFile::from_json(&m.to_json()).is_err());
        let mut v = sample();
        v.version = 99;
        assert!(ModelFile::from_json(&v.to_json()).is_err());
    }
}
