// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration: clip preparation, feature caching, training,
//! evaluation, sweeps and CSV reports.

mod cache;
mod experiments;
mod pipeline;

pub use cache::FeatureCache;
pub use experiments::{
    compare_baseline, sweep_filters, sweep_snr, write_csv, BaselineRow, FilterRow, SnrRow,
};
pub use pipeline::{
    clip_vote, evaluate, fixed_front_end, load_split, prepare_clip, train, window_agreement, window_features,
    PreparedClip, Trained, WindowFeatures,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{TRIM_THRESHOLD_DB, TRIM_WINDOW_MS};
use crate::cochlea::{greenwood_position, CochleaConfig, DEFAULT_DAMPING, DEFAULT_TOP_POLE_FRACTION, DEFAULT_X_LO};
use crate::error::{Error, Result};
use crate::fixedpoint::{DatapathFormats, OverflowReport};
use crate::svm::{Kernel, SolverReport, DEFAULT_C_GRID, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Float,
    Fixed,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Mode::Float),
            "fixed" => Ok(Mode::Fixed),
            _ => Err(Error::Config(format!("mode {s:?} is neither float nor fixed"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CochleaSection {
    pub num_channels: usize,
    pub sample_rate: f64,
    pub damping: f64,
    pub x_lo: f64,
    /// Defaults to the Greenwood position of `0.45 f_s`.
    pub x_hi: Option<f64>,
    /// Defaults to one second.
    pub window_len: Option<usize>,
}

impl Default for CochleaSection {
    fn default() -> Self {
        Self {
            num_channels: 30,
            sample_rate: 16_000.0,
            damping: DEFAULT_DAMPING,
            x_lo: DEFAULT_X_LO,
            x_hi: None,
            window_len: None,
        }
    }
}

impl CochleaSection {
    pub fn to_config(&self) -> Result<CochleaConfig> {
        let mut c = CochleaConfig::new(self.num_channels, self.sample_rate).with_damping(self.damping);
        c.x_lo = self.x_lo;
        c.x_hi = match self.x_hi {
            Some(x) => x,
            None => greenwood_position(DEFAULT_TOP_POLE_FRACTION * self.sample_rate)?.min(1.0),
        };
        if let Some(w) = self.window_len {
            c.window_len = w;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub tol: f64,
}

impl Default for SvmSection {
    fn default() -> Self {
        Self {
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 5,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    pub trim: bool,
    pub trim_db: f64,
    pub trim_ms: f64,
}

impl Default for AudioSection {
    fn default() -> Self {
        Self {
            trim: true,
            trim_db: TRIM_THRESHOLD_DB,
            trim_ms: TRIM_WINDOW_MS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub filters: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub repeats: usize,
    pub augment: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            filters: vec![10, 20, 30, 40, 50, 60],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 30.0],
            repeats: 5,
            augment: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kernel: String,
    /// RBF bandwidth; `1 / P` when absent.
    pub gamma: Option<f64>,
    pub c: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            kernel: "linear".into(),
            gamma: None,
            c: crate::svm::DEFAULT_C,
        }
    }
}

impl BaselineSection {
    pub fn kernel(&self, p: usize) -> Result<Kernel> {
        match self.kernel.as_str() {
            "linear" => Ok(Kernel::Linear),
            "rbf" => Ok(self.gamma.map_or(Kernel::rbf_default(p), |gamma| Kernel::Rbf { gamma })),
            k => Err(Error::Config(format!("unknown baseline kernel {k:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub manifest: Option<PathBuf>,
    pub cochlea: CochleaSection,
    pub svm: SvmSection,
    pub audio: AudioSection,
    pub sweep: SweepSection,
    pub baseline: BaselineSection,
    pub formats: DatapathFormats,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Float,
            manifest: None,
            cochlea: CochleaSection::default(),
            svm: SvmSection::default(),
            audio: AudioSection::default(),
            sweep: SweepSection::default(),
            baseline: BaselineSection::default(),
            formats: DatapathFormats::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s)
    }

    pub fn validate(&self) -> Result<()> {
        self.cochlea.to_config()?;
        self.formats.validate()?;
        if self.svm.c_grid.is_empty() {
            return Err(Error::Config("svm.c_grid is empty".into()));
        }
        if self.sweep.filters.is_empty() || self.sweep.snr_db.is_empty() {
            return Err(Error::Config("sweep values must be non-empty".into()));
        }
        if self.sweep.repeats == 0 {
            return Err(Error::Config("sweep.repeats must be at least 1".into()));
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(Error::Config(format!("manifest {} does not exist", m.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: i8, predicted: i8) {
        match (truth > 0, predicted > 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Percent correct.
    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        100.0 * (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    /// Clip-level accuracy in percent.
    pub accuracy: f64,
    /// As recorded in the model file.
    pub train_accuracy: f64,
    pub confusion: Confusion,
    pub clips: usize,
    pub windows: usize,
    /// Number of templates (`P`).
    pub templates: usize,
    /// Multiplies counted per window decision.
    pub macs_per_decision: usize,
    pub overflow: OverflowReport,
    pub solver_report: SolverReport,
    pub runtime_s: f64,
}

/// Per-task seed split from a root seed by hashing the task tag.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// `{stem}-{first 16 hex digits of sha256(content)}.{ext}`
pub fn content_name(stem: &str, ext: &str, content: &[u8]) -> String {
    let h = hex::encode(Sha256::digest(content));
    format!("{stem}-{}.{ext}", &h[..16])
}

/// Writes `content` under `dir` with a content-hash name and returns the path.
pub fn write_artifact(dir: &Path, stem: &str, ext: &str, content: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(content_name(stem, ext, content));
    std::fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}
