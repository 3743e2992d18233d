// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use crate::svm::SolverReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid cochlea config: {0}")]
    Config(String),

    #[error("filter design failed{}: {reason}", stage_suffix(*.stage))]
    Design { stage: Option<usize>, reason: String },

    #[error("datapath error: {0}")]
    Datapath(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("standardizer fit error: {0}")]
    Fit(String),

    #[error("invalid training set: {0}")]
    TrainingSet(String),

    #[error("solver did not converge after {} iterations (kkt residual {:.3e})", .0.iterations, .0.max_kkt_residual)]
    NonConvergence(Box<SolverReport>),

    #[error("wav error in {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("signal has zero power")]
    ZeroPower,

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn stage_suffix(stage: Option<usize>) -> String {
    stage.map(|p| format!(" at stage {p}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Design { .. } => "design",
            Error::Datapath(_) => "datapath",
            Error::Input(_) => "input",
            Error::Dimension { .. } => "dimension",
            Error::Fit(_) => "fit",
            Error::TrainingSet(_) => "training_set",
            Error::NonConvergence(_) => "non_convergence",
            Error::Wav { .. } => "wav",
            Error::Manifest(_) => "manifest",
            Error::ZeroPower => "zero_power",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
