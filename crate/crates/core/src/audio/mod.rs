// SPDX-License-Identifier: Apache-2.0

//! Dataset plumbing: WAV I/O, resampling, trimming, framing, noise and
//! train/test manifests.

mod dsp;
mod manifest;
mod synth;
mod wav;

pub use dsp::{
    add_awgn, frame_fixed, power, resample_linear, snr_db, trim_silence, GaussianStream,
    TRIM_THRESHOLD_DB, TRIM_WINDOW_MS,
};
pub use manifest::{
    build_manifest, build_manifest_with, parse_fsdd_name, DatasetManifest, Grouping, ManifestEntry, Split,
    MANIFEST_VERSION,
};
pub use synth::{synth_fsdd, SynthSpeaker, DEFAULT_SYNTH_SPEAKERS};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Rates accepted on input.
pub const ACCEPTED_RATES: [u32; 3] = [8000, 16_000, 44_100];

/// Mono 16-bit PCM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clip {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
    pub label: Option<String>,
    pub source: String,
}

impl Clip {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            label: None,
            source: String::new(),
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    fn derive(&self, samples: Vec<i16>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: self.label.clone(),
            source: self.source.clone(),
        }
    }
}

/// `num / den` rounded half away from zero.
#[inline]
pub(crate) fn div_round(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}
