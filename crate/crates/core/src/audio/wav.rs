// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{div_round, Clip, ACCEPTED_RATES};
use crate::error::{Error, Result};

/// Reads 16-bit PCM; multichannel files are averaged to mono.
pub fn read_wav(path: &Path) -> Result<Clip> {
    let fail = |reason: String| Error::Wav {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = WavReader::open(path).map_err(|e| fail(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(fail(format!(
            "unsupported codec: {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !ACCEPTED_RATES.contains(&spec.sample_rate) {
        return Err(fail(format!("unsupported sample rate {}", spec.sample_rate)));
    }
    let ch = usize::from(spec.channels.max(1));
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| fail(e.to_string()))?;
    if raw.len() < ch {
        return Err(fail("no samples".into()));
    }
    let samples = if ch == 1 {
        raw
    } else {
        raw.chunks_exact(ch)
            .map(|f| div_round(f.iter().map(|&s| i64::from(s)).sum(), ch as i64) as i16)
            .collect()
    };
    Ok(Clip::new(samples, spec.sample_rate)?.with_source(path.to_string_lossy()))
}

pub fn write_wav(path: &Path, clip: &Clip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let fail = |e: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = WavWriter::create(path, spec).map_err(fail)?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}
