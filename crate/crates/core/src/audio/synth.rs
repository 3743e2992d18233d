// SPDX-License-Identifier: Apache-2.0

//! Synthetic spoken-digit corpus in the FSDD layout.
//!
//! Each utterance is a glottal pulse train shaped by three formant
//! resonators that glide between two vowel targets per digit, with optional
//! fricative noise. Speakers differ in pitch and vocal-tract length. The
//! result is a stand-in for the real recordings when exercising the pipeline,
//! not a model of human speech.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::dsp::GaussianStream;
use super::{write_wav, Clip};
use crate::error::{Error, Result};

const RATE: u32 = 8000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpeaker {
    pub name: &'static str,
    /// Mean pitch in Hz.
    pub f0: f64,
    /// Multiplies every formant frequency.
    pub formant_scale: f64,
    /// Aspiration noise relative to the voiced source.
    pub breath: f64,
}

pub const DEFAULT_SYNTH_SPEAKERS: [SynthSpeaker; 4] = [
    SynthSpeaker {
        name: "amber",
        f0: 215.0,
        formant_scale: 1.17,
        breath: 0.06,
    },
    SynthSpeaker {
        name: "basil",
        f0: 105.0,
        formant_scale: 0.92,
        breath: 0.02,
    },
    SynthSpeaker {
        name: "cedar",
        f0: 140.0,
        formant_scale: 1.0,
        breath: 0.10,
    },
    SynthSpeaker {
        name: "delta",
        f0: 175.0,
        formant_scale: 1.08,
        breath: 0.04,
    },
];

type Vowel = [f64; 3];
const IY: Vowel = [270.0, 2290.0, 3010.0];
const IH: Vowel = [390.0, 1990.0, 2550.0];
const EH: Vowel = [530.0, 1840.0, 2480.0];
const AA: Vowel = [730.0, 1090.0, 2440.0];
const AO: Vowel = [570.0, 840.0, 2410.0];
const UW: Vowel = [300.0, 870.0, 2240.0];
const ER: Vowel = [490.0, 1350.0, 1690.0];

/// Vowel glide and fricative onset per digit.
const DIGITS: [(Vowel, Vowel, bool); 10] = [
    (IY, AO, true),
    (UW, AA, false),
    (UW, UW, false),
    (ER, IY, true),
    (AO, ER, true),
    (AA, IY, true),
    (IH, IH, true),
    (EH, ER, true),
    (EH, IY, false),
    (AA, IH, false),
];

const BANDWIDTHS: [f64; 3] = [70.0, 100.0, 140.0];

fn utterance(sp: &SynthSpeaker, digit: usize, rng: &mut SplitMix64) -> Vec<i16> {
    let mut g = GaussianStream::new(rng.gen());
    let (v0, v1, fric) = DIGITS[digit];
    let dur = rng.gen_range(0.35..0.6);
    let n = (dur * f64::from(RATE)) as usize;
    let f0 = sp.f0 * rng.gen_range(0.92..1.08);
    let fs = sp.formant_scale * rng.gen_range(0.97..1.03);
    let nyq = 0.5 * f64::from(RATE) - 150.0;

    let mut out = vec![0.0f64; n];
    let mut phase = 0.0;
    let mut tilt = 0.0;
    let mut res = [[0.0f64; 2]; 3];
    let fric_len = if fric { n / 6 } else { 0 };
    let mut prev_noise = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / n as f64;
        // pitch declines over the utterance
        let f = f0 * (1.08 - 0.16 * t);
        phase += f / f64::from(RATE);
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        tilt = pulse + 0.92 * tilt;
        let mut x = tilt + sp.breath * g.next_normal();
        let glide = 0.5 - 0.5 * (PI * t).cos();
        for (k, z) in res.iter_mut().enumerate() {
            let fk = ((v0[k] + (v1[k] - v0[k]) * glide) * fs).min(nyq);
            let r = (-PI * BANDWIDTHS[k] / f64::from(RATE)).exp();
            let a1 = 2.0 * r * (2.0 * PI * fk / f64::from(RATE)).cos();
            let a2 = -r * r;
            let y = (1.0 - a1 - a2) * x + a1 * z[0] + a2 * z[1];
            z[1] = z[0];
            z[0] = y;
            x = y;
        }
        let env = (i as f64 / (0.02 * f64::from(RATE))).min(1.0) * ((n - i) as f64 / (0.03 * f64::from(RATE))).min(1.0);
        *o = x * env;
        if i < fric_len {
            let w = g.next_normal();
            // first difference tilts the noise toward high frequencies
            *o = 0.4 * (w - prev_noise) + 0.3 * *o;
            prev_noise = w;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let amp = rng.gen_range(0.25..0.7) * 32767.0 / peak;
    let lead = rng.gen_range(0..400);
    let trail = rng.gen_range(0..400);
    let mut pcm: Vec<i16> = (0..lead).map(|_| (2.0 * g.next_normal()).round() as i16).collect();
    pcm.extend(out.iter().map(|v| (v * amp).round().clamp(-32768.0, 32767.0) as i16));
    pcm.extend((0..trail).map(|_| (2.0 * g.next_normal()).round() as i16));
    pcm
}

/// Writes `{digit}_{speaker}_{index}.wav` files at 8 kHz into `dir`.
pub fn synth_fsdd(dir: &Path, speakers: &[SynthSpeaker], per_digit: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if speakers.is_empty() || per_digit == 0 {
        return Err(Error::Input("need at least one speaker and one take per digit".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (s, sp) in speakers.iter().enumerate() {
        for digit in 0..10 {
            for idx in 0..per_digit {
                let key = ((s as u64) << 40) ^ ((digit as u64) << 32) ^ idx as u64;
                let mut rng = SplitMix64::seed_from_u64(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let clip = Clip::new(utterance(sp, digit, &mut rng), RATE)?;
                let p = dir.join(format!("{digit}_{}_{idx}.wav", sp.name));
                write_wav(&p, &clip)?;
                paths.push(p);
            }
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{parse_fsdd_name, read_wav};

    #[test]
    fn corpus_layout_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = synth_fsdd(a.path(), &DEFAULT_SYNTH_SPEAKERS[..2], 2, 5).unwrap();
        synth_fsdd(b.path(), &DEFAULT_SYNTH_SPEAKERS[..2], 2, 5).unwrap();
        assert_eq!(pa.len(), 40);
        for p in &pa {
            let name = p.file_name().unwrap().to_str().unwrap();
            assert!(parse_fsdd_name(name).is_some());
            let c = read_wav(p).unwrap();
            assert_eq!(c.sample_rate, 8000);
            assert!(c.duration_s() > 0.3 && c.duration_s() < 0.75);
            assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
    }
}
