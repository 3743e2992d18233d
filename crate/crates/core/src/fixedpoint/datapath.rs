// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::format::{rescale, round_shift, FixedFormat, Overflow};
use crate::cochlea::FilterBank;
use crate::error::{Error, Result};

/// Word formats along the datapath, from input sample to classifier weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatapathFormats {
    pub input: FixedFormat,
    pub coeff: FixedFormat,
    /// Resonator state; carries the resonance gain of the low channels.
    pub state: FixedFormat,
    /// Stage output, the input of the next stage and of the rectifier.
    pub output: FixedFormat,
    pub accumulator: FixedFormat,
    /// `mu` and `sigma`, stored scaled by the channel's power-of-two shift.
    pub std_params: FixedFormat,
    /// Accumulated energy after the per-channel shift.
    pub feature_mid: FixedFormat,
    /// `1 / sigma` in the shifted domain.
    pub recip: FixedFormat,
    pub feature_out: FixedFormat,
    pub weight: FixedFormat,
}

impl Default for DatapathFormats {
    fn default() -> Self {
        Self {
            input: FixedFormat::signed(16, 15),
            coeff: FixedFormat::signed(12, 10),
            state: FixedFormat::signed(24, 12),
            output: FixedFormat::signed(16, 12),
            accumulator: FixedFormat::unsigned(30, 12),
            std_params: FixedFormat::signed(12, 6),
            feature_mid: FixedFormat::signed(12, 6),
            recip: FixedFormat::signed(12, 8),
            feature_out: FixedFormat::signed(8, 4),
            weight: FixedFormat::signed(8, 4),
        }
    }
}

impl DatapathFormats {
    pub fn with_accumulator(mut self, fmt: FixedFormat) -> Self {
        self.accumulator = fmt;
        self
    }

    pub fn named(&self) -> [(&'static str, FixedFormat); 10] {
        [
            ("input", self.input),
            ("coeff", self.coeff),
            ("state", self.state),
            ("output", self.output),
            ("accumulator", self.accumulator),
            ("std_params", self.std_params),
            ("feature_mid", self.feature_mid),
            ("recip", self.recip),
            ("feature_out", self.feature_out),
            ("weight", self.weight),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in self.named() {
            f.validate().map_err(|e| Error::Format(format!("{name}: {e}")))?;
        }
        if self.input.total_bits != 16 || !self.input.signed {
            return Err(Error::Format("input must be signed 16-bit PCM".into()));
        }
        if self.accumulator.signed {
            return Err(Error::Format("accumulator holds rectified sums and is unsigned".into()));
        }
        if self.feature_mid.frac_bits != self.std_params.frac_bits {
            return Err(Error::Format("feature_mid and std_params must share a binary point".into()));
        }
        if self.state.frac_bits != self.output.frac_bits {
            return Err(Error::Format("state and output must share a binary point".into()));
        }
        let wide = [self.state.frac_bits, self.accumulator.frac_bits, self.input.frac_bits];
        if wide.iter().any(|&f| f > 24) || self.coeff.frac_bits > 16 {
            return Err(Error::Format("fraction widths exceed the 64-bit product budget".into()));
        }
        Ok(())
    }

    /// Input-bit headroom: worst-case accumulated bits for `w` additions of
    /// full-scale stage outputs.
    pub fn accumulator_bits_needed(&self, w: usize) -> u32 {
        let grow = usize::BITS - w.saturating_sub(1).leading_zeros();
        (self.output.total_bits - 1) + grow - self.output.frac_bits + self.accumulator.frac_bits
    }
}

/// Stage coefficients rounded to the coefficient format, in cascade order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedBank {
    /// `[a0, c0, r, k, g]` raw words per stage.
    pub stages: Vec<[i64; 5]>,
    pub window_len: usize,
    pub coeff: FixedFormat,
}

impl QuantizedBank {
    pub fn from_bank(bank: &FilterBank, fmts: &DatapathFormats) -> Result<(Self, Overflow)> {
        fmts.validate()?;
        bank.validate()?;
        let mut ovf = Overflow::default();
        let q = |x: f64, o: &mut Overflow| super::format::quantize(x, fmts.coeff, o).raw;
        let stages = bank
            .stages
            .iter()
            .map(|s| [q(s.a0, &mut ovf), q(s.c0, &mut ovf), q(s.r, &mut ovf), q(s.k, &mut ovf), q(s.g, &mut ovf)])
            .collect();
        Ok((
            Self {
                stages,
                window_len: bank.window_len(),
                coeff: fmts.coeff,
            },
            ovf,
        ))
    }

    pub fn num_channels(&self) -> usize {
        self.stages.len()
    }
}

/// Saturation events by datapath node, for one call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverflowReport {
    pub state: u64,
    pub output: u64,
    pub accumulator: u64,
    pub feature_mid: u64,
    pub feature_out: u64,
}

impl OverflowReport {
    pub fn total(&self) -> u64 {
        self.state + self.output + self.accumulator + self.feature_mid + self.feature_out
    }

    pub fn merge(&mut self, other: &OverflowReport) {
        self.state += other.state;
        self.output += other.output;
        self.accumulator += other.accumulator;
        self.feature_mid += other.feature_mid;
        self.feature_out += other.feature_out;
    }
}

/// Narrows wider PCM to 16 bits, rejecting anything out of range.
pub fn check_pcm16(samples: &[i32]) -> Result<Vec<i16>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            i16::try_from(s).map_err(|_| Error::Input(format!("sample {i} = {s} is not 16-bit")))
        })
        .collect()
}

#[inline(always)]
fn sat(v: i128, fmt: FixedFormat, count: &mut u64) -> i64 {
    let (r, s) = fmt.saturate(v);
    *count += u64::from(s);
    r
}

/// Integer cascade with one rounding per state update.
///
/// Each stage runs the coupled (rotation) form of the resonator:
/// `z1' = r (a0 z1 - c0 z2) + u`, `z2' = r (c0 z1 + a0 z2)`,
/// `y = g (u + k z2')`. This realizes the same transfer function as the
/// direct form but multiplies states by `a0` and `c0` rather than by
/// `2 a0 r`, which keeps low-frequency poles resolvable with 10 fractional
/// coefficient bits.
pub fn fx_accumulate(
    samples: &[i16],
    bank: &QuantizedBank,
    fmts: &DatapathFormats,
) -> Result<(Vec<i64>, OverflowReport)> {
    fmts.validate()?;
    if bank.coeff != fmts.coeff {
        return Err(Error::Format(format!(
            "bank quantized to {} but datapath expects {}",
            bank.coeff.label(),
            fmts.coeff.label()
        )));
    }
    if samples.len() != bank.window_len {
        return Err(Error::Input(format!(
            "window has {} samples, expected W = {}",
            samples.len(),
            bank.window_len
        )));
    }
    let cf = fmts.coeff.frac_bits;
    let sf = fmts.state.frac_bits;
    let p = bank.num_channels();
    let mut z = vec![[0i64; 2]; p];
    let mut acc = vec![0i64; p];
    let mut rep = OverflowReport::default();

    for &x in samples {
        let mut u = i64::from(x);
        let mut uf = fmts.input.frac_bits;
        for ((c, zs), a) in bank.stages.iter().zip(&mut z).zip(&mut acc) {
            let [a0, c0, r, k, g] = *c;
            let (z1, z2) = (zs[0] as i128, zs[1] as i128);
            // r * (rotation) carries 2 cf + sf fraction bits
            let wide_f = 2 * cf + sf;
            let u_wide = (u as i128) << (wide_f - uf);
            let n1 = r as i128 * (a0 as i128 * z1 - c0 as i128 * z2) + u_wide;
            let n2 = r as i128 * (c0 as i128 * z1 + a0 as i128 * z2);
            let z1n = sat(round_shift(n1, 2 * cf), fmts.state, &mut rep.state);
            let z2n = sat(round_shift(n2, 2 * cf), fmts.state, &mut rep.state);
            zs[0] = z1n;
            zs[1] = z2n;
            let inner = ((u as i128) << (cf + sf - uf)) + k as i128 * z2n as i128;
            let y = sat(round_shift(g as i128 * inner, 2 * cf), fmts.output, &mut rep.output);
            // HWR by sign bit
            if y > 0 {
                let add = rescale(y as i128, sf, fmts.accumulator.frac_bits);
                *a = sat(*a as i128 + add, fmts.accumulator, &mut rep.accumulator);
            }
            u = y;
            uf = sf;
        }
    }
    Ok((acc, rep))
}
