// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::datapath::{fx_accumulate, DatapathFormats, OverflowReport, QuantizedBank};
use super::format::{quantize, round_shift, FixedFormat, Overflow};
use crate::cochlea::Standardizer;
use crate::error::{Error, Result};
use crate::svm::TemplateModel;

/// Largest power-of-two shift considered for the mid-scale or weight gain.
const MAX_SHIFT: i32 = 40;

/// Standardization parameters in the shifted integer domain.
///
/// Channel `p` divides its accumulated energy by `2^shift[p]` on the way to
/// the 12-bit mid format; `mu` and `sigma` are stored in that scaled domain
/// and `recip = 2^shift / sigma` replaces the division.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedStandardizer {
    pub mu: Vec<i64>,
    pub sigma: Vec<i64>,
    pub recip: Vec<i64>,
    pub shift: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub q: Vec<i64>,
    pub b: i64,
    /// Both `Q` and `b` were multiplied by `2^gain_shift` before rounding;
    /// the sign of the decision is unaffected.
    pub gain_shift: u32,
    pub std: QuantizedStandardizer,
    pub fmts: DatapathFormats,
}

impl QuantizedModel {
    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub name: String,
    pub value: f64,
    pub quantized: f64,
    /// Half an LSB of the parameter's format.
    pub half_lsb: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub params: Vec<ParamError>,
}

impl QuantizationReport {
    /// Names of the parameters that hit a format limit.
    pub fn saturated(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.saturated).map(|p| p.name.as_str()).collect()
    }

    fn push(&mut self, name: String, value: f64, fmt: FixedFormat) -> i64 {
        let mut ovf = Overflow::default();
        let q = quantize(value, fmt, &mut ovf);
        self.params.push(ParamError {
            name,
            value,
            quantized: q.to_f64(),
            half_lsb: 0.5 * fmt.lsb(),
            saturated: ovf.any(),
        });
        q.raw
    }
}

/// Smallest `e >= feature_mid.frac - accumulator.frac` with
/// `(mu + 4 sigma) / 2^e` inside the mid format.
pub fn channel_shift(mu: f64, sigma: f64, fmts: &DatapathFormats) -> i32 {
    let lo = fmts.feature_mid.frac_bits as i32 - fmts.accumulator.frac_bits as i32;
    let top = (mu + 4.0 * sigma).abs();
    let lim = fmts.feature_mid.max_value();
    let mut e = lo;
    while e < MAX_SHIFT && top / f64::from(e).exp2() > lim {
        e += 1;
    }
    e
}

pub fn quantize_standardizer(
    std: &Standardizer,
    fmts: &DatapathFormats,
) -> Result<(QuantizedStandardizer, QuantizationReport)> {
    fmts.validate()?;
    std.validate()?;
    let mut rep = QuantizationReport::default();
    let mut out = QuantizedStandardizer {
        mu: Vec::new(),
        sigma: Vec::new(),
        recip: Vec::new(),
        shift: Vec::new(),
    };
    for (p, (&mu, &sd)) in std.mu.iter().zip(&std.sigma).enumerate() {
        let e = channel_shift(mu, sd, fmts);
        let scale = f64::from(e).exp2();
        out.shift.push(e);
        out.mu.push(rep.push(format!("mu[{p}]"), mu / scale, fmts.std_params));
        out.sigma.push(rep.push(format!("sigma[{p}]"), sd / scale, fmts.std_params));
        out.recip.push(rep.push(format!("recip[{p}]"), scale / sd, fmts.recip));
    }
    Ok((out, rep))
}

pub fn quantize_model(
    model: &TemplateModel,
    std: &Standardizer,
    fmts: &DatapathFormats,
) -> Result<(QuantizedModel, QuantizationReport)> {
    if std.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: std.len(),
        });
    }
    if model.q.iter().chain([&model.b]).any(|v| !v.is_finite()) {
        return Err(Error::Datapath("non-finite model parameter".into()));
    }
    let (qstd, mut rep) = quantize_standardizer(std, fmts)?;
    let peak = model.q.iter().chain([&model.b]).fold(0.0f64, |m, v| m.max(v.abs()));
    let lim = fmts.weight.max_value();
    let mut gain = 0u32;
    if peak > 0.0 {
        while (gain as i32) < MAX_SHIFT && peak * f64::from(gain + 1).exp2() <= lim {
            gain += 1;
        }
    }
    let scale = f64::from(gain).exp2();
    let q = model
        .q
        .iter()
        .enumerate()
        .map(|(p, &v)| rep.push(format!("Q[{p}]"), v * scale, fmts.weight))
        .collect();
    let b = rep.push("b".into(), model.b * scale, fmts.weight);
    Ok((
        QuantizedModel {
            q,
            b,
            gain_shift: gain,
            std: qstd,
            fmts: *fmts,
        },
        rep,
    ))
}

/// Shift, center and scale accumulated energies into the 8-bit feature format.
pub fn fx_standardize(
    acc: &[i64],
    std: &QuantizedStandardizer,
    fmts: &DatapathFormats,
    rep: &mut OverflowReport,
) -> Result<Vec<i64>> {
    if acc.len() != std.mu.len() {
        return Err(Error::Dimension {
            expected: std.mu.len(),
            got: acc.len(),
        });
    }
    let af = fmts.accumulator.frac_bits as i32;
    let mf = fmts.feature_mid.frac_bits as i32;
    let out_shift = fmts.feature_mid.frac_bits + fmts.recip.frac_bits;
    let out_shift = out_shift
        .checked_sub(fmts.feature_out.frac_bits)
        .ok_or_else(|| Error::Format("feature_out has more fraction bits than mid x recip".into()))?;
    let mut phi = Vec::with_capacity(acc.len());
    for (p, &a) in acc.iter().enumerate() {
        let sh = af - mf + std.shift[p];
        if sh < 0 {
            return Err(Error::Datapath(format!("channel {p}: negative mid shift {sh}")));
        }
        let (mid, s) = fmts.feature_mid.saturate(round_shift(a as i128, sh as u32));
        rep.feature_mid += u64::from(s);
        let centered = mid as i128 - std.mu[p] as i128;
        let (v, s) = fmts
            .feature_out
            .saturate(round_shift(centered * std.recip[p] as i128, out_shift));
        rep.feature_out += u64::from(s);
        phi.push(v);
    }
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FxFeatures {
    /// Raw words in the feature output format.
    pub phi: Vec<i64>,
    pub overflow: OverflowReport,
}

impl FxFeatures {
    pub fn to_f64(&self, fmts: &DatapathFormats) -> Vec<f64> {
        self.phi.iter().map(|&r| r as f64 * fmts.feature_out.lsb()).collect()
    }
}

/// The integer front end end to end: cascade, rectify, accumulate, standardize.
pub fn fx_featurize(
    samples: &[i16],
    bank: &QuantizedBank,
    std: &QuantizedStandardizer,
    fmts: &DatapathFormats,
) -> Result<FxFeatures> {
    if std.mu.len() != bank.num_channels() {
        return Err(Error::Dimension {
            expected: bank.num_channels(),
            got: std.mu.len(),
        });
    }
    let (acc, mut overflow) = fx_accumulate(samples, bank, fmts)?;
    let phi = fx_standardize(&acc, std, fmts, &mut overflow)?;
    Ok(FxFeatures { phi, overflow })
}

/// `sum Q_raw phi_raw + b_raw` aligned to the product binary point.
pub fn fx_decision(phi: &[i64], model: &QuantizedModel) -> Result<i64> {
    if phi.len() != model.q.len() {
        return Err(Error::Dimension {
            expected: model.q.len(),
            got: phi.len(),
        });
    }
    let acc: i64 = phi.iter().zip(&model.q).map(|(x, q)| x * q).sum();
    Ok(acc + (model.b << model.fmts.feature_out.frac_bits))
}

/// Sign of the integer decision, zero counted as `+1`.
pub fn fx_classify(phi: &[i64], model: &QuantizedModel) -> Result<i8> {
    fx_decision(phi, model).map(|d| if d >= 0 { 1 } else { -1 })
}
