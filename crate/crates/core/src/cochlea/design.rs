// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use super::{CarStageCoeffs, CochleaConfig, FilterBank};
use crate::error::{Error, Result};

const GREENWOOD_A: f64 = 165.4;
const GREENWOOD_ALPHA: f64 = 2.1;

/// Greenwood place-to-frequency map, `x` = 0 at the apex and 1 at the base.
pub fn greenwood_freq(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("cochlear position {x} outside [0, 1]")));
    }
    Ok(GREENWOOD_A * (10f64.powf(GREENWOOD_ALPHA * x) - 1.0))
}

/// Inverse of [`greenwood_freq`]; unbounded above, so callers clamp.
pub fn greenwood_position(freq: f64) -> Result<f64> {
    if !(freq >= 0.0 && freq.is_finite()) {
        return Err(Error::Domain(format!("frequency {freq} is negative or not finite")));
    }
    Ok((freq / GREENWOOD_A + 1.0).log10() / GREENWOOD_ALPHA)
}

/// Designs one CAR stage with its pole at `f_pole`.
///
/// The zero offset `k` equals `c0`, which keeps the zeros about half an
/// octave above the poles, and `g` normalizes the DC gain to one.
pub fn design_stage(f_pole: f64, sample_rate: f64, damping: f64) -> Result<CarStageCoeffs> {
    design_stage_at(None, f_pole, sample_rate, damping)
}

fn design_stage_at(
    stage: Option<usize>,
    f_pole: f64,
    sample_rate: f64,
    damping: f64,
) -> Result<CarStageCoeffs> {
    let fail = |reason: String| Error::Design { stage, reason };
    if !(f_pole > 0.0 && f_pole < 0.5 * sample_rate) {
        return Err(fail(format!(
            "pole frequency {f_pole} Hz outside (0, {}) Hz",
            0.5 * sample_rate
        )));
    }
    let theta = 2.0 * PI * f_pole / sample_rate;
    let a0 = theta.cos();
    let c0 = theta.sin();
    let r = 1.0 - damping * theta;
    let k = c0;
    // 1 - 2 a0 r + r^2 rewritten without cancellation for small theta
    let one_minus_r = damping * theta;
    let half = (0.5 * theta).sin();
    let num = one_minus_r * one_minus_r + 4.0 * r * half * half;
    let g = num / (num + k * c0 * r);
    let coeffs = CarStageCoeffs {
        a0,
        c0,
        r,
        k,
        g,
        f_pole,
    };
    coeffs.check().map_err(fail)?;
    Ok(coeffs)
}

pub fn design_filterbank(config: &CochleaConfig) -> Result<FilterBank> {
    config.validate()?;
    let stages = config
        .positions()
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let f = greenwood_freq(x)?;
            design_stage_at(Some(i + 1), f, config.sample_rate, config.damping)
        })
        .collect::<Result<Vec<_>>>()?;
    let bank = FilterBank {
        config: config.clone(),
        stages,
    };
    bank.validate()?;
    Ok(bank)
}
