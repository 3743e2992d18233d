// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Q-format descriptor: `total_bits` wide word with `frac_bits` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
    pub signed: bool,
}

impl FixedFormat {
    pub const fn signed(total_bits: u32, frac_bits: u32) -> Self {
        Self {
            total_bits,
            frac_bits,
            signed: true,
        }
    }

    pub const fn unsigned(total_bits: u32, frac_bits: u32) -> Self {
        Self {
            total_bits,
            frac_bits,
            signed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.total_bits) {
            return Err(Error::Format(format!(
                "total_bits = {} outside 1..=32",
                self.total_bits
            )));
        }
        if self.frac_bits >= self.total_bits {
            return Err(Error::Format(format!(
                "frac_bits = {} must be below total_bits = {}",
                self.frac_bits, self.total_bits
            )));
        }
        Ok(())
    }

    pub fn min_raw(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.total_bits - 1))
        } else {
            0
        }
    }

    pub fn max_raw(&self) -> i64 {
        if self.signed {
            (1i64 << (self.total_bits - 1)) - 1
        } else {
            (1i64 << self.total_bits) - 1
        }
    }

    /// Value of one LSB.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Clamps a wide integer into range; the flag reports saturation.
    #[inline]
    pub fn saturate(&self, raw: i128) -> (i64, bool) {
        let lo = self.min_raw() as i128;
        let hi = self.max_raw() as i128;
        if raw > hi {
            (hi as i64, true)
        } else if raw < lo {
            (lo as i64, true)
        } else {
            (raw as i64, false)
        }
    }

    /// Hex digits needed for one word of this format.
    pub fn hex_digits(&self) -> usize {
        self.total_bits.div_ceil(4) as usize
    }

    /// `s12.10` / `u30.12` style label.
    pub fn label(&self) -> String {
        format!(
            "{}{}.{}",
            if self.signed { 's' } else { 'u' },
            self.total_bits,
            self.frac_bits
        )
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad format label {s:?}"));
        let (signed, rest) = match s.as_bytes().first() {
            Some(b's') => (true, &s[1..]),
            Some(b'u') => (false, &s[1..]),
            _ => return Err(bad()),
        };
        let (t, f) = rest.split_once('.').ok_or_else(bad)?;
        let fmt = Self {
            total_bits: t.parse().map_err(|_| bad())?,
            frac_bits: f.parse().map_err(|_| bad())?,
            signed,
        };
        fmt.validate()?;
        Ok(fmt)
    }
}

/// Count of saturation events, returned per call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overflow {
    pub events: u64,
}

impl Overflow {
    #[inline]
    pub fn record(&mut self, saturated: bool) {
        self.events += u64::from(saturated);
    }

    pub fn any(&self) -> bool {
        self.events > 0
    }
}

/// Arithmetic right shift with round-half-away-from-zero.
#[inline]
pub fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let half = 1i128 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

/// Moves `v` from `from_frac` fractional bits to `to_frac`, rounding once.
#[inline]
pub fn rescale(v: i128, from_frac: u32, to_frac: u32) -> i128 {
    if from_frac >= to_frac {
        round_shift(v, from_frac - to_frac)
    } else {
        v << (to_frac - from_frac)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedValue {
    pub raw: i64,
    pub fmt: FixedFormat,
}

impl FixedValue {
    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    pub fn is_saturated(&self) -> bool {
        self.raw == self.fmt.max_raw() || (self.fmt.signed && self.raw == self.fmt.min_raw())
    }
}

/// Round-half-away-from-zero then saturate.
pub fn quantize(x: f64, fmt: FixedFormat, ovf: &mut Overflow) -> FixedValue {
    debug_assert!(x.is_finite(), "quantize expects finite input");
    let scaled = (x * (fmt.frac_bits as f64).exp2()).round();
    let (raw, sat) = if scaled >= fmt.max_raw() as f64 {
        (fmt.max_raw(), scaled > fmt.max_raw() as f64)
    } else if scaled <= fmt.min_raw() as f64 {
        (fmt.min_raw(), scaled < fmt.min_raw() as f64)
    } else {
        (scaled as i64, false)
    };
    ovf.record(sat);
    FixedValue { raw, fmt }
}

pub fn dequantize(v: FixedValue) -> f64 {
    v.to_f64()
}

/// Exact product, then one rounding and saturation into `out`.
pub fn fx_mul(a: FixedValue, b: FixedValue, out: FixedFormat, ovf: &mut Overflow) -> FixedValue {
    let wide = a.raw as i128 * b.raw as i128;
    let r = rescale(wide, a.fmt.frac_bits + b.fmt.frac_bits, out.frac_bits);
    let (raw, sat) = out.saturate(r);
    ovf.record(sat);
    FixedValue { raw, fmt: out }
}

/// Exact aligned sum, then one rounding and saturation into `out`.
pub fn fx_add(a: FixedValue, b: FixedValue, out: FixedFormat, ovf: &mut Overflow) -> FixedValue {
    let f = a.fmt.frac_bits.max(b.fmt.frac_bits);
    let wide = ((a.raw as i128) << (f - a.fmt.frac_bits)) + ((b.raw as i128) << (f - b.fmt.frac_bits));
    let (raw, sat) = out.saturate(rescale(wide, f, out.frac_bits));
    ovf.record(sat);
    FixedValue { raw, fmt: out }
}

/// Raw words sharing one format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTensor {
    pub raw: Vec<i64>,
    pub fmt: FixedFormat,
}

impl FixedTensor {
    pub fn quantize(xs: &[f64], fmt: FixedFormat, ovf: &mut Overflow) -> Self {
        Self {
            raw: xs.iter().map(|&x| quantize(x, fmt, ovf).raw).collect(),
            fmt,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| r as f64 * self.fmt.lsb()).collect()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q15: FixedFormat = FixedFormat::signed(16, 15);
    const F4: FixedFormat = FixedFormat::signed(8, 4);

    fn q(x: f64, fmt: FixedFormat) -> FixedValue {
        quantize(x, fmt, &mut Overflow::default())
    }

    #[test]
    fn format_ranges() {
        assert_eq!(Q15.min_raw(), -32768);
        assert_eq!(Q15.max_raw(), 32767);
        let u = FixedFormat::unsigned(26, 12);
        assert_eq!(u.min_raw(), 0);
        assert_eq!(u.max_raw(), (1 << 26) - 1);
        assert!(FixedFormat::signed(33, 0).validate().is_err());
        assert!(FixedFormat::signed(8, 8).validate().is_err());
        assert!(FixedFormat::unsigned(1, 0).validate().is_ok());
        assert_eq!(FixedFormat::parse_label("s12.10").unwrap(), FixedFormat::signed(12, 10));
        assert_eq!(FixedFormat::unsigned(30, 12).label(), "u30.12");
        assert!(FixedFormat::parse_label("x12.1").is_err());
    }

    #[test]
    fn quantize_examples() {
        for fmt in [Q15, F4, FixedFormat::unsigned(26, 12)] {
            assert_eq!(q(0.0, fmt).raw, 0);
        }
        let mut ovf = Overflow::default();
        assert_eq!(quantize(1.0, Q15, &mut ovf).raw, 32767);
        assert_eq!(ovf.events, 1);
        assert_eq!(q(0.4375, F4).raw, 7);
        assert_eq!(q(-0.03125, F4).raw, -1); // -0.5 LSB rounds away from zero
        assert_eq!(q(0.03125, F4).raw, 1);
    }

    #[test]
    fn mul_and_add_examples() {
        let mut ovf = Overflow::default();
        let a = FixedValue { raw: 7, fmt: F4 };
        let b = FixedValue { raw: 4, fmt: F4 };
        assert_eq!(fx_mul(a, b, F4, &mut ovf).raw, 2);
        let zero = FixedValue { raw: 0, fmt: F4 };
        assert_eq!(fx_mul(zero, b, F4, &mut ovf).raw, 0);
        let max = FixedValue { raw: 127, fmt: F4 };
        assert_eq!(fx_add(max, b, F4, &mut ovf).raw, 127);
        assert_eq!(ovf.events, 1);
        assert_eq!(fx_add(max, zero, F4, &mut ovf).raw, 127);
        assert_eq!(ovf.events, 1);
        // mixed formats align before adding
        let c = FixedValue { raw: 3, fmt: FixedFormat::signed(8, 2) };
        assert_eq!(fx_add(c, b, F4, &mut ovf).raw, 12 + 4);
    }

    #[test]
    fn round_shift_is_symmetric() {
        assert_eq!(round_shift(36, 4), 2);
        assert_eq!(round_shift(-36, 4), -2);
        assert_eq!(round_shift(8, 4), 1);
        assert_eq!(round_shift(-8, 4), -1);
        assert_eq!(round_shift(7, 4), 0);
        assert_eq!(rescale(3, 2, 4), 12);
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(x in -300.0f64..300.0, y in -300.0f64..300.0, total in 2u32..=32, fr in 0u32..31, signed: bool) {
            let fmt = FixedFormat { total_bits: total, frac_bits: fr.min(total - 1), signed };
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(q(lo, fmt).raw <= q(hi, fmt).raw);
        }

        #[test]
        fn saturated_values_are_fixed_points(x in -1e6f64..1e6, total in 2u32..=16, fr in 0u32..15, signed: bool) {
            let fmt = FixedFormat { total_bits: total, frac_bits: fr.min(total - 1), signed };
            let v = q(x, fmt);
            let mut ovf = Overflow::default();
            let again = quantize(v.to_f64(), fmt, &mut ovf);
            prop_assert_eq!(again, v);
            prop_assert_eq!(ovf.events, 0);
        }

        #[test]
        fn in_range_error_is_half_lsb(x in -0.999f64..0.999) {
            let v = q(x, Q15);
            prop_assert!((v.to_f64() - x).abs() <= Q15.lsb() / 2.0);
        }

        #[test]
        fn mul_matches_rounded_real_product(a in -128i64..128, b in -128i64..128) {
            let av = FixedValue { raw: a, fmt: F4 };
            let bv = FixedValue { raw: b, fmt: F4 };
            let wide = FixedFormat::signed(32, 4);
            let got = fx_mul(av, bv, wide, &mut Overflow::default());
            let want = (av.to_f64() * bv.to_f64() * 16.0).round() as i64;
            prop_assert_eq!(got.raw, want);
        }
    }
}
