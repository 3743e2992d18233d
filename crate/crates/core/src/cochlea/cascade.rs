// SPDX-License-Identifier: Apache-2.0

use super::{Biquad, FeatureVector, FilterBank, Standardizer};
use crate::error::{Error, Result};

/// 16-bit PCM to the `[-1, 1)` scale used by the floating-point datapath.
#[inline]
pub fn pcm_to_real(x: i16) -> f64 {
    f64::from(x) / 32768.0
}

/// Inner-hair-cell model: half-wave rectification.
#[inline]
pub fn ihc_hwr(b: f64) -> f64 {
    // `max` keeps -0.0 and NaN handling out of the accumulator
    if b > 0.0 {
        b
    } else {
        0.0
    }
}

/// Per-stage delay elements of a transposed direct-form-II cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeState {
    delays: Vec<[f64; 2]>,
}

impl CascadeState {
    pub fn new(num_channels: usize) -> Self {
        Self {
            delays: vec![[0.0; 2]; num_channels],
        }
    }

    pub fn for_bank(bank: &FilterBank) -> Self {
        Self::new(bank.num_channels())
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn reset(&mut self) {
        self.delays.iter_mut().for_each(|d| *d = [0.0; 2]);
    }

    pub fn is_reset(&self) -> bool {
        self.delays.iter().all(|d| *d == [0.0; 2])
    }

    /// Pushes one sample through the cascade and writes every stage output
    /// (`b_{p,n}`) into `out`. Stage `p` is fed by stage `p - 1`.
    pub fn step(&mut self, bank: &FilterBank, x: f64, out: &mut [f64]) -> Result<()> {
        let p = bank.num_channels();
        if self.delays.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: self.delays.len(),
            });
        }
        if out.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: out.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Datapath(format!("non-finite input sample {x}")));
        }
        let mut u = x;
        for ((stage, d), o) in bank.stages.iter().zip(&mut self.delays).zip(out.iter_mut()) {
            u = df2t(&stage.biquad(), d, u);
            *o = u;
        }
        Ok(())
    }
}

#[inline(always)]
fn df2t(q: &Biquad, d: &mut [f64; 2], x: f64) -> f64 {
    let y = q.b[0] * x + d[0];
    d[0] = q.b[1] * x - q.a[1] * y + d[1];
    d[1] = q.b[2] * x - q.a[2] * y;
    y
}

/// Runs one window through a freshly reset cascade and sums the rectified
/// output of every stage: `s_p = sum_n HWR(b_{p,n})`.
pub fn accumulate_window(bank: &FilterBank, samples: &[f64]) -> Result<Vec<f64>> {
    let w = bank.window_len();
    if samples.len() != w {
        return Err(Error::Input(format!(
            "window has {} samples, expected W = {w}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Datapath(format!("non-finite input sample {bad}")));
    }
    let coeffs: Vec<Biquad> = bank.stages.iter().map(|s| s.biquad()).collect();
    let mut delays = vec![[0.0f64; 2]; coeffs.len()];
    let mut sums = vec![0.0f64; coeffs.len()];
    for &x in samples {
        let mut u = x;
        for ((q, d), s) in coeffs.iter().zip(&mut delays).zip(&mut sums) {
            u = df2t(q, d, u);
            *s += ihc_hwr(u);
        }
    }
    Ok(sums)
}

/// Accumulate, then standardize: the full floating-point kernel vector.
pub fn featurize(signal: &[f64], bank: &FilterBank, std: &Standardizer) -> Result<FeatureVector> {
    let s = accumulate_window(bank, signal)?;
    Ok(FeatureVector {
        phi: std.standardize(&s)?,
        source: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cochlea::{design_filterbank, design_stage, CochleaConfig};
    use proptest::prelude::*;

    fn bank(p: usize, w: usize) -> FilterBank {
        design_filterbank(&CochleaConfig::new(p, 16_000.0).with_window_len(w)).unwrap()
    }

    fn single(f: f64, w: usize) -> FilterBank {
        let mut cfg = CochleaConfig::new(1, 16_000.0).with_window_len(w);
        let st = design_stage(f, 16_000.0, cfg.damping).unwrap();
        cfg.x_lo = 0.0;
        cfg.x_hi = 1.0;
        FilterBank {
            config: cfg,
            stages: vec![st],
        }
    }

    /// Stage-major re-simulation: filter the whole signal through stage 1,
    /// then the result through stage 2, and so on, directly from the
    /// difference equation of the transfer function.
    fn stage_major(bank: &FilterBank, x: &[f64]) -> Vec<Vec<f64>> {
        let mut outs = Vec::new();
        let mut u = x.to_vec();
        for st in &bank.stages {
            let q = st.biquad();
            let mut y = vec![0.0; u.len()];
            for n in 0..u.len() {
                let xm1 = if n >= 1 { u[n - 1] } else { 0.0 };
                let xm2 = if n >= 2 { u[n - 2] } else { 0.0 };
                let ym1 = if n >= 1 { y[n - 1] } else { 0.0 };
                let ym2 = if n >= 2 { y[n - 2] } else { 0.0 };
                y[n] = q.b[0] * u[n] + q.b[1] * xm1 + q.b[2] * xm2 - q.a[1] * ym1 - q.a[2] * ym2;
            }
            outs.push(y.clone());
            u = y;
        }
        outs
    }

    fn test_signal(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                0.3 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                    + 0.2 * (2.0 * std::f64::consts::PI * 2300.0 * t).cos()
                    + 0.05 * ((i * 7919) % 101) as f64 / 101.0
            })
            .collect()
    }

    #[test]
    fn zero_in_zero_out() {
        let b = bank(4, 8);
        let mut st = CascadeState::for_bank(&b);
        let mut out = vec![1.0; 4];
        st.step(&b, 0.0, &mut out).unwrap();
        assert_eq!(out, vec![0.0; 4]);
        assert!(st.is_reset());
    }

    #[test]
    fn impulse_response_starts_at_g() {
        let b = single(1000.0, 1);
        let mut st = CascadeState::for_bank(&b);
        let mut out = [0.0];
        st.step(&b, 1.0, &mut out).unwrap();
        assert_eq!(out[0], b.stages[0].g);
        assert_eq!(accumulate_window(&b, &[1.0]).unwrap(), vec![b.stages[0].g]);
    }

    #[test]
    fn dc_step_settles_to_input() {
        for f in [120.0, 1000.0, 6000.0] {
            let b = single(f, 1);
            let r = b.stages[0].r;
            let n = (40.0 / -r.ln()).ceil() as usize;
            let mut st = CascadeState::for_bank(&b);
            let mut out = [0.0];
            for _ in 0..n {
                st.step(&b, 0.7, &mut out).unwrap();
            }
            assert!((out[0] - 0.7).abs() < 1e-6, "f = {f}: {}", out[0]);
        }
    }

    #[test]
    fn rejects_non_finite_and_wrong_sizes() {
        let b = bank(3, 4);
        let mut st = CascadeState::for_bank(&b);
        let mut out = [0.0; 3];
        assert!(matches!(st.step(&b, f64::NAN, &mut out), Err(Error::Datapath(_))));
        let mut small = CascadeState::new(2);
        assert!(small.step(&b, 0.0, &mut out).is_err());
        assert!(matches!(accumulate_window(&b, &[0.0; 3]), Err(Error::Input(_))));
        assert!(matches!(
            accumulate_window(&b, &[0.0, f64::INFINITY, 0.0, 0.0]),
            Err(Error::Datapath(_))
        ));
    }

    #[test]
    fn zero_window_accumulates_zero() {
        let b = bank(5, 64);
        assert_eq!(accumulate_window(&b, &[0.0; 64]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn streaming_matches_stage_major_resimulation() {
        let b = bank(12, 2000);
        let x = test_signal(2000);
        let s = accumulate_window(&b, &x).unwrap();
        let outs = stage_major(&b, &x);
        let mut st = CascadeState::for_bank(&b);
        let mut buf = vec![0.0; 12];
        for (n, &xn) in x.iter().enumerate() {
            st.step(&b, xn, &mut buf).unwrap();
            for p in 0..12 {
                assert!((buf[p] - outs[p][n]).abs() <= 1e-12 * (1.0 + outs[p][n].abs()));
            }
        }
        for p in 0..12 {
            let want: f64 = outs[p].iter().map(|&v| ihc_hwr(v)).sum();
            assert!((s[p] - want).abs() <= 1e-9 * want.max(1.0), "p = {p}");
        }
    }

    #[test]
    fn accumulation_order_does_not_matter() {
        let b = bank(6, 1500);
        let x = test_signal(1500);
        let s = accumulate_window(&b, &x).unwrap();
        let outs = stage_major(&b, &x);
        for p in 0..6 {
            let mut d: Vec<f64> = outs[p].iter().map(|&v| ihc_hwr(v)).collect();
            d.reverse();
            let rev: f64 = d.iter().sum();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sorted: f64 = d.iter().sum();
            for alt in [rev, sorted] {
                assert!((s[p] - alt).abs() <= 1e-9 * s[p].max(1e-300));
            }
        }
    }

    #[test]
    fn hwr_cases() {
        assert_eq!(ihc_hwr(-3.2), 0.0);
        assert_eq!(ihc_hwr(5.0), 5.0);
        assert_eq!(ihc_hwr(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn hwr_is_monotone_idempotent_nonnegative(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(ihc_hwr(lo) <= ihc_hwr(hi));
            prop_assert_eq!(ihc_hwr(ihc_hwr(a)), ihc_hwr(a));
            prop_assert!(ihc_hwr(a) >= 0.0);
        }

        #[test]
        fn cascade_is_positively_homogeneous(alpha in 0.01f64..50.0, seed in 0u64..1000) {
            let b = bank(8, 300);
            let x: Vec<f64> = (0..300)
                .map(|i| (((i as u64 + 1) * (seed + 17) * 2654435761) % 2001) as f64 / 1000.0 - 1.0)
                .collect();
            let mut s1 = CascadeState::for_bank(&b);
            let mut s2 = CascadeState::for_bank(&b);
            let mut o1 = vec![0.0; 8];
            let mut o2 = vec![0.0; 8];
            let mut scale = 0.0f64;
            for &xn in &x {
                s1.step(&b, xn, &mut o1).unwrap();
                s2.step(&b, alpha * xn, &mut o2).unwrap();
                scale = o1.iter().fold(scale, |m, v| m.max(v.abs()));
                for p in 0..8 {
                    let want = alpha * o1[p];
                    prop_assert!((o2[p] - want).abs() <= 1e-12 * alpha * scale + 1e-9 * want.abs());
                }
            }
            let a1 = accumulate_window(&b, &x).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let a2 = accumulate_window(&b, &xs).unwrap();
            for p in 0..8 {
                prop_assert!((a2[p] - alpha * a1[p]).abs() <= 1e-9 * (alpha * a1[p]).max(1e-12));
            }
        }
    }
}
