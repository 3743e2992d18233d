// SPDX-License-Identifier: Apache-2.0

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::{div_round, Clip};
use crate::error::{Error, Result};

pub const TRIM_THRESHOLD_DB: f64 = -40.0;
pub const TRIM_WINDOW_MS: f64 = 20.0;

/// Linear interpolation onto a new rate.
///
/// Output sample `i` sits at input position `i * src / dst`, evaluated in
/// exact integer arithmetic and rounded half away from zero. The output has
/// `floor(len * dst / src)` samples.
pub fn resample_linear(clip: &Clip, target_rate: u32) -> Result<Clip> {
    if target_rate == 0 {
        return Err(Error::Input("target rate must be positive".into()));
    }
    let src = i64::from(clip.sample_rate);
    let dst = i64::from(target_rate);
    if src == dst {
        return Ok(clip.clone());
    }
    let x = &clip.samples;
    let n_out = (x.len() as i64 * dst / src).max(1) as usize;
    let out = (0..n_out as i64)
        .map(|i| {
            let pos = i * src;
            let k = (pos / dst) as usize;
            let frac = pos % dst;
            let a = i64::from(x[k.min(x.len() - 1)]);
            let b = x.get(k + 1).map_or(a, |&v| i64::from(v));
            div_round(a * dst + (b - a) * frac, dst) as i16
        })
        .collect();
    Ok(clip.derive(out, target_rate))
}

fn chunk_rms(x: &[i16]) -> f64 {
    let e: f64 = x.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    (e / x.len() as f64).sqrt()
}

/// Drops leading and trailing chunks whose RMS is more than `threshold_db`
/// below the loudest chunk. Cuts fall on chunk boundaries. A clip with no
/// energy collapses to its first chunk.
pub fn trim_silence(clip: &Clip, threshold_db: f64, window_ms: f64) -> Clip {
    let n = ((f64::from(clip.sample_rate) * window_ms / 1000.0).round() as usize).max(1);
    let rms: Vec<f64> = clip.samples.chunks(n).map(chunk_rms).collect();
    let (loud, peak) = rms
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let span = |a: usize, b: usize| {
        let end = ((b + 1) * n).min(clip.samples.len());
        clip.derive(clip.samples[a * n..end].to_vec(), clip.sample_rate)
    };
    if peak == 0.0 {
        return span(loud, loud);
    }
    let thr = peak * 10f64.powf(threshold_db / 20.0);
    let first = rms.iter().position(|&v| v >= thr).unwrap_or(loud);
    let last = rms.iter().rposition(|&v| v >= thr).unwrap_or(loud);
    span(first, last)
}

/// Non-overlapping windows of exactly `w` samples. A trailing remainder is
/// zero-padded when at least half full and dropped otherwise, except that a
/// clip shorter than one window always yields one padded window.
pub fn frame_fixed(samples: &[i16], w: usize) -> Vec<Vec<i16>> {
    assert!(w > 0, "window length must be positive");
    let mut out: Vec<Vec<i16>> = samples.chunks_exact(w).map(<[i16]>::to_vec).collect();
    let rem = samples.len() % w;
    if rem > 0 && (2 * rem >= w || out.is_empty()) {
        let mut last = samples[samples.len() - rem..].to_vec();
        last.resize(w, 0);
        out.push(last);
    }
    out
}

/// Mean square in raw PCM units.
pub fn power(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / samples.len() as f64
}

/// `10 log10(P_clean / P_noise)` with the noise taken as `noisy - clean`.
pub fn snr_db(clean: &[i16], noisy: &[i16]) -> f64 {
    let n: Vec<f64> = clean
        .iter()
        .zip(noisy)
        .map(|(&c, &y)| f64::from(y) - f64::from(c))
        .collect();
    let pn = n.iter().map(|v| v * v).sum::<f64>() / n.len().max(1) as f64;
    10.0 * (power(clean) / pn).log10()
}

/// Standard normal deviates: SplitMix64 uniforms through Box-Muller.
#[derive(Clone, Debug)]
pub struct GaussianStream {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `(0, 1]` from the top 53 bits.
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (-53f64).exp2()
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let rad = (-2.0 * u1.ln()).sqrt();
        let ang = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(rad * ang.sin());
        rad * ang.cos()
    }
}

/// Adds white Gaussian noise at `snr_db` relative to the clip's own power.
/// Noise samples are rounded half away from zero and the sum saturates.
pub fn add_awgn(clip: &Clip, snr_db: f64, seed: u64) -> Result<Clip> {
    if !snr_db.is_finite() {
        return Err(Error::Input(format!("snr {snr_db} dB is not finite")));
    }
    let p = power(&clip.samples);
    if p == 0.0 {
        return Err(Error::ZeroPower);
    }
    let sd = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut g = GaussianStream::new(seed);
    let out = clip
        .samples
        .iter()
        .map(|&s| {
            let n = (sd * g.next_normal()).round();
            (f64::from(s) + n).clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
        })
        .collect();
    Ok(clip.derive(out, clip.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(s: Vec<i16>, rate: u32) -> Clip {
        Clip::new(s, rate).unwrap()
    }

    fn voiced(n: usize, amp: f64) -> Vec<i16> {
        (0..n)
            .map(|i| (amp * (i as f64 * 0.07).sin() * (1.0 + 0.3 * (i as f64 * 0.0013).cos())).round() as i16)
            .collect()
    }

    #[test]
    fn resample_identity_and_length() {
        let c = clip(voiced(1001, 9000.0), 8000);
        assert_eq!(resample_linear(&c, 8000).unwrap(), c);
        assert_eq!(resample_linear(&c, 16_000).unwrap().len(), 2002);
        assert_eq!(resample_linear(&c, 44_100).unwrap().len(), 1001 * 44_100 / 8000);
        assert!(resample_linear(&c, 0).is_err());
    }

    #[test]
    fn upsampled_ramp_midpoints_are_averages() {
        let ramp: Vec<i16> = (0..400).map(|i| (i * 6 - 1200) as i16).collect();
        let up = resample_linear(&clip(ramp.clone(), 8000), 16_000).unwrap();
        for k in 0..399 {
            assert_eq!(up.samples[2 * k], ramp[k]);
            assert_eq!(up.samples[2 * k + 1], (ramp[k] + ramp[k + 1]) / 2);
        }
    }

    #[test]
    fn trim_removes_padding_and_is_idempotent() {
        let mut s = vec![0i16; 1600];
        let core = voiced(4000, 12_000.0);
        s.extend(&core);
        s.extend(vec![3i16; 2400]);
        let c = clip(s, 8000);
        let t = trim_silence(&c, TRIM_THRESHOLD_DB, TRIM_WINDOW_MS);
        // 160-sample chunks: padding is exactly 10 chunks in front
        assert_eq!(&t.samples[..4000], &core[..]);
        assert!(t.len() <= 4000 + 160);
        assert_eq!(trim_silence(&t, TRIM_THRESHOLD_DB, TRIM_WINDOW_MS), t);
    }

    #[test]
    fn trim_all_zero_keeps_one_window() {
        let c = clip(vec![0; 1000], 8000);
        let t = trim_silence(&c, TRIM_THRESHOLD_DB, TRIM_WINDOW_MS);
        assert_eq!(t.len(), 160);
        assert_eq!(trim_silence(&t, TRIM_THRESHOLD_DB, TRIM_WINDOW_MS), t);
    }

    #[test]
    fn framing_rules() {
        let x: Vec<i16> = (0..100).map(|i| i as i16 + 1).collect();
        assert_eq!(frame_fixed(&x, 50).len(), 2);
        let f = frame_fixed(&x[..80], 50);
        assert_eq!(f.len(), 2);
        assert_eq!(&f[1][..30], &x[50..80]);
        assert!(f[1][30..].iter().all(|&v| v == 0));
        assert_eq!(frame_fixed(&x[..70], 50).len(), 1);
        let short = frame_fixed(&x[..10], 50);
        assert_eq!(short.len(), 1);
        assert_eq!(&short[0][..10], &x[..10]);
    }

    #[test]
    fn awgn_extremes_and_determinism() {
        let c = clip(voiced(16_000, 8000.0), 16_000);
        let quiet = add_awgn(&c, 200.0, 1).unwrap();
        assert!(quiet.samples.iter().zip(&c.samples).all(|(a, b)| (a - b).abs() <= 1));
        assert_eq!(add_awgn(&c, 5.0, 42).unwrap(), add_awgn(&c, 5.0, 42).unwrap());
        assert_ne!(add_awgn(&c, 5.0, 42).unwrap(), add_awgn(&c, 5.0, 43).unwrap());
        assert!(matches!(add_awgn(&clip(vec![0; 10], 8000), 10.0, 0), Err(Error::ZeroPower)));
        assert!(add_awgn(&c, f64::NAN, 0).is_err());
    }

    #[test]
    fn gaussian_stream_moments() {
        let mut g = GaussianStream::new(7);
        let z: Vec<f64> = (0..200_000).map(|_| g.next_normal()).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64;
        assert!(m.abs() < 0.01);
        assert!((v - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn measured_snr_is_on_target(snr in -5.0f64..30.0, seed in any::<u64>()) {
            let c = clip(voiced(16_000, 6000.0), 16_000);
            let y = add_awgn(&c, snr, seed).unwrap();
            prop_assert!((snr_db(&c.samples, &y.samples) - snr).abs() < 0.5);
        }

        #[test]
        fn constant_stays_constant(v in any::<i16>(), len in 2usize..300, rate in prop::sample::select(vec![8000u32, 16_000, 44_100])) {
            let c = clip(vec![v; len], 8000);
            let r = resample_linear(&c, rate).unwrap();
            prop_assert!(r.samples.iter().all(|&s| s == v));
        }

        #[test]
        fn frames_tile_the_prefix(len in 1usize..500, w in 1usize..80) {
            let x: Vec<i16> = (0..len).map(|i| (i % 300) as i16 + 1).collect();
            let f = frame_fixed(&x, w);
            prop_assert!(f.iter().all(|fr| fr.len() == w));
            let flat: Vec<i16> = f.concat();
            let keep = flat.len().min(len);
            prop_assert_eq!(&flat[..keep], &x[..keep]);
        }
    }
}
