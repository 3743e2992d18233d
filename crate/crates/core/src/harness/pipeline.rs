// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{derive_seed, Confusion, EvalReport, ExperimentConfig, FeatureCache, Mode};
use crate::audio::{add_awgn, frame_fixed, read_wav, resample_linear, trim_silence, Clip, DatasetManifest, Split};
use crate::cochlea::{accumulate_window, fit_standardizer, pcm_to_real, FilterBank, Standardizer};
use crate::error::{Error, Result};
use crate::fixedpoint::{
    fx_accumulate, fx_decision, fx_standardize, quantize_model, DatapathFormats, OverflowReport, QuantizedBank,
    QuantizedModel,
};
use crate::svm::{
    cross_validate, decision_counted, sign_label, train_template_with, CvResult, ModelFile, TemplateModel,
    TemplateParams, TrainingSet,
};

/// A decoded, trimmed clip at the filter bank's sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedClip {
    pub source: String,
    pub label: i8,
    pub signal: Vec<i16>,
    pub sample_rate: u32,
}

impl PreparedClip {
    /// SHA-256 over the rate and the little-endian samples.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate.to_le_bytes());
        for s in &self.signal {
            h.update(s.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Copy with white noise at `snr_db`. A silent clip is returned unchanged.
    pub fn with_noise(&self, snr_db: f64, seed: u64) -> Result<Self> {
        let clip = Clip::new(self.signal.clone(), self.sample_rate)?;
        let signal = match add_awgn(&clip, snr_db, seed) {
            Ok(c) => c.samples,
            Err(Error::ZeroPower) => self.signal.clone(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            signal,
            ..self.clone()
        })
    }
}

/// Per-window accumulated channel energies of one clip.
#[derive(Clone, Debug, PartialEq)]
pub enum WindowFeatures {
    Float(Vec<Vec<f64>>),
    Fixed {
        acc: Vec<Vec<i64>>,
        overflow: OverflowReport,
    },
}

impl WindowFeatures {
    pub fn len(&self) -> usize {
        match self {
            WindowFeatures::Float(a) => a.len(),
            WindowFeatures::Fixed { acc, .. } => acc.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn prepare_clip(path: &Path, label: i8, cfg: &ExperimentConfig) -> Result<PreparedClip> {
    let rate = cfg.cochlea.sample_rate;
    if rate.fract() != 0.0 || rate < 1.0 || rate > f64::from(u32::MAX) {
        return Err(Error::Config(format!("sample rate {rate} is not a whole number of hertz")));
    }
    let mut clip = read_wav(path)?;
    if cfg.audio.trim {
        clip = trim_silence(&clip, cfg.audio.trim_db, cfg.audio.trim_ms);
    }
    let clip = resample_linear(&clip, rate as u32)?;
    Ok(PreparedClip {
        source: clip.source,
        label,
        signal: clip.samples,
        sample_rate: clip.sample_rate,
    })
}

/// Decodes one split of a manifest. Entries are listed in manifest order and
/// decoded in parallel.
pub fn load_split(manifest: &DatasetManifest, split: Split, cfg: &ExperimentConfig) -> Result<Vec<PreparedClip>> {
    let entries: Vec<_> = manifest.split(split).collect();
    entries
        .par_iter()
        .map(|e| prepare_clip(&manifest.resolve(e), e.label, cfg))
        .collect()
}

/// Accumulations for every window of a clip, through the cache.
pub fn window_features(
    clip: &PreparedClip,
    bank: &FilterBank,
    mode: Mode,
    fmts: &DatapathFormats,
    cache: &FeatureCache,
) -> Result<WindowFeatures> {
    if f64::from(clip.sample_rate) != bank.config.sample_rate {
        return Err(Error::Input(format!(
            "{}: clip at {} Hz, bank at {} Hz",
            clip.source, clip.sample_rate, bank.config.sample_rate
        )));
    }
    let key = FeatureCache::key(&bank.content_hash(), &clip.content_hash(), mode, fmts);
    cache.get_or_compute(&key, || {
        let windows = frame_fixed(&clip.signal, bank.window_len());
        match mode {
            Mode::Float => windows
                .iter()
                .map(|w| accumulate_window(bank, &w.iter().map(|&s| pcm_to_real(s)).collect::<Vec<_>>()))
                .collect::<Result<_>>()
                .map(WindowFeatures::Float),
            Mode::Fixed => {
                let qbank = quantize_bank(bank, fmts)?;
                let mut overflow = OverflowReport::default();
                let mut acc = Vec::with_capacity(windows.len());
                for w in &windows {
                    let (a, o) = fx_accumulate(w, &qbank, fmts)?;
                    overflow.merge(&o);
                    acc.push(a);
                }
                Ok(WindowFeatures::Fixed { acc, overflow })
            }
        }
    })
}

fn quantize_bank(bank: &FilterBank, fmts: &DatapathFormats) -> Result<QuantizedBank> {
    let (q, ovf) = QuantizedBank::from_bank(bank, fmts)?;
    if ovf.any() {
        return Err(Error::Datapath(format!(
            "filter coefficients saturate in {}",
            fmts.coeff.label()
        )));
    }
    Ok(q)
}

/// Majority vote over window decisions; a tie goes to the sign of their sum.
pub fn clip_vote(decisions: &[f64]) -> i8 {
    let pos = decisions.iter().filter(|&&f| sign_label(f) > 0).count();
    let neg = decisions.len() - pos;
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => sign_label(decisions.iter().sum()),
    }
}

/// Everything needed to score windows in one arithmetic mode.
struct Scorer<'a> {
    mode: Mode,
    bank: &'a FilterBank,
    model: TemplateModel,
    std: Standardizer,
    fixed: Option<QuantizedModel>,
    fmts: DatapathFormats,
}

#[derive(Default)]
struct ClipScore {
    decisions: Vec<f64>,
    macs: usize,
    overflow: OverflowReport,
}

impl<'a> Scorer<'a> {
    fn new(
        mode: Mode,
        bank: &'a FilterBank,
        model: TemplateModel,
        std: Standardizer,
        fmts: &DatapathFormats,
    ) -> Result<Self> {
        let fixed = match mode {
            Mode::Float => None,
            Mode::Fixed => Some(quantize_model(&model, &std, fmts)?.0),
        };
        Ok(Self {
            mode,
            bank,
            model,
            std,
            fixed,
            fmts: *fmts,
        })
    }

    fn score(&self, clip: &PreparedClip, cache: &FeatureCache) -> Result<ClipScore> {
        let mut out = ClipScore::default();
        match window_features(clip, self.bank, self.mode, &self.fmts, cache)? {
            WindowFeatures::Float(acc) => {
                for a in &acc {
                    let (f, macs) = decision_counted(&self.std.standardize(a)?, &self.model)?;
                    out.decisions.push(f);
                    out.macs = macs;
                }
            }
            WindowFeatures::Fixed { acc, overflow } => {
                let qm = self.fixed.as_ref().expect("fixed scorer carries a quantized model");
                out.overflow = overflow;
                for a in &acc {
                    let phi = fx_standardize(a, &qm.std, &self.fmts, &mut out.overflow)?;
                    out.decisions.push(fx_decision(&phi, qm)? as f64);
                    out.macs = qm.dim();
                }
            }
        }
        Ok(out)
    }

    fn score_all(&self, clips: &[PreparedClip], cache: &FeatureCache) -> Result<Vec<ClipScore>> {
        clips.par_iter().map(|c| self.score(c, cache)).collect()
    }
}

fn tally(clips: &[PreparedClip], scores: &[ClipScore]) -> Confusion {
    let mut c = Confusion::default();
    for (clip, s) in clips.iter().zip(scores) {
        c.record(clip.label, clip_vote(&s.decisions));
    }
    c
}

/// A trained model plus what was learned along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub file: ModelFile,
    pub cv: Option<CvResult>,
    pub windows: usize,
}

/// Float-domain training: fit the standardizer on the training windows,
/// pick `C` by cross-validation when the grid has more than one entry, solve,
/// and record clip-level training accuracy.
pub fn train(clips: &[PreparedClip], bank: &FilterBank, cfg: &ExperimentConfig, cache: &FeatureCache) -> Result<Trained> {
    let feats: Vec<WindowFeatures> = clips
        .par_iter()
        .map(|c| window_features(c, bank, Mode::Float, &cfg.formats, cache))
        .collect::<Result<_>>()?;
    let p = bank.num_channels();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (clip, f) in clips.iter().zip(&feats) {
        let WindowFeatures::Float(acc) = f else {
            unreachable!("float features requested")
        };
        for a in acc {
            flat.extend_from_slice(a);
            labels.push(clip.label);
        }
    }
    let m = labels.len();
    let raw = Array2::from_shape_vec((m, p), flat).map_err(|e| Error::TrainingSet(e.to_string()))?;
    let std = fit_standardizer(raw.view())?;
    let mut phi = raw;
    for mut row in phi.rows_mut() {
        let s = std.standardize(row.as_slice().expect("rows are contiguous"))?;
        row.assign(&ndarray::ArrayView1::from(&s));
    }
    let data = TrainingSet::new(phi, labels)?;

    let (c, cv) = if cfg.svm.c_grid.len() > 1 {
        let r = cross_validate(&data, &cfg.svm.c_grid, cfg.svm.folds, derive_seed(cfg.seed, "cv", 0))?;
        (r.best_c, Some(r))
    } else {
        (cfg.svm.c_grid[0], None)
    };
    let (model, report) = train_template_with(&data, &TemplateParams::new(c, cfg.svm.tol))?;

    let scorer = Scorer::new(Mode::Float, bank, model.clone(), std.clone(), &cfg.formats)?;
    let acc = tally(clips, &scorer.score_all(clips, cache)?).accuracy();
    Ok(Trained {
        file: ModelFile::new(&model, &std, bank, &report, acc)?,
        cv,
        windows: m,
    })
}

/// Clip-level evaluation of a stored model. Fixed mode quantizes the same
/// model and runs the integer datapath end to end.
pub fn evaluate(
    file: &ModelFile,
    clips: &[PreparedClip],
    mode: Mode,
    fmts: &DatapathFormats,
    cache: &FeatureCache,
) -> Result<EvalReport> {
    let t0 = Instant::now();
    file.validate()?;
    if clips.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let scorer = Scorer::new(mode, &file.filterbank, file.template(), file.standardizer(), fmts)?;
    let scores = scorer.score_all(clips, cache)?;
    let confusion = tally(clips, &scores);
    let mut overflow = OverflowReport::default();
    for s in &scores {
        overflow.merge(&s.overflow);
    }
    Ok(EvalReport {
        mode,
        accuracy: confusion.accuracy(),
        train_accuracy: file.train_accuracy,
        confusion,
        clips: clips.len(),
        windows: scores.iter().map(|s| s.decisions.len()).sum(),
        templates: file.p,
        macs_per_decision: scores.first().map_or(0, |s| s.macs),
        overflow,
        solver_report: file.solver_report.clone(),
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

/// Fraction of windows on which float and fixed decisions share a sign.
pub fn window_agreement(
    file: &ModelFile,
    clips: &[PreparedClip],
    fmts: &DatapathFormats,
    cache: &FeatureCache,
) -> Result<f64> {
    let fl = Scorer::new(Mode::Float, &file.filterbank, file.template(), file.standardizer(), fmts)?;
    let fx = Scorer::new(Mode::Fixed, &file.filterbank, file.template(), file.standardizer(), fmts)?;
    let a = fl.score_all(clips, cache)?;
    let b = fx.score_all(clips, cache)?;
    let mut same = 0usize;
    let mut total = 0usize;
    for (x, y) in a.iter().zip(&b) {
        for (&f, &g) in x.decisions.iter().zip(&y.decisions) {
            same += usize::from(sign_label(f) == sign_label(g));
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Input("no windows to compare".into()));
    }
    Ok(same as f64 / total as f64)
}

/// The quantized bank and model the hardware would load.
pub fn fixed_front_end(file: &ModelFile, fmts: &DatapathFormats) -> Result<(QuantizedBank, QuantizedModel)> {
    let qbank = quantize_bank(&file.filterbank, fmts)?;
    let (qm, _) = quantize_model(&file.template(), &file.standardizer(), fmts)?;
    Ok((qbank, qm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cochlea::design_filterbank;

    fn tone(f: f64, n: usize, amp: f64, rate: f64) -> Vec<i16> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin()).round() as i16)
            .collect()
    }

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.cochlea.num_channels = 8;
        cfg.cochlea.window_len = Some(800);
        cfg.svm.c_grid = vec![1.0];
        cfg
    }

    /// Low tones against high tones, with a little level variation.
    fn tone_clips(n: usize, seed: u64) -> Vec<PreparedClip> {
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { 1 } else { -1 };
                let f = if label > 0 { 300.0 + 20.0 * (i % 5) as f64 } else { 2500.0 + 50.0 * (i % 7) as f64 };
                let c = PreparedClip {
                    source: format!("tone{i}"),
                    label,
                    signal: tone(f, 1200 + 37 * (i % 4), 6000.0 + 400.0 * (i % 3) as f64, 16_000.0),
                    sample_rate: 16_000,
                };
                c.with_noise(25.0, seed + i as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn vote_rules() {
        assert_eq!(clip_vote(&[1.0, -0.5, 2.0]), 1);
        assert_eq!(clip_vote(&[-1.0, -0.5, 2.0]), -1);
        assert_eq!(clip_vote(&[-1.0, 0.5]), -1);
        assert_eq!(clip_vote(&[1.0, -0.5]), 1);
        assert_eq!(clip_vote(&[0.0]), 1);
    }

    #[test]
    fn train_then_evaluate_is_consistent() {
        let cfg = small_cfg();
        let bank = design_filterbank(&cfg.cochlea.to_config().unwrap()).unwrap();
        let clips = tone_clips(24, 3);
        let cache = FeatureCache::in_memory();
        let t = train(&clips, &bank, &cfg, &cache).unwrap();
        assert_eq!(t.windows, 48);
        let back = ModelFile::from_json(&t.file.to_json()).unwrap();
        let r = evaluate(&back, &clips, Mode::Float, &cfg.formats, &cache).unwrap();
        assert_eq!(r.accuracy, t.file.train_accuracy);
        assert_eq!(r.confusion.total(), clips.len());
        assert_eq!(r.macs_per_decision, 8);
        assert_eq!(r.windows, 48);
        assert!(r.accuracy > 95.0, "accuracy {}", r.accuracy);

        let fx = evaluate(&back, &clips, Mode::Fixed, &cfg.formats, &cache).unwrap();
        assert_eq!(fx.confusion.total(), clips.len());
        assert!((fx.accuracy - r.accuracy).abs() <= 10.0);
        let agree = window_agreement(&back, &clips, &cfg.formats, &cache).unwrap();
        assert!(agree > 0.9, "agreement {agree}");
    }

    #[test]
    fn cache_hits_are_bit_identical() {
        let cfg = small_cfg();
        let bank = design_filterbank(&cfg.cochlea.to_config().unwrap()).unwrap();
        let clip = &tone_clips(1, 9)[0];
        let dir = tempfile::tempdir().unwrap();
        for mode in [Mode::Float, Mode::Fixed] {
            let a = window_features(clip, &bank, mode, &cfg.formats, &FeatureCache::on_disk(dir.path())).unwrap();
            let cache = FeatureCache::on_disk(dir.path());
            let b = window_features(clip, &bank, mode, &cfg.formats, &cache).unwrap();
            assert_eq!(cache.hits(), 1);
            assert_eq!(a, b);
            let fresh = window_features(clip, &bank, mode, &cfg.formats, &FeatureCache::in_memory()).unwrap();
            assert_eq!(fresh, b);
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let cfg = small_cfg();
        let bank = design_filterbank(&cfg.cochlea.to_config().unwrap()).unwrap();
        let mut clip = tone_clips(1, 0).remove(0);
        clip.sample_rate = 8000;
        let err = window_features(&clip, &bank, Mode::Float, &cfg.formats, &FeatureCache::in_memory());
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn silent_clip_survives_noise() {
        let c = PreparedClip {
            source: "z".into(),
            label: 1,
            signal: vec![0; 100],
            sample_rate: 16_000,
        };
        assert_eq!(c.with_noise(10.0, 1).unwrap(), c);
    }
}
