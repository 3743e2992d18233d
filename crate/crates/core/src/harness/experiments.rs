// SPDX-License-Identifier: Apache-2.0

//! Filter-count and SNR sweeps and the kernel-SVM comparison.
//!
//! CSV schemas (version 1, header row included):
//!
//! * filters: `P,train_acc,test_acc,status`
//! * snr: `snr_db,augment,repeats,succeeded,mean_acc,var_acc`
//! * baseline: `P,S,C,kernel,baseline_macs,template_macs,baseline_train_acc,baseline_test_acc,template_train_acc,template_test_acc`

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::pipeline::{clip_vote, evaluate, train, window_features, PreparedClip, WindowFeatures};
use super::{derive_seed, Confusion, ExperimentConfig, FeatureCache, Mode};
use crate::cochlea::{design_filterbank, FilterBank};
use crate::error::{Error, Result};
use crate::svm::{train_baseline, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterRow {
    #[serde(rename = "P")]
    pub p: usize,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    /// `ok`, or the error kind of a failed point.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnrRow {
    pub snr_db: f64,
    pub augment: bool,
    pub repeats: usize,
    pub succeeded: usize,
    pub mean_acc: Option<f64>,
    /// Sample variance over the successful repeats; 0 for a single repeat.
    pub var_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineRow {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: String,
    pub baseline_macs: usize,
    pub template_macs: usize,
    pub baseline_train_acc: f64,
    pub baseline_test_acc: f64,
    pub template_train_acc: f64,
    pub template_test_acc: f64,
}

/// Serializes rows with a header line.
pub fn write_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn bank_for(cfg: &ExperimentConfig, p: usize) -> Result<FilterBank> {
    let mut sec = cfg.cochlea.clone();
    sec.num_channels = p;
    design_filterbank(&sec.to_config()?)
}

fn train_and_test(
    cfg: &ExperimentConfig,
    bank: &FilterBank,
    train_clips: &[PreparedClip],
    test_clips: &[PreparedClip],
    cache: &FeatureCache,
) -> Result<(f64, f64)> {
    let t = train(train_clips, bank, cfg, cache)?;
    let r = evaluate(&t.file, test_clips, cfg.mode, &cfg.formats, cache)?;
    Ok((t.file.train_accuracy, r.accuracy))
}

/// Independent design, training and evaluation per channel count. A failing
/// point is recorded and the sweep moves on.
pub fn sweep_filters(
    cfg: &ExperimentConfig,
    train_clips: &[PreparedClip],
    test_clips: &[PreparedClip],
    cache: &FeatureCache,
) -> Result<Vec<FilterRow>> {
    let ps = &cfg.sweep.filters;
    if ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep.filters must be strictly ascending".into()));
    }
    Ok(ps
        .par_iter()
        .map(|&p| {
            match bank_for(cfg, p).and_then(|bank| train_and_test(cfg, &bank, train_clips, test_clips, cache)) {
                Ok((tr, te)) => FilterRow {
                    p,
                    train_acc: Some(tr),
                    test_acc: Some(te),
                    status: "ok".into(),
                },
                Err(e) => FilterRow {
                    p,
                    train_acc: None,
                    test_acc: None,
                    status: e.kind().into(),
                },
            }
        })
        .collect())
}

fn noisy(clips: &[PreparedClip], snr: f64, seed: u64, tag: &str) -> Result<Vec<PreparedClip>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| c.with_noise(snr, derive_seed(seed, tag, i as u64)))
        .collect()
}

fn mean_var(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    match xs.len() {
        0 => (None, None),
        1 => (Some(xs[0]), Some(0.0)),
        n => {
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            (Some(m), Some(v))
        }
    }
}

/// Test accuracy under white noise. The test split is always noisy; with
/// `augment` the model is trained on the clean training clips together with
/// a noisy copy at the same SNR, otherwise on the clean clips alone.
pub fn sweep_snr(
    cfg: &ExperimentConfig,
    train_clips: &[PreparedClip],
    test_clips: &[PreparedClip],
    augment: bool,
    cache: &FeatureCache,
) -> Result<Vec<SnrRow>> {
    let bank = design_filterbank(&cfg.cochlea.to_config()?)?;
    let repeats = cfg.sweep.repeats;
    if repeats == 0 {
        return Err(Error::Config("sweep.repeats must be at least 1".into()));
    }
    let clean_model = if augment {
        None
    } else {
        Some(train(train_clips, &bank, cfg, cache).map(|t| t.file))
    };
    let points: Vec<(usize, usize)> = (0..cfg.sweep.snr_db.len())
        .flat_map(|i| (0..repeats).map(move |r| (i, r)))
        .collect();
    let accs: Vec<Option<f64>> = points
        .par_iter()
        .map(|&(i, r)| {
            let snr = cfg.sweep.snr_db[i];
            let seed = derive_seed(cfg.seed, "snr", (i * repeats + r) as u64);
            let run = || -> Result<f64> {
                let test = noisy(test_clips, snr, seed, "test")?;
                let file = match &clean_model {
                    Some(m) => m.as_ref().map_err(|e| Error::Input(e.to_string()))?.clone(),
                    None => {
                        let mut set = train_clips.to_vec();
                        set.extend(noisy(train_clips, snr, seed, "train")?);
                        train(&set, &bank, cfg, cache)?.file
                    }
                };
                Ok(evaluate(&file, &test, cfg.mode, &cfg.formats, cache)?.accuracy)
            };
            run().ok()
        })
        .collect();
    Ok(cfg
        .sweep
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let ok: Vec<f64> = accs[i * repeats..(i + 1) * repeats].iter().flatten().copied().collect();
            let (mean_acc, var_acc) = mean_var(&ok);
            SnrRow {
                snr_db: snr,
                augment,
                repeats,
                succeeded: ok.len(),
                mean_acc,
                var_acc,
            }
        })
        .collect())
}

/// Standardized window features of every clip, with the clip index per row.
fn standardized_windows(
    clips: &[PreparedClip],
    bank: &FilterBank,
    std: &crate::cochlea::Standardizer,
    cfg: &ExperimentConfig,
    cache: &FeatureCache,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut owner = Vec::new();
    for (i, c) in clips.iter().enumerate() {
        let WindowFeatures::Float(acc) = window_features(c, bank, Mode::Float, &cfg.formats, cache)? else {
            unreachable!("float features requested")
        };
        for a in &acc {
            rows.push(std.standardize(a)?);
            owner.push(i);
        }
    }
    Ok((rows, owner))
}

fn clip_accuracy(clips: &[PreparedClip], owner: &[usize], decisions: &[f64]) -> f64 {
    let mut per_clip = vec![Vec::new(); clips.len()];
    for (&o, &f) in owner.iter().zip(decisions) {
        per_clip[o].push(f);
    }
    let mut c = Confusion::default();
    for (clip, d) in clips.iter().zip(&per_clip) {
        c.record(clip.label, clip_vote(d));
    }
    c.accuracy()
}

/// Template SVM against a kernel-expansion SVM on identical standardized
/// features and the same `C`.
pub fn compare_baseline(
    cfg: &ExperimentConfig,
    train_clips: &[PreparedClip],
    test_clips: &[PreparedClip],
    cache: &FeatureCache,
) -> Result<BaselineRow> {
    let bank = design_filterbank(&cfg.cochlea.to_config()?)?;
    let mut tcfg = cfg.clone();
    tcfg.svm.c_grid = vec![cfg.baseline.c];
    let t = train(train_clips, &bank, &tcfg, cache)?;
    let tmpl = evaluate(&t.file, test_clips, Mode::Float, &cfg.formats, cache)?;

    let std = t.file.standardizer();
    let (rows, owner) = standardized_windows(train_clips, &bank, &std, cfg, cache)?;
    let p = bank.num_channels();
    let labels: Vec<i8> = owner.iter().map(|&i| train_clips[i].label).collect();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let feats = Array2::from_shape_vec((rows.len(), p), flat).map_err(|e| Error::TrainingSet(e.to_string()))?;
    let data = TrainingSet::new(feats, labels)?;
    let kernel = cfg.baseline.kernel(p)?;
    let base = train_baseline(&data, cfg.baseline.c, kernel, cfg.svm.tol)?;

    let score = |rows: &[Vec<f64>]| -> Result<Vec<f64>> { rows.par_iter().map(|r| base.decision(r)).collect() };
    let train_acc = clip_accuracy(train_clips, &owner, &score(&rows)?);
    let (trow, towner) = standardized_windows(test_clips, &bank, &std, cfg, cache)?;
    let test_acc = clip_accuracy(test_clips, &towner, &score(&trow)?);

    Ok(BaselineRow {
        p,
        s: base.num_support(),
        c: cfg.baseline.c,
        kernel: serde_json::to_string(&kernel)?,
        baseline_macs: base.mac_count(),
        template_macs: tmpl.macs_per_decision,
        baseline_train_acc: train_acc,
        baseline_test_acc: test_acc,
        template_train_acc: t.file.train_accuracy,
        template_test_acc: tmpl.accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clips(n: usize, seed: u64) -> Vec<PreparedClip> {
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { 1 } else { -1 };
                let f = if label > 0 { 400.0 + 30.0 * (i % 5) as f64 } else { 1800.0 + 60.0 * (i % 7) as f64 };
                let signal = (0..900 + 23 * (i % 3))
                    .map(|k| (5000.0 * (2.0 * std::f64::consts::PI * f * k as f64 / 16_000.0).sin()).round() as i16)
                    .collect();
                PreparedClip {
                    source: format!("c{i}"),
                    label,
                    signal,
                    sample_rate: 16_000,
                }
                .with_noise(20.0, seed + i as u64)
                .unwrap()
            })
            .collect()
    }

    fn cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.cochlea.num_channels = 6;
        c.cochlea.window_len = Some(800);
        c.svm.c_grid = vec![1.0];
        c.sweep.filters = vec![4, 6];
        c.sweep.snr_db = vec![10.0, 200.0];
        c.sweep.repeats = 2;
        c
    }

    #[test]
    fn filter_sweep_rows_match_direct_runs() {
        let c = cfg();
        let (tr, te) = (clips(16, 1), clips(10, 100));
        let cache = FeatureCache::in_memory();
        let rows = sweep_filters(&c, &tr, &te, &cache).unwrap();
        assert_eq!(rows.len(), 2);
        let bank = bank_for(&c, 6).unwrap();
        let (a, b) = train_and_test(&c, &bank, &tr, &te, &FeatureCache::in_memory()).unwrap();
        assert_eq!(rows[1].train_acc, Some(a));
        assert_eq!(rows[1].test_acc, Some(b));
        let text = String::from_utf8(write_csv(&rows).unwrap()).unwrap();
        assert!(text.starts_with("P,train_acc,test_acc,status\n"));
        assert_eq!(write_csv(&sweep_filters(&c, &tr, &te, &cache).unwrap()).unwrap(), text.into_bytes());

        let mut bad = c.clone();
        bad.sweep.filters = vec![6, 4];
        assert!(sweep_filters(&bad, &tr, &te, &cache).is_err());
        bad.sweep.filters = vec![0, 4];
        let rows = sweep_filters(&bad, &tr, &te, &cache).unwrap();
        assert_eq!(rows[0].status, "config");
        assert_eq!(rows[1].status, "ok");
    }

    #[test]
    fn snr_sweep_limits() {
        let mut c = cfg();
        let (tr, te) = (clips(16, 1), clips(10, 100));
        let cache = FeatureCache::in_memory();
        let rows = sweep_snr(&c, &tr, &te, false, &cache).unwrap();
        let clean = train_and_test(&c, &bank_for(&c, 6).unwrap(), &tr, &te, &cache).unwrap().1;
        assert_eq!(rows[1].snr_db, 200.0);
        assert!((rows[1].mean_acc.unwrap() - clean).abs() <= 1.0);
        assert_eq!(rows[1].succeeded, 2);
        c.sweep.repeats = 1;
        let one = sweep_snr(&c, &tr, &te, true, &cache).unwrap();
        assert!(one.iter().all(|r| r.var_acc == Some(0.0)));
        let text = String::from_utf8(write_csv(&one).unwrap()).unwrap();
        assert!(text.starts_with("snr_db,augment,repeats,succeeded,mean_acc,var_acc\n"));
        assert_eq!(write_csv(&sweep_snr(&c, &tr, &te, true, &cache).unwrap()).unwrap(), text.into_bytes());
    }

    #[test]
    fn baseline_mac_accounting() {
        let c = cfg();
        let row = compare_baseline(&c, &clips(16, 1), &clips(10, 100), &FeatureCache::in_memory()).unwrap();
        assert_eq!(row.template_macs, 6);
        assert_eq!(row.baseline_macs, row.s * row.p);
        assert!(row.s >= 2);
    }

    #[test]
    fn sample_variance() {
        assert_eq!(mean_var(&[]), (None, None));
        assert_eq!(mean_var(&[3.0]), (Some(3.0), Some(0.0)));
        assert_eq!(mean_var(&[1.0, 3.0]), (Some(2.0), Some(2.0)));
    }
}
