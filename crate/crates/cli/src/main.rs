// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use infilter::audio::{build_manifest, build_manifest_with, synth_fsdd, DatasetManifest, Grouping, Split, DEFAULT_SYNTH_SPEAKERS};
use infilter::cochlea::{design_filterbank, FilterBank};
use infilter::fixedpoint::export_mem;
use infilter::harness::{
    compare_baseline, content_name, evaluate, fixed_front_end, load_split, sweep_filters, sweep_snr, train,
    window_agreement, window_features, write_artifact, write_csv, ExperimentConfig, FeatureCache, Mode,
};
use infilter::svm::ModelFile;
use infilter::{Error, Result};

#[derive(Parser)]
#[command(name = "infilter", version, about = "Cochlear filter cascade as template-SVM kernel")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Float,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Directory,
    FsddSpeaker,
    FsddDigit,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Cmd {
    /// Design the filter bank.
    Design,
    /// Accumulate window energies for every clip of a manifest into the cache.
    Featurize {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Filter-bank document; designed from the config when absent.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Train a template SVM on the training split.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Fixed C instead of cross-validating the configured grid.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Clip-level evaluation of a model file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Write the hex memory images of the fixed-point datapath.
    ExportMem {
        #[arg(long)]
        model: PathBuf,
    },
    SweepFilters {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    SweepSnr {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Overrides the configured augmentation flag.
        #[arg(long)]
        augment: Option<bool>,
    },
    CompareBaseline {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Build a one-versus-rest manifest over a directory of WAV files.
    Manifest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum)]
        grouping: Option<GroupingArg>,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
    },
    /// Write a synthetic spoken-digit corpus.
    SynthCorpus {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_digit: usize,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(m) = c.mode {
            cfg.mode = match m {
                ModeArg::Float => Mode::Float,
                ModeArg::Fixed => Mode::Fixed,
            };
        }
        Ok(Self {
            cfg,
            out: c.out.clone(),
        })
    }

    fn cache(&self) -> FeatureCache {
        FeatureCache::on_disk(&self.out.join("cache"))
    }

    fn manifest(&self, flag: &Option<PathBuf>) -> Result<DatasetManifest> {
        let p = flag
            .as_ref()
            .or(self.cfg.manifest.as_ref())
            .ok_or_else(|| Error::Config("no manifest given (--manifest or `manifest` in the config)".into()))?;
        DatasetManifest::load(p)
    }

    fn bank(&self) -> Result<FilterBank> {
        design_filterbank(&self.cfg.cochlea.to_config()?)
    }

    fn artifact(&self, stem: &str, ext: &str, content: &[u8]) -> Result<PathBuf> {
        write_artifact(&self.out, stem, ext, content)
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let ctx = Ctx::new(&cli.common)?;
    let cfg = &ctx.cfg;
    Ok(match cli.cmd {
        Cmd::Design => {
            let bank = ctx.bank()?;
            let p = ctx.artifact("filterbank", "json", bank.to_json().as_bytes())?;
            json!({ "filterbank": p, "hash": bank.content_hash() })
        }
        Cmd::Featurize { manifest, bank } => {
            let m = ctx.manifest(&manifest)?;
            let bank = match bank {
                Some(p) => FilterBank::from_json(&std::fs::read_to_string(&p).map_err(|e| io(&p, e))?)?,
                None => ctx.bank()?,
            };
            let cache = ctx.cache();
            let mut windows = 0;
            let mut clips = 0;
            for split in [Split::Train, Split::Test] {
                for c in load_split(&m, split, cfg)? {
                    windows += window_features(&c, &bank, cfg.mode, &cfg.formats, &cache)?.len();
                    clips += 1;
                }
            }
            json!({ "clips": clips, "windows": windows, "cache": ctx.out.join("cache"), "bank_hash": bank.content_hash() })
        }
        Cmd::Train { manifest, c } => {
            let m = ctx.manifest(&manifest)?;
            let mut tcfg = cfg.clone();
            if let Some(c) = c {
                tcfg.svm.c_grid = vec![c];
            }
            let clips = load_split(&m, Split::Train, &tcfg)?;
            let t = train(&clips, &ctx.bank()?, &tcfg, &ctx.cache())?;
            let text = t.file.to_json();
            let p = ctx.artifact("model", "json", text.as_bytes())?;
            json!({
                "model": p,
                "C": t.file.c,
                "train_accuracy": t.file.train_accuracy,
                "windows": t.windows,
                "cv": t.cv.map(|r| r.folds.iter().map(|(c, _)| json!({ "C": c, "mean_accuracy": r.mean_accuracy(*c) })).collect::<Vec<_>>()),
            })
        }
        Cmd::Eval { model, manifest, split } => {
            let file = ModelFile::load(&model)?;
            let m = ctx.manifest(&manifest)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let clips = load_split(&m, split, cfg)?;
            let cache = ctx.cache();
            let report = evaluate(&file, &clips, cfg.mode, &cfg.formats, &cache)?;
            let agreement = match cfg.mode {
                Mode::Fixed => Some(window_agreement(&file, &clips, &cfg.formats, &cache)?),
                Mode::Float => None,
            };
            let mut v = serde_json::to_value(&report)?;
            v["window_agreement"] = json!(agreement);
            let p = ctx.artifact("eval", "json", serde_json::to_string_pretty(&v)?.as_bytes())?;
            json!({ "report": p, "accuracy": report.accuracy, "window_agreement": agreement })
        }
        Cmd::ExportMem { model } => {
            let text = std::fs::read_to_string(&model).map_err(|e| io(&model, e))?;
            let file = ModelFile::from_json(&text)?;
            let (qbank, qmodel) = fixed_front_end(&file, &cfg.formats)?;
            let name = content_name("mem", "d", text.as_bytes());
            let dir = ctx.out.join(name.trim_end_matches(".d"));
            let files = export_mem(&qbank, &qmodel, &dir)?;
            json!({ "dir": dir, "files": files })
        }
        Cmd::SweepFilters { manifest } => {
            let m = ctx.manifest(&manifest)?;
            let (tr, te) = (load_split(&m, Split::Train, cfg)?, load_split(&m, Split::Test, cfg)?);
            let rows = sweep_filters(cfg, &tr, &te, &ctx.cache())?;
            json!({ "csv": ctx.artifact("sweep-filters", "csv", &write_csv(&rows)?)? })
        }
        Cmd::SweepSnr { manifest, augment } => {
            let m = ctx.manifest(&manifest)?;
            let (tr, te) = (load_split(&m, Split::Train, cfg)?, load_split(&m, Split::Test, cfg)?);
            let rows = sweep_snr(cfg, &tr, &te, augment.unwrap_or(cfg.sweep.augment), &ctx.cache())?;
            json!({ "csv": ctx.artifact("sweep-snr", "csv", &write_csv(&rows)?)? })
        }
        Cmd::CompareBaseline { manifest } => {
            let m = ctx.manifest(&manifest)?;
            let (tr, te) = (load_split(&m, Split::Train, cfg)?, load_split(&m, Split::Test, cfg)?);
            let row = compare_baseline(cfg, &tr, &te, &ctx.cache())?;
            json!({ "csv": ctx.artifact("baseline", "csv", &write_csv(&[row])?)? })
        }
        Cmd::Manifest {
            root,
            target,
            grouping,
            train_frac,
        } => {
            let m = match grouping {
                None => build_manifest(&root, &target, cfg.seed, train_frac)?,
                Some(g) => {
                    let g = match g {
                        GroupingArg::Directory => Grouping::Directory,
                        GroupingArg::FsddSpeaker => Grouping::FsddSpeaker,
                        GroupingArg::FsddDigit => Grouping::FsddDigit,
                    };
                    build_manifest_with(&root, &target, g, cfg.seed, train_frac)?
                }
            };
            let p = ctx.artifact("manifest", "jsonl", m.to_jsonl().as_bytes())?;
            json!({ "manifest": p, "entries": m.entries.len() })
        }
        Cmd::SynthCorpus { dir, per_digit } => {
            let files = synth_fsdd(&dir, &DEFAULT_SYNTH_SPEAKERS, per_digit, cfg.seed)?;
            json!({ "dir": dir, "files": files.len() })
        }
    })
}

fn io(p: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: p.to_path_buf(),
        source: e,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
