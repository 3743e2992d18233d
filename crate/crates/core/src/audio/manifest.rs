// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest root.
    pub path: String,
    pub class: String,
    pub label: i8,
    pub split: Split,
}

/// How files map to classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One sub-directory per class.
    Directory,
    /// `{digit}_{speaker}_{index}.wav`, class = speaker.
    FsddSpeaker,
    /// `{digit}_{speaker}_{index}.wav`, class = digit.
    FsddDigit,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    root: String,
    target: String,
    grouping: Grouping,
    seed: u64,
    train_frac: f64,
    pool: String,
}

/// One-versus-rest split: the target class against a size-matched uniform
/// sample of every other class.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub target: String,
    pub grouping: Grouping,
    pub seed: u64,
    pub train_frac: f64,
    pub entries: Vec<ManifestEntry>,
}

/// `(digit, speaker, index)` from an FSDD file name.
pub fn parse_fsdd_name(name: &str) -> Option<(u8, String, u32)> {
    let stem = name.strip_suffix(".wav")?;
    let mut it = stem.splitn(3, '_');
    let digit = it.next()?.parse::<u8>().ok().filter(|d| *d <= 9)?;
    let speaker = it.next().filter(|s| !s.is_empty())?.to_string();
    let index = it.next()?.parse::<u32>().ok()?;
    Some((digit, speaker, index))
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

/// `(relative path, class)` for every clip under `root`.
fn scan(root: &Path, grouping: Grouping) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    match grouping {
        Grouping::Directory => {
            for d in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
                let class = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
                for f in sorted_dir(&d)?.into_iter().filter(|p| is_wav(p)) {
                    let name = f.file_name().unwrap_or_default().to_string_lossy();
                    out.push((format!("{class}/{name}"), class.clone()));
                }
            }
        }
        Grouping::FsddSpeaker | Grouping::FsddDigit => {
            for f in sorted_dir(root)?.into_iter().filter(|p| is_wav(p)) {
                let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
                let Some((digit, speaker, _)) = parse_fsdd_name(&name) else {
                    continue;
                };
                let class = if grouping == Grouping::FsddSpeaker { speaker } else { digit.to_string() };
                out.push((name, class));
            }
        }
    }
    Ok(out)
}

/// Picks the grouping from the directory layout: sub-directories holding WAV
/// files mean one class per directory, otherwise FSDD names grouped by speaker.
fn detect(root: &Path) -> Result<Grouping> {
    for d in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        if sorted_dir(&d)?.iter().any(|p| is_wav(p)) {
            return Ok(Grouping::Directory);
        }
    }
    Ok(Grouping::FsddSpeaker)
}

pub fn build_manifest(root: &Path, target: &str, seed: u64, train_frac: f64) -> Result<DatasetManifest> {
    let grouping = detect(root)?;
    build_manifest_with(root, target, grouping, seed, train_frac)
}

pub fn build_manifest_with(
    root: &Path,
    target: &str,
    grouping: Grouping,
    seed: u64,
    train_frac: f64,
) -> Result<DatasetManifest> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Manifest(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let files = scan(root, grouping)?;
    let pos: Vec<&(String, String)> = files.iter().filter(|(_, c)| c == target).collect();
    if pos.is_empty() {
        let mut classes: Vec<&str> = files.iter().map(|(_, c)| c.as_str()).collect();
        classes.dedup();
        return Err(Error::Manifest(format!(
            "class {target:?} not found under {} (classes: {})",
            root.display(),
            classes.join(", ")
        )));
    }
    let mut pool: Vec<&(String, String)> = files.iter().filter(|(_, c)| c != target).collect();
    if pool.is_empty() {
        return Err(Error::Manifest("no other classes to draw negatives from".into()));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(pos.len());

    let mut entries = Vec::new();
    for (label, group) in [(1i8, pos), (-1i8, pool)] {
        if group.len() < 2 {
            return Err(Error::Manifest(format!(
                "label {label:+} has {} clip(s); both splits need one",
                group.len()
            )));
        }
        let mut idx: Vec<usize> = (0..group.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = ((group.len() as f64 * train_frac).round() as usize).clamp(1, group.len() - 1);
        for (rank, &i) in idx.iter().enumerate() {
            let (path, class) = group[i];
            entries.push(ManifestEntry {
                path: path.clone(),
                class: class.clone(),
                label,
                split: if rank < n_train { Split::Train } else { Split::Test },
            });
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        target: target.into(),
        grouping,
        seed,
        train_frac,
        entries,
    })
}

impl DatasetManifest {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == s)
    }

    pub fn resolve(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.path)
    }

    /// Header line, then one JSON object per entry.
    pub fn to_jsonl(&self) -> String {
        let h = Header {
            version: MANIFEST_VERSION,
            root: self.root.to_string_lossy().into_owned(),
            target: self.target.clone(),
            grouping: self.grouping,
            seed: self.seed,
            train_frac: self.train_frac,
            pool: "uniform".into(),
        };
        let mut s = serde_json::to_string(&h).expect("header serializes");
        s.push('\n');
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("entry serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let h: Header = serde_json::from_str(lines.next().ok_or_else(|| Error::Manifest("empty manifest".into()))?)?;
        if h.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported manifest version {}", h.version)));
        }
        let entries = lines
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<ManifestEntry>>>()?;
        let m = Self {
            root: h.root.into(),
            target: h.target,
            grouping: h.grouping,
            seed: h.seed,
            train_frac: h.train_frac,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for e in &self.entries {
            if e.label != 1 && e.label != -1 {
                return Err(Error::Manifest(format!("{}: label {}", e.path, e.label)));
            }
            if seen.insert(e.path.as_str(), e.split).is_some() {
                return Err(Error::Manifest(format!("{} listed twice", e.path)));
            }
        }
        for s in [Split::Train, Split::Test] {
            for l in [1i8, -1] {
                if !self.split(s).any(|e| e.label == l) {
                    return Err(Error::Manifest(format!("{s:?} split has no label {l:+}")));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(p: &Path) {
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d).unwrap();
        }
        std::fs::write(p, b"").unwrap();
    }

    fn fsdd_tree(speakers: &[(&str, usize)]) -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        for (s, n) in speakers {
            for i in 0..*n {
                touch(&d.path().join(format!("{}_{s}_{}.wav", i % 10, i / 10)));
            }
        }
        touch(&d.path().join("README.md"));
        d
    }

    #[test]
    fn fsdd_names() {
        assert_eq!(parse_fsdd_name("7_jackson_32.wav"), Some((7, "jackson".into(), 32)));
        assert_eq!(parse_fsdd_name("12_x_1.wav"), None);
        assert_eq!(parse_fsdd_name("3_theo.wav"), None);
    }

    #[test]
    fn speaker_target_takes_all_its_recordings() {
        let d = fsdd_tree(&[("jackson", 50), ("theo", 50), ("nicolas", 50), ("yweweler", 50)]);
        let m = build_manifest(d.path(), "jackson", 3, 0.8).unwrap();
        assert_eq!(m.grouping, Grouping::FsddSpeaker);
        let pos: Vec<_> = m.entries.iter().filter(|e| e.label == 1).collect();
        assert_eq!(pos.len(), 50);
        assert!(pos.iter().all(|e| e.class == "jackson"));
        assert_eq!(m.entries.len(), 100);
        assert!(m.entries.iter().filter(|e| e.label == -1).all(|e| e.class != "jackson"));
        assert_eq!(m.split(Split::Train).filter(|e| e.label == 1).count(), 40);
        m.validate().unwrap();
    }

    #[test]
    fn two_classes_balance_by_subsampling() {
        let d = tempfile::tempdir().unwrap();
        for i in 0..10 {
            touch(&d.path().join(format!("dog/{i}.wav")));
        }
        for i in 0..25 {
            touch(&d.path().join(format!("rain/{i}.wav")));
        }
        let m = build_manifest(d.path(), "dog", 1, 0.8).unwrap();
        assert_eq!(m.grouping, Grouping::Directory);
        assert_eq!(m.entries.iter().filter(|e| e.label == -1).count(), 10);
        assert!(m.entries.iter().filter(|e| e.label == -1).all(|e| e.class == "rain"));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let d = fsdd_tree(&[("a", 30), ("b", 30), ("c", 30)]);
        let m1 = build_manifest(d.path(), "b", 99, 0.8).unwrap();
        let m2 = build_manifest(d.path(), "b", 99, 0.8).unwrap();
        assert_eq!(m1.to_jsonl(), m2.to_jsonl());
        let other = build_manifest(d.path(), "b", 100, 0.8).unwrap();
        assert_ne!(m1.to_jsonl(), other.to_jsonl());
        assert_eq!(DatasetManifest::from_jsonl(&m1.to_jsonl()).unwrap(), m1);
    }

    #[test]
    fn errors() {
        let d = fsdd_tree(&[("a", 10)]);
        assert!(build_manifest(d.path(), "zzz", 0, 0.8).is_err());
        assert!(build_manifest(d.path(), "a", 0, 0.8).is_err());
        assert!(build_manifest(d.path(), "a", 0, 1.5).is_err());
    }
}
