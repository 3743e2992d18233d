// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::pipeline::WindowFeatures;
use super::Mode;
use crate::error::{Error, Result};
use crate::fixedpoint::{DatapathFormats, OverflowReport};

const MAGIC: &[u8; 4] = b"IFC1";

/// Window accumulations keyed by `(bank hash, clip hash, mode)`, held in
/// memory and optionally mirrored to a directory as little-endian binaries.
#[derive(Debug, Default)]
pub struct FeatureCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, WindowFeatures>>,
    hits: AtomicUsize,
}

impl FeatureCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: &Path) -> Self {
        Self {
            dir: Some(dir.to_path_buf()),
            ..Self::default()
        }
    }

    /// Fixed-mode keys also cover the datapath formats.
    pub fn key(bank_hash: &str, clip_hash: &str, mode: Mode, fmts: &DatapathFormats) -> String {
        let mut h = Sha256::new();
        h.update(bank_hash.as_bytes());
        h.update([0]);
        h.update(clip_hash.as_bytes());
        h.update([0]);
        match mode {
            Mode::Float => h.update(b"float"),
            Mode::Fixed => {
                h.update(b"fixed");
                h.update(serde_json::to_vec(fmts).expect("formats serialize"));
            }
        }
        hex::encode(h.finalize())
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.mem.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(&self, key: &str, compute: impl FnOnce() -> Result<WindowFeatures>) -> Result<WindowFeatures> {
        if let Some(v) = self.mem.lock().expect("cache lock").get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("{key}.bin")));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let v = decode(&bytes).ok_or_else(|| Error::Format(format!("corrupt cache entry {}", p.display())))?;
            self.hits.fetch_add(1, Ordering::Relaxed);
            self.mem.lock().expect("cache lock").insert(key.into(), v.clone());
            return Ok(v);
        }
        let v = compute()?;
        if let Some(p) = &path {
            let dir = p.parent().expect("cache file has a parent");
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            // write-then-rename so concurrent readers never see a partial file
            let tmp = p.with_extension(format!("tmp{}", std::process::id()));
            std::fs::write(&tmp, encode(&v)).map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, p).map_err(|e| Error::io(p, e))?;
        }
        self.mem.lock().expect("cache lock").insert(key.into(), v.clone());
        Ok(v)
    }
}

fn encode(v: &WindowFeatures) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let (tag, rows, cols) = match v {
        WindowFeatures::Float(a) => (0u8, a.len(), a.first().map_or(0, Vec::len)),
        WindowFeatures::Fixed { acc, .. } => (1u8, acc.len(), acc.first().map_or(0, Vec::len)),
    };
    out.push(tag);
    out.extend((rows as u64).to_le_bytes());
    out.extend((cols as u64).to_le_bytes());
    match v {
        WindowFeatures::Float(a) => a.iter().flatten().for_each(|x| out.extend(x.to_bits().to_le_bytes())),
        WindowFeatures::Fixed { acc, overflow } => {
            acc.iter().flatten().for_each(|x| out.extend(x.to_le_bytes()));
            for c in [overflow.state, overflow.output, overflow.accumulator, overflow.feature_mid, overflow.feature_out] {
                out.extend(c.to_le_bytes());
            }
        }
    }
    out
}

fn decode(b: &[u8]) -> Option<WindowFeatures> {
    let rest = b.strip_prefix(MAGIC)?;
    let (&tag, rest) = rest.split_first()?;
    let mut words = rest.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    if rest.len() % 8 != 0 {
        return None;
    }
    let rows = usize::try_from(words.next()?).ok()?;
    let cols = usize::try_from(words.next()?).ok()?;
    let body: Vec<u64> = words.collect();
    let n = rows.checked_mul(cols)?;
    let row = |r: usize| &body[r * cols..(r + 1) * cols];
    match tag {
        0 if body.len() == n => Some(WindowFeatures::Float(
            (0..rows).map(|r| row(r).iter().map(|&w| f64::from_bits(w)).collect()).collect(),
        )),
        1 if body.len() == n + 5 => {
            let o = &body[n..];
            Some(WindowFeatures::Fixed {
                acc: (0..rows).map(|r| row(r).iter().map(|&w| w as i64).collect()).collect(),
                overflow: OverflowReport {
                    state: o[0],
                    output: o[1],
                    accumulator: o[2],
                    feature_mid: o[3],
                    feature_out: o[4],
                },
            })
        }
        _ => None,
    }
}
