// SPDX-License-Identifier: Apache-2.0

//! Memory-initialization images.
//!
//! Each file starts with one comment line naming the memory, the repeating
//! field layout with its formats, and the word count, for example
//! `// wmem Q:s8.4 words=30`. Every following line is one word in
//! lowercase two's-complement hex, `ceil(bits / 4)` digits wide.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::datapath::{DatapathFormats, QuantizedBank};
use super::format::FixedFormat;
use super::model::QuantizedModel;
use crate::error::{Error, Result};

/// Word format of the per-channel shift stored in SMEM.
pub const SHIFT_FORMAT: FixedFormat = FixedFormat::signed(8, 0);

pub const FCMEM: &str = "fcmem.hex";
pub const SMEM: &str = "smem.hex";
pub const WMEM: &str = "wmem.hex";
pub const BMEM: &str = "bmem.hex";
pub const FORMATS_JSON: &str = "formats.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemFile {
    pub name: String,
    /// Repeating `(field, format)` layout.
    pub fields: Vec<(String, FixedFormat)>,
    pub words: Vec<i64>,
}

impl MemFile {
    fn new(name: &str, fields: &[(&str, FixedFormat)], words: Vec<i64>) -> Self {
        Self {
            name: name.into(),
            fields: fields.iter().map(|(n, f)| (n.to_string(), *f)).collect(),
            words,
        }
    }

    pub fn render(&self) -> Result<String> {
        let mut s = format!("// {}", self.name);
        for (n, f) in &self.fields {
            write!(s, " {n}:{}", f.label()).unwrap();
        }
        writeln!(s, " words={}", self.words.len()).unwrap();
        for (i, &w) in self.words.iter().enumerate() {
            let fmt = self.fields[i % self.fields.len()].1;
            if !fmt.contains_raw(w) {
                return Err(Error::Format(format!(
                    "{} word {i} = {w} outside {}",
                    self.name,
                    fmt.label()
                )));
            }
            let mask = (1u64 << fmt.total_bits) - 1;
            writeln!(s, "{:0width$x}", (w as u64) & mask, width = fmt.hex_digits()).unwrap();
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("//"))
            .ok_or_else(|| Error::Format("missing header comment".into()))?;
        let mut toks = header.split_whitespace();
        let name = toks.next().ok_or_else(|| Error::Format("empty header".into()))?.to_string();
        let mut fields = Vec::new();
        let mut count = None;
        for t in toks {
            if let Some(n) = t.strip_prefix("words=") {
                count = Some(n.parse::<usize>().map_err(|e| Error::Format(format!("word count: {e}")))?);
            } else {
                let (n, f) = t
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("bad header field {t:?}")))?;
                fields.push((n.to_string(), FixedFormat::parse_label(f)?));
            }
        }
        if fields.is_empty() {
            return Err(Error::Format("header names no fields".into()));
        }
        let mut words = Vec::new();
        for line in lines.map(str::trim).filter(|l| !l.is_empty()) {
            let fmt = fields[words.len() % fields.len()].1;
            if line.len() != fmt.hex_digits() {
                return Err(Error::Format(format!("word {line:?} is not {} hex digits", fmt.hex_digits())));
            }
            let u = u64::from_str_radix(line, 16).map_err(|e| Error::Format(format!("{line:?}: {e}")))?;
            if u >> fmt.total_bits != 0 {
                return Err(Error::Format(format!("word {line:?} wider than {}", fmt.label())));
            }
            let sign = 1u64 << (fmt.total_bits - 1);
            let v = if fmt.signed && u & sign != 0 {
                u as i64 - (1i64 << fmt.total_bits)
            } else {
                u as i64
            };
            words.push(v);
        }
        if count != Some(words.len()) {
            return Err(Error::Format(format!(
                "{name}: header announces {count:?} words, found {}",
                words.len()
            )));
        }
        Ok(Self { name, fields, words })
    }
}

/// The four memories of the accelerator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemImage {
    pub fcmem: MemFile,
    pub smem: MemFile,
    pub wmem: MemFile,
    pub bmem: MemFile,
}

#[derive(Serialize)]
struct FormatsDoc<'a> {
    datapath: &'a DatapathFormats,
    shift: FixedFormat,
    weight_gain_shift: u32,
    channels: usize,
    window_len: usize,
}

impl MemImage {
    pub fn build(bank: &QuantizedBank, model: &QuantizedModel) -> Result<Self> {
        if bank.num_channels() != model.dim() {
            return Err(Error::Dimension {
                expected: bank.num_channels(),
                got: model.dim(),
            });
        }
        let f = &model.fmts;
        let c = bank.coeff;
        let fc: Vec<i64> = bank.stages.iter().flatten().copied().collect();
        let mut sm = Vec::with_capacity(4 * model.dim());
        for p in 0..model.dim() {
            sm.extend([
                model.std.mu[p],
                model.std.sigma[p],
                model.std.recip[p],
                i64::from(model.std.shift[p]),
            ]);
        }
        Ok(Self {
            fcmem: MemFile::new("fcmem", &[("a0", c), ("c0", c), ("r", c), ("k", c), ("g", c)], fc),
            smem: MemFile::new(
                "smem",
                &[
                    ("mu", f.std_params),
                    ("sigma", f.std_params),
                    ("recip", f.recip),
                    ("shift", SHIFT_FORMAT),
                ],
                sm,
            ),
            wmem: MemFile::new("wmem", &[("Q", f.weight)], model.q.clone()),
            bmem: MemFile::new("bmem", &[("b", f.weight)], vec![model.b]),
        })
    }

    fn files(&self) -> [(&'static str, &MemFile); 4] {
        [(FCMEM, &self.fcmem), (SMEM, &self.smem), (WMEM, &self.wmem), (BMEM, &self.bmem)]
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<MemFile> {
            let p = dir.join(name);
            let s = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            MemFile::parse(&s)
        };
        Ok(Self {
            fcmem: read(FCMEM)?,
            smem: read(SMEM)?,
            wmem: read(WMEM)?,
            bmem: read(BMEM)?,
        })
    }
}

/// Writes the four memory images and the formats sidecar into `dir`.
pub fn export_mem(bank: &QuantizedBank, model: &QuantizedModel, dir: &Path) -> Result<Vec<PathBuf>> {
    let img = MemImage::build(bank, model)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for (name, file) in img.files() {
        let p = dir.join(name);
        std::fs::write(&p, file.render()?).map_err(|e| Error::io(&p, e))?;
        out.push(p);
    }
    let doc = FormatsDoc {
        datapath: &model.fmts,
        shift: SHIFT_FORMAT,
        weight_gain_shift: model.gain_shift,
        channels: model.dim(),
        window_len: bank.window_len,
    };
    let p = dir.join(FORMATS_JSON);
    std::fs::write(&p, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&p, e))?;
    out.push(p);
    Ok(out)
}
