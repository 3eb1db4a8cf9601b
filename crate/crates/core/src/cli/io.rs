//! Line-oriented file formats.
//!
//! JSONL files start with a provenance object carrying `schema_version`,
//! `config_hash` and `seed`; text and CSV files start with the same fields on
//! a `#` comment line. Readers skip both kinds of header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::detect::BoxDetection;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Identifies the run that wrote a file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the configuration as compact JSON with sorted keys.
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: u64) -> Result<Self> {
        let canonical = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
        let bytes = serde_json::to_vec(&canonical).map_err(|e| Error::Config(e.to_string()))?;
        let digest = Sha256::digest(&bytes);
        let mut config_hash = String::with_capacity(64);
        for b in digest.iter() {
            write!(config_hash, "{b:02x}").expect("writing to a String");
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command,
            config_hash,
            seed,
        })
    }

    fn comment(&self) -> String {
        format!(
            "# schema_version={} command={} config_hash={} seed={}\n",
            self.schema_version, self.command, self.config_hash, self.seed
        )
    }
}

/// Checks that an input file named in a configuration exists.
pub fn require_file(key: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: no such file {}", path.display())))
    }
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

fn to_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Data(e.to_string()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, prov: &Provenance, rows: &[T]) -> Result<PathBuf> {
    let mut text = to_line(prov)?;
    text.push('\n');
    for r in rows {
        text.push_str(&to_line(r)?);
        text.push('\n');
    }
    write_file(path, &text)
}

/// A single JSON document with the provenance fields merged at the top level.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<PathBuf> {
    let mut doc = serde_json::to_value(prov).map_err(|e| Error::Data(e.to_string()))?;
    let body = serde_json::to_value(body).map_err(|e| Error::Data(e.to_string()))?;
    if let (Value::Object(doc), Value::Object(body)) = (&mut doc, body) {
        doc.extend(body);
    }
    let mut text = to_line(&doc)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn write_csv(path: &Path, prov: &Provenance, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
    let mut text = prov.comment();
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_file(path, &text)
}

fn is_header(v: &Value) -> bool {
    v.get("schema_version").is_some() && v.get("config_hash").is_some()
}

/// Parses every non-blank, non-header line of a JSONL file.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| Error::Data(format!("{}:{}: {e}", path.display(), no + 1));
        let v: Value = serde_json::from_str(line).map_err(bad)?;
        if is_header(&v) {
            let version = v["schema_version"].as_u64();
            if version != Some(u64::from(SCHEMA_VERSION)) {
                return Err(Error::Data(format!(
                    "{}: unsupported schema_version {}",
                    path.display(),
                    v["schema_version"]
                )));
            }
            continue;
        }
        rows.push(serde_json::from_value(v).map_err(bad)?);
    }
    Ok(rows)
}

/// Boxes grouped by image id, from lines `image_id x1 y1 x2 y2 [score]`.
/// Ground-truth files omit the score, which is then set to 1.
pub fn read_boxes(path: &Path, scored: bool) -> Result<BTreeMap<u64, Vec<BoxDetection>>> {
    let text = fs::read_to_string(path)?;
    let mut out: BTreeMap<u64, Vec<BoxDetection>> = BTreeMap::new();
    let want = if scored { 6 } else { 5 };
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Data(format!("{}:{}: {msg}", path.display(), no + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != want {
            return Err(bad(format!("expected {want} fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad image id {:?}", fields[0])))?;
        let mut v = [1.0f64; 5];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad(format!("bad number {f:?}")))?;
        }
        let b = BoxDetection::new(v[0], v[1], v[2], v[3], v[4]).map_err(|e| bad(e.to_string()))?;
        out.entry(id).or_default().push(b);
    }
    Ok(out)
}

pub fn write_boxes<'a>(
    path: &Path,
    prov: &Provenance,
    images: impl IntoIterator<Item = (u64, &'a [BoxDetection])>,
    scored: bool,
) -> Result<PathBuf> {
    let mut text = prov.comment();
    for (id, boxes) in images {
        for b in boxes {
            if scored {
                writeln!(text, "{id} {} {} {} {} {}", b.x1, b.y1, b.x2, b.y2, b.score)
            } else {
                writeln!(text, "{id} {} {} {} {}", b.x1, b.y1, b.x2, b.y2)
            }
            .expect("writing to a String");
        }
    }
    write_file(path, &text)
}
