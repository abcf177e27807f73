//! Artifact writing: atomic JSON/CSV emission with read-back validation.
//!
//! Every artifact is written to a temporary sibling first, re-parsed, checked
//! against the in-memory value, and only then renamed into place, so a
//! half-written or lossily-serialized file can never be mistaken for a
//! result. Nothing here records wall-clock time; identical inputs produce
//! byte-identical artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// FNV-1a over the raw bytes; used to fingerprint seed material in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn seed_hash(seed: u64) -> String {
    format!("{:016x}", fnv1a64(&seed.to_le_bytes()))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("artifact path has no file name")?;
    let tmp = dir.join(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("writing temporary file {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", path.display()))?;
    Ok(())
}

/// Write a value as pretty JSON and verify that parsing the bytes back
/// yields an equal value.
pub fn write_json<T>(path: &Path, value: &T) -> Result<()>
where
    T: Serialize + DeserializeOwned + PartialEq,
{
    let mut bytes = serde_json::to_vec_pretty(value).context("serializing artifact")?;
    bytes.push(b'\n');
    let reparsed: T = serde_json::from_slice(&bytes)
        .with_context(|| format!("artifact {} does not re-parse", path.display()))?;
    if &reparsed != value {
        bail!(
            "artifact {} does not round-trip through JSON",
            path.display()
        );
    }
    atomic_write(path, &bytes)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading artifact {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing artifact {}", path.display()))
}

/// A CSV table with a fixed header. Cells are formatted up front so the
/// emitted file is exactly what the caller inspected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.header.len() {
            bail!(
                "row has {} cells but the header has {} columns",
                cells.len(),
                self.header.len()
            );
        }
        for c in &cells {
            if c.contains(',') || c.contains('\n') || c.contains('"') {
                bail!("cell {c:?} needs quoting, which these tables do not use");
            }
        }
        self.rows.push(cells);
        Ok(())
    }
}

/// Shortest decimal that parses back to exactly the same f64.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").expect("formatting f64");
    s
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut text = String::new();
    text.push_str(&table.header.join(","));
    text.push('\n');
    for row in &table.rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    // read-back check: the csv reader must see the same cells
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let got_header: Vec<String> = reader
        .headers()
        .context("re-reading csv header")?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if got_header != table.header {
        bail!("csv header for {} does not round-trip", path.display());
    }
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("re-reading csv row {i}"))?;
        let got: Vec<String> = rec.iter().map(|s| s.to_string()).collect();
        if got != table.rows[i] {
            bail!("csv row {i} of {} does not round-trip", path.display());
        }
    }
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

/// What a command run produced: the effective configuration, the files it
/// wrote, and the seeds that reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}
