//! Index of acquired images written next to them by `generate` and
//! `scrape`: a header line followed by one JSON line per acquisition, in
//! plan (or query) order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mapforensics_core::acquisition::Origin;
use mapforensics_core::RegionLevel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ErrorClass};

pub const INDEX_FORMAT: &str = "mapforensics-acquisitions";
pub const INDEX_SCHEMA_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Generated,
    Searched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The backend refused the prompt.
    Rejected,
    /// The search returned nothing usable.
    NoResults,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub region: String,
    pub level: RegionLevel,
    /// Plan position (generated) or search rank (searched).
    pub position: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub status: Status,
    /// Image file relative to the index directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Entry {
    /// True when the entry needs no further acquisition: a refusal or empty
    /// search is final, a stored image must still be on disk.
    pub fn is_complete(&self, dir: &Path) -> bool {
        match (&self.status, &self.file) {
            (Status::Ok, Some(f)) => dir.join(f).is_file(),
            (Status::Ok, None) => false,
            _ => true,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
    kind: Kind,
    count: usize,
}

pub fn index_path(dir: &Path) -> PathBuf {
    dir.join(INDEX_FILE)
}

pub fn save(dir: &Path, kind: Kind, entries: &[Entry]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = index_path(dir);
    let tmp = path.with_extension("jsonl.partial");
    let mut out = BufWriter::new(fs::File::create(&tmp)?);
    let header = Header { format: INDEX_FORMAT.into(), schema_version: INDEX_SCHEMA_VERSION, kind, count: entries.len() };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for e in entries {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads an index, checking that it holds acquisitions of `kind`.
pub fn load(dir: &Path, kind: Kind) -> Result<Vec<Entry>, CliError> {
    let path = index_path(dir);
    let corrupt = |line: usize, msg: String| CliError::new(ErrorClass::Format, format!("{} line {line}: {msg}", path.display()));
    let mut lines = BufReader::new(fs::File::open(&path)?).lines();
    let first = lines.next().ok_or_else(|| corrupt(1, "empty index".into()))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
    if header.format != INDEX_FORMAT {
        return Err(corrupt(1, format!("not an acquisitions index ({})", header.format)));
    }
    if header.schema_version != INDEX_SCHEMA_VERSION {
        return Err(corrupt(1, format!("unsupported schema version {}", header.schema_version)));
    }
    if header.kind != kind {
        return Err(corrupt(1, format!("index holds {:?} acquisitions, expected {kind:?}", header.kind)));
    }
    let mut entries = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| corrupt(i + 2, e.to_string()))?);
    }
    if entries.len() != header.count {
        return Err(corrupt(0, format!("header promises {} entries, found {}", header.count, entries.len())));
    }
    Ok(entries)
}

/// Loads an index if one exists; a missing index reads as empty.
pub fn load_existing(dir: &Path, kind: Kind) -> Result<Vec<Entry>, CliError> {
    if index_path(dir).is_file() {
        load(dir, kind)
    } else {
        Ok(Vec::new())
    }
}
