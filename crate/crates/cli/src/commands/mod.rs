pub mod acquire;
pub mod build;
pub mod detect;
pub mod eval;
pub mod plan;
pub mod train;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use mapforensics_core::Vocabulary;
use serde_json::{json, Value};

use crate::error::CliError;

/// State shared by every subcommand.
pub struct Context<'a> {
    pub offline: bool,
    /// Resolved options, echoed into every artifact's sidecar.
    pub effective: Value,
    pub out: &'a mut dyn Write,
}

/// `<file>.meta.json`, where timestamps and the effective configuration
/// live so the artifact itself stays byte-reproducible.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, effective: &Value) -> Result<(), CliError> {
    let meta = json!({ "created": Utc::now(), "effective_config": effective });
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

pub fn load_vocabulary(path: Option<&Path>) -> Result<Vocabulary, CliError> {
    match path {
        Some(p) => Ok(Vocabulary::load(p)?),
        None => Ok(Vocabulary::shipped()),
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn manifest_path(corpus_dir: &Path) -> PathBuf {
    corpus_dir.join(MANIFEST_FILE)
}
