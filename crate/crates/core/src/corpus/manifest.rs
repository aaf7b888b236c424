use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::phash::phash_image;
use super::{CorpusError, ImageStore, Label, MapRecord, Split};
use crate::acquisition::AcquiredImage;
use crate::prompt_grammar::{Region, RegionLevel};

pub const MANIFEST_FORMAT: &str = "mapforensics-manifest";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Train/val/test fractions as exact rationals summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: Ratio<u64>,
    pub val: Ratio<u64>,
    pub test: Ratio<u64>,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: Ratio::new(70, 100), val: Ratio::new(15, 100), test: Ratio::new(15, 100) }
    }
}

impl SplitFractions {
    pub fn new(train: Ratio<u64>, val: Ratio<u64>, test: Ratio<u64>) -> Result<Self, CorpusError> {
        if train + val + test != Ratio::from_integer(1) {
            return Err(CorpusError::FractionsNotNormalized(format!("{train} + {val} + {test}")));
        }
        Ok(SplitFractions { train, val, test })
    }

    /// Converts decimal fractions at 1/10000 resolution.
    pub fn from_f64(train: f64, val: f64, test: f64) -> Result<Self, CorpusError> {
        let conv = |x: f64| -> Result<Ratio<u64>, CorpusError> {
            if !(0.0..=1.0).contains(&x) {
                return Err(CorpusError::FractionsNotNormalized(format!("{train}, {val}, {test}")));
            }
            Ok(Ratio::new((x * 10_000.0).round() as u64, 10_000))
        };
        Self::new(conv(train)?, conv(val)?, conv(test)?)
            .map_err(|_| CorpusError::FractionsNotNormalized(format!("{train} + {val} + {test}")))
    }
}

fn round_half_up(x: Ratio<u64>) -> u64 {
    (2 * x.numer() + x.denom()) / (2 * x.denom())
}

/// Split sizes for a stratum of `n` records.
///
/// Test takes `round(n * test)`, test+val takes `round(n * (val + test))`
/// (half-up, exact arithmetic), and train takes the remainder. Each size is
/// therefore within one record of nominal; for n = 10 at 70/15/15 this
/// gives (7, 1, 2).
pub fn split_counts(n: usize, fractions: &SplitFractions) -> (usize, usize, usize) {
    let n64 = n as u64;
    let test = round_half_up(fractions.test * n64) as usize;
    let val_test = round_half_up((fractions.val + fractions.test) * n64) as usize;
    (n - val_test, val_test - test, test)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeReport {
    /// (kept record id, removed record id, hamming distance)
    pub removed: Vec<(String, String, u32)>,
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub records: Vec<MapRecord>,
    pub vocabulary_version: String,
    pub split_fractions: SplitFractions,
    pub split_seed: Option<u64>,
    pub created: DateTime<Utc>,
    by_hash: HashMap<String, usize>,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.vocabulary_version == other.vocabulary_version
            && self.split_fractions == other.split_fractions
            && self.split_seed == other.split_seed
            && self.created == other.created
    }
}

pub fn perceptual_distance(a: &MapRecord, b: &MapRecord) -> u32 {
    a.phash.distance(b.phash)
}

fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DatasetManifest {
    pub fn new(vocabulary_version: impl Into<String>) -> Self {
        DatasetManifest {
            records: Vec::new(),
            vocabulary_version: vocabulary_version.into(),
            split_fractions: SplitFractions::default(),
            split_seed: None,
            created: Utc::now(),
            by_hash: HashMap::new(),
        }
    }

    /// Builds a manifest from existing records (no image I/O).
    pub fn from_records(vocabulary_version: impl Into<String>, records: Vec<MapRecord>) -> Self {
        let mut m = DatasetManifest::new(vocabulary_version);
        m.records = records;
        m.reindex();
        m
    }

    fn reindex(&mut self) {
        self.by_hash = self.records.iter().enumerate().map(|(i, r)| (r.content_hash.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get_by_hash(&self, content_hash: &str) -> Option<&MapRecord> {
        self.by_hash.get(content_hash).map(|&i| &self.records[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MapRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    /// Stores the image under its content address and appends a record.
    /// Identical bytes return the existing record unchanged.
    pub fn ingest(
        &mut self,
        store: &ImageStore,
        image: &AcquiredImage,
        label: Label,
        region: &Region,
        prompt: Option<&str>,
    ) -> Result<MapRecord, CorpusError> {
        match (label, prompt) {
            (Label::AiGenerated, None) => {
                return Err(CorpusError::LabelPromptMismatch("ai_generated record requires a prompt".into()))
            }
            (Label::AiGenerated, Some(p)) if p.trim().is_empty() => {
                return Err(CorpusError::LabelPromptMismatch("ai_generated record has an empty prompt".into()))
            }
            (Label::HumanDesigned, Some(_)) => {
                return Err(CorpusError::LabelPromptMismatch("human_designed record must not carry a prompt".into()))
            }
            _ => {}
        }
        let hash = content_hash(&image.bytes);
        if let Some(existing) = self.get_by_hash(&hash) {
            return Ok(existing.clone());
        }
        let format = image::guess_format(&image.bytes).map_err(|e| CorpusError::UndecodableImage(e.to_string()))?;
        let decoded = image::load_from_memory_with_format(&image.bytes, format)
            .map_err(|e| CorpusError::UndecodableImage(e.to_string()))?;
        let ext = format.extensions_str().first().copied().unwrap_or("img");
        let image_path = store.put(&hash, ext, &image.bytes)?;
        let record = MapRecord {
            record_id: format!("map-{}", &hash[..16]),
            image_path,
            phash: phash_image(&decoded),
            content_hash: hash.clone(),
            label,
            level: region.level,
            region: region.name.clone(),
            prompt: prompt.map(str::to_string),
            source_detail: image.source_detail.clone(),
            split: None,
        };
        self.by_hash.insert(hash, self.records.len());
        self.records.push(record.clone());
        Ok(record)
    }

    /// Drops every record within `threshold` Hamming distance of an earlier
    /// kept record.
    pub fn dedupe(&mut self, threshold: u32) -> Result<DedupeReport, CorpusError> {
        if threshold > 64 {
            return Err(CorpusError::InvalidThreshold(threshold));
        }
        let mut kept: Vec<MapRecord> = Vec::with_capacity(self.records.len());
        let mut removed = Vec::new();
        for rec in self.records.drain(..) {
            match kept.iter().find(|k| perceptual_distance(k, &rec) <= threshold) {
                Some(k) => removed.push((k.record_id.clone(), rec.record_id.clone(), perceptual_distance(k, &rec))),
                None => kept.push(rec),
            }
        }
        self.records = kept;
        self.reindex();
        Ok(DedupeReport { removed })
    }

    /// Stratified by (label, level): each stratum is shuffled with a seed
    /// derived from `seed` and the stratum key, then cut by [`split_counts`].
    pub fn assign_splits(&mut self, fractions: SplitFractions, seed: u64, force: bool) -> Result<(), CorpusError> {
        SplitFractions::new(fractions.train, fractions.val, fractions.test)?;
        if !force && self.records.iter().any(|r| r.split.is_some()) {
            return Err(CorpusError::SplitsAlreadyAssigned);
        }
        let mut strata: BTreeMap<(Label, RegionLevel), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            strata.entry((r.label, r.level)).or_default().push(i);
        }
        for ((label, level), mut idx) in strata {
            let digest = Sha256::new()
                .chain_update(seed.to_le_bytes())
                .chain_update(label.as_str().as_bytes())
                .chain_update([0u8])
                .chain_update(level.as_str().as_bytes())
                .finalize();
            let mut key = [0u8; 32];
            key.copy_from_slice(&digest);
            idx.shuffle(&mut ChaCha8Rng::from_seed(key));
            let (_, n_val, n_test) = split_counts(idx.len(), &fractions);
            for (pos, &i) in idx.iter().enumerate() {
                self.records[i].split = Some(if pos < n_test {
                    Split::Test
                } else if pos < n_test + n_val {
                    Split::Val
                } else {
                    Split::Train
                });
            }
        }
        self.split_fractions = fractions;
        self.split_seed = Some(seed);
        Ok(())
    }

    pub fn split_sizes(&self) -> BTreeMap<Split, usize> {
        let mut sizes = BTreeMap::new();
        for r in &self.records {
            if let Some(s) = r.split {
                *sizes.entry(s).or_insert(0) += 1;
            }
        }
        sizes
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    schema_version: u32,
    vocabulary_version: String,
    split_fractions: SplitFractions,
    split_seed: Option<u64>,
    stratified_by: Vec<String>,
    record_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestSidecar {
    created: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    effective_config: Option<serde_json::Value>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    save_manifest_with_meta(manifest, path, None)
}

/// Writes the manifest lines plus a `<file>.meta.json` sidecar holding the
/// creation timestamp and optional effective configuration, so the main
/// file is byte-reproducible.
pub fn save_manifest_with_meta(
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
    effective_config: Option<serde_json::Value>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        schema_version: MANIFEST_SCHEMA_VERSION,
        vocabulary_version: manifest.vocabulary_version.clone(),
        split_fractions: manifest.split_fractions,
        split_seed: manifest.split_seed,
        stratified_by: vec!["label".into(), "level".into()],
        record_count: manifest.records.len(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for r in &manifest.records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    out.flush()?;
    let sidecar = ManifestSidecar { created: manifest.created, effective_config };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, CorpusError> {
    let path = path.as_ref();
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let first = lines.next().ok_or(CorpusError::Corrupt { line: 1, message: "empty manifest".into() })??;
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| CorpusError::Corrupt { line: 1, message: e.to_string() })?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(MANIFEST_FORMAT) {
        return Err(CorpusError::Corrupt { line: 1, message: "not a manifest header".into() });
    }
    let version = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != MANIFEST_SCHEMA_VERSION {
        return Err(CorpusError::SchemaVersion { found: version, expected: MANIFEST_SCHEMA_VERSION });
    }
    let header: ManifestHeader = serde_json::from_value(raw).map_err(|e| CorpusError::Corrupt { line: 1, message: e.to_string() })?;
    let mut records = Vec::with_capacity(header.record_count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MapRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Corrupt { line: i + 2, message: e.to_string() })?;
        if (rec.label == Label::AiGenerated) != rec.prompt.is_some() {
            return Err(CorpusError::Corrupt { line: i + 2, message: "label/prompt mismatch".into() });
        }
        records.push(rec);
    }
    if records.len() != header.record_count {
        return Err(CorpusError::Corrupt {
            line: 0,
            message: format!("header promises {} records, found {}", header.record_count, records.len()),
        });
    }
    let sidecar_text = fs::read_to_string(sidecar_path(path))
        .map_err(|e| CorpusError::Corrupt { line: 0, message: format!("missing manifest sidecar: {e}") })?;
    let sidecar: ManifestSidecar =
        serde_json::from_str(&sidecar_text).map_err(|e| CorpusError::Corrupt { line: 0, message: format!("sidecar: {e}") })?;
    let mut m = DatasetManifest {
        records,
        vocabulary_version: header.vocabulary_version,
        split_fractions: header.split_fractions,
        split_seed: header.split_seed,
        created: sidecar.created,
        by_hash: HashMap::new(),
    };
    m.reindex();
    if m.by_hash.len() != m.records.len() {
        return Err(CorpusError::Corrupt { line: 0, message: "duplicate content hashes".into() });
    }
    Ok(m)
}
