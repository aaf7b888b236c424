//! The labeled dataset: acquisition plans, content-addressed ingestion,
//! perceptual deduplication and stratified train/val/test splits.

pub mod manifest;
pub mod phash;
pub mod plan;
pub mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt_grammar::{GrammarError, Region, RegionLevel};

pub use manifest::{
    load_manifest, perceptual_distance, save_manifest, save_manifest_with_meta, split_counts, DatasetManifest, DedupeReport,
    SplitFractions, MANIFEST_FORMAT, MANIFEST_SCHEMA_VERSION,
};
pub use phash::PerceptualHash;
pub use plan::{build_generation_plan, build_search_targets, repeat_indices, GenerationPlan, LevelQuotas, SearchTarget};
pub use store::ImageStore;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("undecodable image: {0}")]
    UndecodableImage(String),
    #[error("label/prompt mismatch: {0}")]
    LabelPromptMismatch(String),
    #[error("invalid quota: {0}")]
    InvalidQuota(String),
    #[error("split fractions must be non-negative and sum to 1, got {0}")]
    FractionsNotNormalized(String),
    #[error("splits already assigned; pass force to reassign")]
    SplitsAlreadyAssigned,
    #[error("dedupe threshold {0} outside 0..=64")]
    InvalidThreshold(u32),
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("corrupt file at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class label. The class index is the detector's output position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    HumanDesigned,
    AiGenerated,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::HumanDesigned, Label::AiGenerated];

    pub fn class_index(self) -> usize {
        match self {
            Label::HumanDesigned => 0,
            Label::AiGenerated => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::HumanDesigned => "human_designed",
            Label::AiGenerated => "ai_generated",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One labeled image. Field order is the manifest line order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRecord {
    pub record_id: String,
    pub image_path: String,
    /// Hex SHA-256 of the stored bytes.
    pub content_hash: String,
    pub phash: PerceptualHash,
    pub label: Label,
    pub level: RegionLevel,
    pub region: String,
    pub prompt: Option<String>,
    pub source_detail: String,
    pub split: Option<Split>,
}

impl MapRecord {
    pub fn region(&self) -> Region {
        Region::new(self.region.clone(), self.level)
    }
}
