use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Build a corpus of AI-generated and human-designed maps, train a residual
/// network to tell them apart, and classify new images.
///
/// Every option can also be set in a TOML file passed with --config, using
/// the option name with underscores as the key (for example
/// `split_seed = 7`). Flags override the file; the file overrides defaults.
#[derive(Debug, Parser)]
#[command(name = "mapforensics", version)]
pub struct Cli {
    /// TOML file of option values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Use fixture clients for every acquisition, regardless of other settings.
    #[arg(long, global = true)]
    pub offline: bool,

    /// Log verbosity on stderr (error, warn, info, debug, trace, off).
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generation plan of prompts and print the per-level targets.
    Plan(PlanArgs),
    /// Execute a generation plan against the generation client.
    Generate(GenerateArgs),
    /// Run one image search per region and keep the top-ranked results.
    Scrape(ScrapeArgs),
    /// Ingest acquired images, deduplicate, assign splits and write the manifest.
    Build(BuildArgs),
    /// Train the classifier on the manifest's train split.
    Train(TrainArgs),
    /// Report accuracy, precision, recall and F1 for a checkpoint or a given confusion matrix.
    Eval(EvalArgs),
    /// Classify image files, printing path, label and probability per line.
    Detect(DetectArgs),
}

/// Three comma-separated values, e.g. `30,30,25`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple<T>(pub [T; 3]);

impl<T: FromStr + Copy + Default> FromStr for Triple<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated values, got {s:?}"));
        }
        let mut out = [T::default(); 3];
        for (slot, p) in out.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("cannot parse {p:?} in {s:?}"))?;
        }
        Ok(Triple(out))
    }
}

/// Four comma-separated counts `tp,fp,fn,tn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counts(pub [u64; 4]);

impl FromStr for Counts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected tp,fp,fn,tn, got {s:?}"));
        }
        let mut out = [0u64; 4];
        for (slot, p) in out.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("cannot parse {p:?} as a count"))?;
        }
        Ok(Counts(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Fixture,
    Live,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportStyle {
    Text,
    Machine,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Generated images per state, country and continent.
    #[arg(long, default_value = "30,30,25", value_name = "S,C,K")]
    pub quotas: Triple<u32>,
    /// Search results kept per state, country and continent.
    #[arg(long, default_value = "50,50,100", value_name = "S,C,K")]
    pub search_quotas: Triple<u32>,
    /// Plan seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability of including each optional prompt field.
    #[arg(long, default_value_t = 0.5)]
    pub p_optional: f64,
    /// Vocabulary file; the built-in vocabulary when omitted.
    #[arg(long, value_name = "PATH")]
    pub vocabulary: Option<PathBuf>,
    /// Plan file to write.
    #[arg(long, default_value = "plan.jsonl", value_name = "PATH")]
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Plan file to execute.
    #[arg(long, default_value = "plan.jsonl", value_name = "PATH")]
    pub plan: PathBuf,
    /// Directory receiving generated images and their index.
    #[arg(long, default_value = "acquired/generated", value_name = "DIR")]
    pub generated_dir: PathBuf,
    /// Generation client.
    #[arg(long, value_enum, default_value = "fixture")]
    pub generator: Backend,
    /// Model identifier sent to the live client and recorded as provenance.
    #[arg(long, default_value = "dall-e-2")]
    pub model_id: String,
    /// Live image generation endpoint.
    #[arg(long, default_value = "https://api.openai.com/v1/images/generations", value_name = "URL")]
    pub generation_endpoint: String,
    /// Environment variable holding the generation API key.
    #[arg(long, default_value = "MAPFORENSICS_API_KEY", value_name = "NAME")]
    pub api_key_var: String,
    /// Image size requested from the live client.
    #[arg(long, default_value = "512x512")]
    pub image_size: String,
    /// Recorded fixture tree; procedural placeholders when omitted.
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Retries after a rate-limit response.
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
}

#[derive(Debug, Args)]
pub struct ScrapeArgs {
    /// Search results kept per state, country and continent.
    #[arg(long, default_value = "50,50,100", value_name = "S,C,K")]
    pub search_quotas: Triple<u32>,
    /// Vocabulary file; the built-in vocabulary when omitted.
    #[arg(long, value_name = "PATH")]
    pub vocabulary: Option<PathBuf>,
    /// Directory receiving searched images and their index.
    #[arg(long, default_value = "acquired/searched", value_name = "DIR")]
    pub searched_dir: PathBuf,
    /// Search client.
    #[arg(long, value_enum, default_value = "fixture")]
    pub searcher: Backend,
    /// Live search endpoint answering `?q=<query>&num=<k>` with JSON results.
    #[arg(long, value_name = "URL")]
    pub search_endpoint: Option<String>,
    /// Environment variable holding the search API key, if the endpoint needs one.
    #[arg(long, value_name = "NAME")]
    pub search_api_key_var: Option<String>,
    /// Recorded fixture tree; procedural placeholders when omitted.
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Retries after a rate-limit response.
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory written by `generate`.
    #[arg(long, default_value = "acquired/generated", value_name = "DIR")]
    pub generated_dir: PathBuf,
    /// Directory written by `scrape`.
    #[arg(long, default_value = "acquired/searched", value_name = "DIR")]
    pub searched_dir: PathBuf,
    /// Corpus directory holding `manifest.jsonl` and `images/`.
    #[arg(long, default_value = "corpus", value_name = "DIR")]
    pub corpus_dir: PathBuf,
    /// Vocabulary file; the built-in vocabulary when omitted.
    #[arg(long, value_name = "PATH")]
    pub vocabulary: Option<PathBuf>,
    /// Maximum perceptual-hash distance treated as a duplicate (0 to 64).
    #[arg(long, default_value_t = 0)]
    pub dedupe_threshold: u32,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.70,0.15,0.15", value_name = "TR,VA,TE")]
    pub split_fractions: Triple<f64>,
    /// Split seed.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory holding `manifest.jsonl` and `images/`.
    #[arg(long, default_value = "corpus", value_name = "DIR")]
    pub corpus_dir: PathBuf,
    /// Checkpoint file to write.
    #[arg(long, default_value = "model.safetensors", value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Training log to write (one JSON line per epoch).
    #[arg(long, default_value = "training_log.jsonl", value_name = "PATH")]
    pub training_log: PathBuf,
    /// ResNet depth (18, 34 or 50).
    #[arg(long, default_value_t = 18)]
    pub backbone_depth: u32,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// SGD momentum.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: u32,
    /// Epochs without validation-loss improvement before stopping.
    #[arg(long, default_value_t = 5)]
    pub early_stop_patience: u32,
    /// Seed for initialization, shuffling and augmentation.
    #[arg(long, default_value_t = 0)]
    pub train_seed: u64,
    /// Safetensors file of backbone weights; enables pretrained initialization.
    #[arg(long, value_name = "PATH")]
    pub pretrained_weights: Option<PathBuf>,
    /// Random flips and brightness jitter on training batches.
    #[arg(long)]
    pub augment: bool,
    /// Memory budget for caching decoded training images, in MiB.
    #[arg(long, default_value_t = 1024)]
    pub cache_mb: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Report on this confusion matrix instead of running a checkpoint.
    #[arg(long, value_name = "TP,FP,FN,TN")]
    pub cm: Option<Counts>,
    /// Corpus directory holding `manifest.jsonl` and `images/`.
    #[arg(long, default_value = "corpus", value_name = "DIR")]
    pub corpus_dir: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, default_value = "model.safetensors", value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Split to evaluate (train, val or test).
    #[arg(long, default_value = "test")]
    pub split: mapforensics_core::Split,
    /// Output style.
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportStyle,
    /// Also write the report to this file.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Checkpoint to classify with.
    #[arg(long, default_value = "model.safetensors", value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Image files.
    #[arg(required = true, value_name = "IMAGE")]
    pub paths: Vec<PathBuf>,
}
