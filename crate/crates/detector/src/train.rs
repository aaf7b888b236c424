//! Mini-batch SGD training with per-epoch validation, early stopping on
//! validation loss and best-epoch weight restoration.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{class_map, load_backbone, Checkpoint, CheckpointHeader, CHECKPOINT_FORMAT, CHECKPOINT_SCHEMA_VERSION};
use crate::config::TrainingConfig;
use crate::data::LabeledImages;
use crate::error::DetectorError;
use crate::nn::loss::cross_entropy;
use crate::nn::optim::Sgd;
use crate::nn::resnet::{ResNet, ResNetSpec};
use crate::nn::{Parameters, Tensor};
use crate::preprocess::Normalization;

pub const TRAINING_LOG_FORMAT: &str = "mapforensics-training-log";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LogHeader {
    format: String,
    seed: u64,
    config: TrainingConfig,
    normalization: Normalization,
}

/// Per-epoch metrics. Serialized as JSON lines: a header, then one line per
/// epoch. Wall-clock times are kept apart in [`WallClock`] so the log itself
/// is reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingLog {
    pub seed: u64,
    pub config: TrainingConfig,
    pub normalization: Normalization,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        let header = LogHeader { format: TRAINING_LOG_FORMAT.into(), seed: self.seed, config: self.config.clone(), normalization: self.normalization.clone() };
        let mut out = serde_json::to_string(&header).expect("serializable") + "\n";
        for e in &self.epochs {
            out += &(serde_json::to_string(e).expect("serializable") + "\n");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DetectorError> {
        let mut lines = text.lines();
        let header: LogHeader = serde_json::from_str(lines.next().unwrap_or_default())?;
        if header.format != TRAINING_LOG_FORMAT {
            return Err(DetectorError::InvalidConfig(format!("not a training log: {:?}", header.format)));
        }
        let epochs = lines.filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(TrainingLog { seed: header.seed, config: header.config, normalization: header.normalization, epochs })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.iter().fold(None, |best: Option<&EpochRecord>, e| match best {
            Some(b) if b.val_loss <= e.val_loss => Some(b),
            _ => Some(e),
        })
    }
}

/// Wall-clock timings, written to the log's `.meta.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub epoch_seconds: Vec<f64>,
}

pub fn save_training_log(log: &TrainingLog, wall: &WallClock, path: impl AsRef<Path>) -> Result<(), DetectorError> {
    let path = path.as_ref();
    std::fs::write(path, log.to_jsonl())?;
    let mut meta = std::fs::File::create(format!("{}.meta.json", path.display()))?;
    writeln!(meta, "{}", serde_json::to_string_pretty(wall)?)?;
    Ok(())
}

pub fn load_training_log(path: impl AsRef<Path>) -> Result<TrainingLog, DetectorError> {
    TrainingLog::from_jsonl(&std::fs::read_to_string(path)?)
}

/// Builds the classifier for `config` with seeded initialization,
/// optionally loading a pretrained backbone.
pub fn build_model(config: &TrainingConfig) -> Result<ResNet<f32>, DetectorError> {
    build_model_with(config, ResNetSpec::standard(config.backbone_depth, 2))
}

pub fn build_model_with(config: &TrainingConfig, spec: ResNetSpec) -> Result<ResNet<f32>, DetectorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ResNet::new(spec, &mut rng)?;
    if config.pretrained_init {
        let path = config.pretrained_weights.as_ref().ok_or_else(|| DetectorError::InvalidConfig("pretrained_init requires pretrained_weights".into()))?;
        load_backbone(&mut model, path)?;
    }
    Ok(model)
}

fn argmax(row: &[f32]) -> usize {
    (row[1] > row[0]) as usize
}

/// Drives training one epoch at a time.
pub struct Trainer {
    pub config: TrainingConfig,
    pub model: ResNet<f32>,
    pub normalization: Normalization,
    train: LabeledImages,
    val: LabeledImages,
    sgd: Sgd,
    log: TrainingLog,
    best: Option<(f64, u32, Vec<Vec<f32>>)>,
    since_best: u32,
    wall: WallClock,
}

impl Trainer {
    /// From-scratch runs normalize with train-split statistics; pretrained
    /// runs use the ImageNet constants that match the backbone.
    pub fn new(config: TrainingConfig, train: LabeledImages, val: LabeledImages) -> Result<Self, DetectorError> {
        let model = build_model(&config)?;
        Self::with_model(config, model, train, val)
    }

    pub fn with_model(config: TrainingConfig, model: ResNet<f32>, train: LabeledImages, val: LabeledImages) -> Result<Self, DetectorError> {
        config.validate()?;
        if train.is_empty() {
            return Err(DetectorError::EmptySplit(mapforensics_core::corpus::Split::Train));
        }
        if val.is_empty() {
            return Err(DetectorError::EmptySplit(mapforensics_core::corpus::Split::Val));
        }
        let normalization = if config.pretrained_init { Normalization::imagenet() } else { Normalization::from_stats(&train.channel_stats()?) };
        let log = TrainingLog { seed: config.seed, config: config.clone(), normalization: normalization.clone(), epochs: Vec::new() };
        Ok(Trainer {
            sgd: Sgd::new(config.lr, config.momentum),
            config,
            model,
            normalization,
            train,
            val,
            log,
            best: None,
            since_best: 0,
            wall: WallClock { started: Utc::now(), finished: None, epoch_seconds: Vec::new() },
        })
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn epochs_run(&self) -> u32 {
        self.log.epochs.len() as u32
    }

    pub fn should_stop(&self) -> bool {
        self.epochs_run() >= self.config.max_epochs || self.since_best >= self.config.early_stop_patience
    }

    /// Mean loss and accuracy over `set` in inference mode.
    pub fn evaluate_set(&self, set: &LabeledImages) -> Result<(f64, f64), DetectorError> {
        evaluate_loss(&self.model, set, &self.normalization, self.config.batch_size)
    }

    pub fn evaluate_validation(&self) -> Result<(f64, f64), DetectorError> {
        self.evaluate_set(&self.val)
    }

    /// One pass over the shuffled training set followed by validation.
    pub fn run_epoch(&mut self) -> Result<EpochRecord, DetectorError> {
        let started = Instant::now();
        let epoch = self.epochs_run() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        shuffle_rng.set_stream(epoch as u64);
        order.shuffle(&mut shuffle_rng);
        let mut augment_rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        augment_rng.set_stream((1u64 << 32) | epoch as u64);

        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let (x, targets) = load_batch(&self.train, chunk, &self.normalization, self.config.augment.then_some(&mut augment_rng))?;
            Sgd::zero_grad(&mut self.model);
            let logits = self.model.forward_train(x);
            let (loss, dlogits) = cross_entropy(&logits, &targets);
            if !loss.is_finite() {
                return Err(DetectorError::NonFiniteLoss { epoch, batch: b, value: loss as f64 });
            }
            self.model.backward(&dlogits);
            self.sgd.step(&mut self.model);
            loss_sum += loss as f64 * chunk.len() as f64;
            correct += targets.iter().enumerate().filter(|(i, t)| argmax(logits.item(*i)) == **t).count();
        }
        let (val_loss, val_acc) = self.evaluate_set(&self.val)?;
        if !val_loss.is_finite() {
            return Err(DetectorError::NonFiniteLoss { epoch, batch: usize::MAX, value: val_loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / self.train.len() as f64,
            train_acc: correct as f64 / self.train.len() as f64,
            val_loss,
            val_acc,
        };
        if self.best.as_ref().is_none_or(|(best, _, _)| val_loss < *best) {
            self.best = Some((val_loss, epoch, self.snapshot()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.log.epochs.push(record.clone());
        self.wall.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}: train_loss {:.6} train_acc {:.4} val_loss {:.6} val_acc {:.4}",
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc
        );
        Ok(record)
    }

    fn snapshot(&self) -> Vec<Vec<f32>> {
        let mut values = Vec::new();
        self.model.visit("", &mut |_, p| values.push(p.value.clone()));
        values
    }

    /// Restores the best-validation weights and packages the checkpoint.
    pub fn finish(mut self) -> (Checkpoint, TrainingLog, WallClock) {
        let epoch = match self.best.take() {
            Some((_, epoch, values)) => {
                let mut it = values.into_iter();
                self.model.visit_mut("", &mut |_, p| p.value = it.next().expect("snapshot matches model"));
                epoch
            }
            None => 0,
        };
        self.wall.finished = Some(Utc::now());
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model: self.model.spec,
            config: self.config.clone(),
            normalization: self.normalization.clone(),
            class_map: class_map(),
            epoch,
            training_log_digest: self.log.digest(),
        };
        (Checkpoint::from_model(&self.model, header), self.log, self.wall)
    }
}

fn load_batch(set: &LabeledImages, idx: &[usize], norm: &Normalization, augment: Option<&mut ChaCha8Rng>) -> Result<(Tensor<f32>, Vec<usize>), DetectorError> {
    let mut items = Vec::with_capacity(idx.len());
    for &i in idx {
        items.push(set.tensor(i, norm)?);
    }
    if let Some(rng) = augment {
        for t in items.iter_mut() {
            augment_in_place(t, rng);
        }
    }
    let refs: Vec<&Tensor<f32>> = items.iter().collect();
    Ok((Tensor::stack(&refs), idx.iter().map(|&i| set.label(i).class_index()).collect()))
}

/// Mean cross-entropy and accuracy of `model` over `set` in inference mode,
/// batched by `batch_size`.
pub fn evaluate_loss(model: &ResNet<f32>, set: &LabeledImages, norm: &Normalization, batch_size: usize) -> Result<(f64, f64), DetectorError> {
    let (mut loss_sum, mut correct) = (0.0f64, 0usize);
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, targets) = load_batch(set, chunk, norm, None)?;
        let logits = model.forward(&x);
        let (loss, _) = cross_entropy(&logits, &targets);
        loss_sum += loss as f64 * chunk.len() as f64;
        correct += targets.iter().enumerate().filter(|(i, t)| argmax(logits.item(*i)) == **t).count();
    }
    Ok((loss_sum / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Runs epochs until `max_epochs` or until validation loss has not improved
/// for `early_stop_patience` epochs.
pub fn train(config: TrainingConfig, train: LabeledImages, val: LabeledImages) -> Result<(Checkpoint, TrainingLog, WallClock), DetectorError> {
    let mut trainer = Trainer::new(config, train, val)?;
    while !trainer.should_stop() {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

/// Horizontal flip with probability 1/2 and brightness jitter of up to ±10%
/// of one normalized unit.
fn augment_in_place(t: &mut Tensor<f32>, rng: &mut ChaCha8Rng) {
    let (h, w) = (t.h(), t.w());
    if rng.random_bool(0.5) {
        for row in t.data.chunks_mut(w) {
            row.reverse();
        }
    }
    let shift: f32 = rng.random_range(-0.1..0.1);
    t.data.iter_mut().for_each(|v| *v += shift);
    debug_assert_eq!(t.data.len() % (h * w), 0);
}

/// Probability of `ai_generated` for each row of a logit batch.
pub fn positive_probabilities(logits: &Tensor<f32>) -> Vec<f64> {
    (0..logits.n())
        .map(|i| {
            let row = logits.item(i);
            1.0 / (1.0 + (row[0] as f64 - row[1] as f64).exp())
        })
        .collect()
}
