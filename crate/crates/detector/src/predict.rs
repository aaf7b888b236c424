//! Inference from a checkpoint and split-level evaluation.

use std::path::Path;

use mapforensics_core::corpus::{DatasetManifest, ImageStore, Label, Split};
use mapforensics_core::metrics::ConfusionMatrix;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointHeader};
use crate::error::DetectorError;
use crate::nn::resnet::ResNet;
use crate::nn::Tensor;
use crate::preprocess::{preprocess, Normalization};
use crate::train::positive_probabilities;

/// Fixed decision threshold on the `ai_generated` probability.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Probability of `ai_generated`.
    pub probability: f64,
}

impl Prediction {
    /// `ai_generated` exactly when `probability >= 0.5`.
    pub fn from_probability(probability: f64) -> Self {
        let label = if probability >= DECISION_THRESHOLD { Label::AiGenerated } else { Label::HumanDesigned };
        Prediction { label, probability }
    }
}

pub trait Classifier {
    fn classify(&self, image_bytes: &[u8]) -> Result<Prediction, DetectorError>;
}

/// A loaded checkpoint ready for read-only inference; safe to share across
/// threads.
#[derive(Clone, Debug)]
pub struct Detector {
    pub header: CheckpointHeader,
    model: ResNet<f32>,
}

impl Detector {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self, DetectorError> {
        Ok(Detector { header: checkpoint.header.clone(), model: checkpoint.to_model()? })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn normalization(&self) -> &Normalization {
        &self.header.normalization
    }

    pub fn logits(&self, x: &Tensor<f32>) -> Tensor<f32> {
        self.model.forward(x)
    }

    pub fn predict(&self, image_bytes: &[u8]) -> Result<Prediction, DetectorError> {
        let input = preprocess(image_bytes, &self.header.normalization)?;
        let p = positive_probabilities(&self.model.forward(&input.pixels))[0];
        Ok(Prediction::from_probability(p))
    }
}

impl Classifier for Detector {
    fn classify(&self, image_bytes: &[u8]) -> Result<Prediction, DetectorError> {
        self.predict(image_bytes)
    }
}

/// Classifies every record of `split` and tallies the confusion matrix
/// with `ai_generated` as the positive class.
pub fn evaluate<C: Classifier + ?Sized>(classifier: &C, manifest: &DatasetManifest, split: Split, store: &ImageStore) -> Result<ConfusionMatrix, DetectorError> {
    let records: Vec<_> = manifest.split(split).collect();
    if records.is_empty() {
        return Err(DetectorError::EmptySplit(split));
    }
    let mut cm = ConfusionMatrix::default();
    for r in records {
        let bytes = store.read(&r.image_path)?;
        cm.record(classifier.classify(&bytes)?.label, r.label);
    }
    Ok(cm)
}
