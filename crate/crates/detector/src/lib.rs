//! Residual-network classifier that separates AI-generated maps from
//! human-designed ones: preprocessing, training, checkpoints and inference.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod nn;
pub mod predict;
pub mod preprocess;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use config::TrainingConfig;
pub use data::LabeledImages;
pub use error::DetectorError;
pub use predict::{evaluate, Classifier, Detector, Prediction, DECISION_THRESHOLD};
pub use preprocess::{preprocess, Normalization, PreprocessedImage, INPUT_SIZE};
pub use train::{build_model, train, Trainer, TrainingLog};
