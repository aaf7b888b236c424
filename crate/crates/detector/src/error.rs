use mapforensics_core::corpus::Split;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("undecodable image: {0}")]
    UndecodableImage(String),
    #[error(transparent)]
    UnsupportedDepth(#[from] crate::nn::resnet::UnsupportedDepth),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u32, batch: usize, value: f64 },
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
