use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::DetectorError;

pub const SUPPORTED_DEPTHS: [u32; 3] = [18, 34, 50];

/// Hyperparameters for training. Optimizer is SGD with momentum; loss is
/// two-class cross-entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub backbone_depth: u32,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    pub early_stop_patience: u32,
    pub seed: u64,
    /// Start the backbone from `pretrained_weights` instead of random
    /// initialization; images are then normalized with ImageNet statistics.
    pub pretrained_init: bool,
    pub pretrained_weights: Option<PathBuf>,
    /// Random horizontal flips and brightness jitter on training batches.
    pub augment: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            backbone_depth: 18,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            pretrained_init: false,
            pretrained_weights: None,
            augment: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        if !SUPPORTED_DEPTHS.contains(&self.backbone_depth) {
            return bad(format!("backbone_depth {} not in {SUPPORTED_DEPTHS:?}", self.backbone_depth));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1".into());
        }
        if self.pretrained_init && self.pretrained_weights.is_none() {
            return bad("pretrained_init requires pretrained_weights (a safetensors file with backbone weights)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainingConfig::default();
        c.validate().unwrap();
        assert_eq!((c.lr, c.momentum, c.batch_size, c.max_epochs, c.early_stop_patience), (0.01, 0.9, 32, 50, 5));
    }

    #[test]
    fn invariants_are_enforced() {
        let cases = [
            TrainingConfig { lr: 0.0, ..Default::default() },
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { early_stop_patience: 0, ..Default::default() },
            TrainingConfig { backbone_depth: 101, ..Default::default() },
            TrainingConfig { momentum: 1.0, ..Default::default() },
            TrainingConfig { pretrained_init: true, ..Default::default() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(DetectorError::InvalidConfig(_))), "{c:?}");
        }
    }
}
