//! Checkpoints are safetensors archives: every parameter and running
//! statistic as a little-endian f32 tensor, plus one metadata entry holding
//! a JSON header (schema version, model shape, training config,
//! normalization, class map and training-log digest).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use crate::config::TrainingConfig;
use crate::error::DetectorError;
use crate::nn::resnet::{ResNet, ResNetSpec};
use crate::nn::Parameters;
use crate::preprocess::Normalization;
use mapforensics_core::corpus::Label;

pub const CHECKPOINT_FORMAT: &str = "mapforensics-checkpoint";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const HEADER_KEY: &str = "mapforensics";

/// The fixed class-index map `{0: human_designed, 1: ai_generated}`.
pub fn class_map() -> BTreeMap<String, Label> {
    Label::ALL.iter().map(|l| (l.class_index().to_string(), *l)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub schema_version: u32,
    pub model: ResNetSpec,
    pub config: TrainingConfig,
    pub normalization: Normalization,
    pub class_map: BTreeMap<String, Label>,
    /// Epoch whose weights were kept (best validation loss).
    pub epoch: u32,
    /// SHA-256 of the serialized training log.
    pub training_log_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Name -> (shape, values).
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

fn corrupt(m: impl Into<String>) -> DetectorError {
    DetectorError::CheckpointCorrupt(m.into())
}

impl Checkpoint {
    pub fn from_model(model: &ResNet<f32>, header: CheckpointHeader) -> Self {
        let mut tensors = BTreeMap::new();
        model.visit("", &mut |name, p| {
            tensors.insert(name, (p.shape.clone(), p.value.clone()));
        });
        Checkpoint { header, tensors }
    }

    /// Rebuilds the network; every tensor must be present with its exact
    /// shape and no extras are allowed.
    pub fn to_model(&self) -> Result<ResNet<f32>, DetectorError> {
        let mut model = ResNet::new(self.header.model, &mut ChaCha8Rng::seed_from_u64(0))?;
        let mut seen = 0usize;
        let mut err = None;
        model.visit_mut("", &mut |name, p| match self.tensors.get(&name) {
            Some((shape, values)) if *shape == p.shape => {
                p.value.copy_from_slice(values);
                seen += 1;
            }
            Some((shape, _)) => {
                err.get_or_insert(corrupt(format!("{name}: shape {shape:?}, expected {:?}", p.shape)));
            }
            None => {
                err.get_or_insert(corrupt(format!("missing tensor {name}")));
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != self.tensors.len() {
            return Err(corrupt(format!("{} unexpected tensor(s)", self.tensors.len() - seen)));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DetectorError> {
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(name, (shape, values))| (name.clone(), shape.clone(), values.iter().flat_map(|v| v.to_le_bytes()).collect()))
            .collect();
        let views = raw
            .iter()
            .map(|(name, shape, bytes)| Ok((name.as_str(), TensorView::new(Dtype::F32, shape.clone(), bytes).map_err(|e| corrupt(e.to_string()))?)))
            .collect::<Result<Vec<_>, DetectorError>>()?;
        let meta = HashMap::from([(HEADER_KEY.to_string(), serde_json::to_string(&self.header)?)]);
        safetensors::serialize(views, Some(meta)).map_err(|e| corrupt(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DetectorError> {
        let (_, metadata) = SafeTensors::read_metadata(bytes).map_err(|e| corrupt(e.to_string()))?;
        let header_json = metadata
            .metadata()
            .as_ref()
            .and_then(|m| m.get(HEADER_KEY))
            .ok_or_else(|| corrupt("missing checkpoint header"))?;
        let header: CheckpointHeader = serde_json::from_str(header_json).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(corrupt(format!("format {:?} is not a checkpoint", header.format)));
        }
        if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(corrupt(format!("schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})", header.schema_version)));
        }
        if header.class_map != class_map() {
            return Err(corrupt("unexpected class map"));
        }
        let tensors = read_f32_tensors(bytes)?;
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DetectorError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Reads every F32 tensor from a safetensors buffer.
pub fn read_f32_tensors(bytes: &[u8]) -> Result<BTreeMap<String, (Vec<usize>, Vec<f32>)>, DetectorError> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| corrupt(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.iter() {
        if view.dtype() != Dtype::F32 {
            return Err(corrupt(format!("{name}: dtype {:?}, expected F32", view.dtype())));
        }
        let values = view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.insert(name.to_string(), (view.shape().to_vec(), values));
    }
    Ok(out)
}

/// Copies every backbone tensor (all but the classification head) from a
/// safetensors file with matching names, such as a converted torchvision
/// ResNet. Returns the number of tensors copied.
pub fn load_backbone(model: &mut ResNet<f32>, path: &Path) -> Result<usize, DetectorError> {
    let source = read_f32_tensors(&std::fs::read(path)?)?;
    let mut copied = 0;
    let mut err = None;
    model.visit_mut("", &mut |name, p| {
        if ResNet::<f32>::is_head(&name) {
            return;
        }
        match source.get(&name) {
            Some((shape, values)) if *shape == p.shape => {
                p.value.copy_from_slice(values);
                copied += 1;
            }
            Some((shape, _)) => {
                err.get_or_insert(corrupt(format!("pretrained {name}: shape {shape:?}, expected {:?}", p.shape)));
            }
            None => {
                err.get_or_insert(corrupt(format!("pretrained weights lack {name}")));
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(copied),
    }
}
