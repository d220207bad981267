use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::data::{LosoSplit, SensorNetworkSchema, Standardizer};
use crate::error::{Error, Result};
use crate::model::{build_model, Model, ModelConfig, ModelKind};
use crate::nn::Tensor;

pub const CHECKPOINT_FORMAT: &str = "hstgnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One parameter tensor in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Trained parameters with everything needed to rebuild and apply the model.
///
/// Stored as JSON. Floats are written in shortest round-trip form, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub model: ModelKind,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub schema: SensorNetworkSchema,
    pub seed: u64,
    pub split: LosoSplit,
    pub standardizer: Standardizer,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(
        model: &dyn Model,
        mcfg: &ModelConfig,
        tcfg: &TrainConfig,
        seed: u64,
        split: LosoSplit,
        standardizer: Standardizer,
    ) -> Self {
        let tensors = model
            .store()
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.iter().copied().collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dtype: "f64".to_string(),
            model: model.kind(),
            model_config: mcfg.clone(),
            train_config: tcfg.clone(),
            schema: model.schema().clone(),
            seed,
            split,
            standardizer,
            tensors,
        }
    }

    /// Rebuilds the architecture and loads the stored values by name.
    pub fn build_model(&self) -> Result<Box<dyn Model>> {
        let mut model = build_model(self.model, &self.schema, &self.model_config, self.seed)?;
        let store = model.store_mut();
        if store.len() != self.tensors.len() {
            return Err(Error::data(format!(
                "checkpoint has {} tensors, {} expects {}",
                self.tensors.len(),
                self.model,
                store.len()
            )));
        }
        for t in &self.tensors {
            let id = store
                .find(&t.name)
                .ok_or_else(|| Error::data(format!("unknown tensor '{}' in checkpoint", t.name)))?;
            let p = store.param_mut(id);
            if p.value.shape() != t.shape.as_slice() {
                return Err(Error::data(format!(
                    "tensor '{}' has shape {:?}, model expects {:?}",
                    t.name,
                    t.shape,
                    p.value.shape()
                )));
            }
            p.value = Tensor::from_shape_vec(t.shape.clone(), t.values.clone()).map_err(|e| Error::data(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!("not a checkpoint (format '{}')", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        if ckpt.dtype != "f64" {
            return Err(Error::data(format!("unsupported dtype '{}'", ckpt.dtype)));
        }
        for t in &ckpt.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::data(format!("tensor '{}' length does not match its shape", t.name)));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
