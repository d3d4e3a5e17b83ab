//! Versioned JSON checkpoints.
//!
//! Floats are written as shortest round-trip decimal strings so that any
//! language can reload them bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{IprError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "ipr-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    model: ModelConfig,
    tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Self {
        let mut tensors = Vec::new();
        for (prefix, mlp) in [("encoder", &params.encoder), ("classifier", &params.classifier)] {
            for (i, layer) in mlp.layers.iter().enumerate() {
                tensors.push(TensorRecord {
                    name: format!("{prefix}.{i}.weight"),
                    shape: vec![layer.weight.rows(), layer.weight.cols()],
                    values: layer.weight.as_slice().iter().map(f64::to_string).collect(),
                });
                tensors.push(TensorRecord {
                    name: format!("{prefix}.{i}.bias"),
                    shape: vec![layer.bias.len()],
                    values: layer.bias.iter().map(f64::to_string).collect(),
                });
            }
        }
        Self {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: params.config(),
            tensors,
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        if self.format != FORMAT {
            return Err(IprError::Input(format!("not a checkpoint: format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(IprError::Input(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut params = ModelParams::zeros(&self.model)?;
        let mut slots = params.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(IprError::Input(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                self.tensors.len(),
                slots.len()
            )));
        }
        for ((name, slot), record) in slots.iter_mut().zip(&self.tensors) {
            if *name != record.name {
                return Err(IprError::Input(format!(
                    "expected tensor {name}, found {}",
                    record.name
                )));
            }
            let expected: usize = record.shape.iter().product();
            if record.values.len() != slot.len() || expected != slot.len() {
                return Err(IprError::dim("checkpoint tensor", slot.len(), record.values.len()));
            }
            for (dst, s) in slot.iter_mut().zip(&record.values) {
                *dst = s
                    .parse::<f64>()
                    .map_err(|e| IprError::Input(format!("{name}: bad float {s:?}: {e}")))?;
            }
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization is infallible")
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut text = Checkpoint::from_params(params).to_json();
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.to_params()
}
