//! Versioned JSON model files with named tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ModelConfig, TrajectoryModel};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "trajectory-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(model: &TrajectoryModel) -> Result<Self> {
        let tensors = model
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("tensor {name} holds a non-finite value")));
                }
                Ok(TensorEntry { name, shape, data: data.to_vec() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { schema: MODEL_SCHEMA.into(), version: MODEL_VERSION, config: model.config.clone(), tensors })
    }

    pub fn into_model(self) -> Result<TrajectoryModel> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::Format(format!("unexpected model schema '{}'", self.schema)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        check_config(&self.config)?;
        let mut model = TrajectoryModel::zeroed(self.config)?;
        let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Format(format!("expected {} tensors, found {}", expected.len(), self.tensors.len())));
        }
        for ((name, shape), entry) in expected.iter().zip(&self.tensors) {
            if *name != entry.name {
                return Err(Error::Format(format!("expected tensor {name}, found {}", entry.name)));
            }
            if *shape != entry.shape {
                return Err(Error::ShapeMismatch { name: name.clone(), expected: shape.clone(), actual: entry.shape.clone() });
            }
            if entry.data.len() != shape.iter().product::<usize>() {
                return Err(Error::LengthMismatch { expected: shape.iter().product(), actual: entry.data.len() });
            }
        }
        for ((_, dst), entry) in model.tensors_mut().into_iter().zip(self.tensors) {
            dst.copy_from_slice(&entry.data);
        }
        Ok(model)
    }
}

/// Bound layer widths so a hostile file cannot request huge allocations.
fn check_config(c: &ModelConfig) -> Result<()> {
    const MAX_WIDTH: usize = 4096;
    let widths = [c.feature_len, c.embed_dim, c.hidden_dim, c.refiner_dim];
    if widths.iter().any(|&w| w > MAX_WIDTH) || c.feature_len == 0 || c.embed_dim == 0 || c.hidden_dim == 0 {
        return Err(Error::Format(format!("layer widths must lie in 1..={MAX_WIDTH}")));
    }
    if c.frame_size.width == 0 || c.frame_size.height == 0 {
        return Err(Error::Format("frame size must be positive".into()));
    }
    Ok(())
}

pub fn model_to_json(model: &TrajectoryModel) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(&ModelFile::from_model(model)?)?;
    out.push(b'\n');
    Ok(out)
}

pub fn model_from_json(bytes: &[u8]) -> Result<TrajectoryModel> {
    serde_json::from_slice::<ModelFile>(bytes)?.into_model()
}

pub fn save_model(path: &Path, model: &TrajectoryModel) -> Result<()> {
    std::fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrajectoryModel> {
    model_from_json(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
