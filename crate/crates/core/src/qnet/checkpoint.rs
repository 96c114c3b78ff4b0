use super::{Architecture, Params, QNet};
use crate::features::FEATURE_SET_VERSION;
use crate::{Error, Result};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "retrobranch-qnet-v1";
pub const CHECKPOINT_EXTENSION: &str = "qnet.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    dtype: String,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    feature_set_version: String,
    architecture: Architecture,
    #[serde(default)]
    metadata: serde_json::Value,
    tensors: Vec<TensorRecord>,
}

impl QNet {
    /// Serializes the network. Tensors are stored as little-endian `f32`.
    pub fn to_json(&self, metadata: serde_json::Value) -> Result<String> {
        let tensors = self
            .arch
            .layout()
            .into_iter()
            .zip(&self.params.tensors)
            .map(|((name, shape, _), t)| {
                let bytes: Vec<u8> = t.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
                TensorRecord {
                    name,
                    shape: [shape.0, shape.1],
                    dtype: "f32le".into(),
                    data: STANDARD.encode(bytes),
                }
            })
            .collect();
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            feature_set_version: FEATURE_SET_VERSION.into(),
            architecture: self.arch,
            metadata,
            tensors,
        };
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("checkpoint", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<(Self, serde_json::Value)> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Incompatible {
                expected: CHECKPOINT_FORMAT.into(),
                found: manifest.format,
            });
        }
        if manifest.feature_set_version != FEATURE_SET_VERSION {
            return Err(Error::Incompatible {
                expected: FEATURE_SET_VERSION.into(),
                found: manifest.feature_set_version,
            });
        }
        let arch = manifest.architecture;
        let layout = arch.layout();
        if layout.len() != manifest.tensors.len() {
            return Err(Error::parse(
                "checkpoint",
                format!("expected {} tensors, found {}", layout.len(), manifest.tensors.len()),
            ));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for ((name, shape, _), rec) in layout.into_iter().zip(manifest.tensors) {
            if rec.name != name || rec.shape != [shape.0, shape.1] || rec.dtype != "f32le" {
                return Err(Error::parse(
                    "checkpoint",
                    format!("tensor '{}' {:?} {} does not match expected '{name}' {shape:?} f32le", rec.name, rec.shape, rec.dtype),
                ));
            }
            let bytes = STANDARD
                .decode(rec.data.as_bytes())
                .map_err(|e| Error::parse("checkpoint", format!("tensor '{name}': {e}")))?;
            if bytes.len() != 4 * shape.0 * shape.1 {
                return Err(Error::parse(
                    "checkpoint",
                    format!("tensor '{name}' has {} bytes, expected {}", bytes.len(), 4 * shape.0 * shape.1),
                ));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Array2::from_shape_vec(shape, values).expect("length checked"));
        }
        Ok((QNet::from_params(arch, Params { tensors })?, manifest.metadata))
    }

    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        std::fs::write(path, self.to_json(metadata)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
