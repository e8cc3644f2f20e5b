//! Versioned single-file model container.
//!
//! Layout: 4-byte magic `RELM`, a little-endian u32 manifest length, the
//! manifest JSON, then the payload — every tensor's values as raw
//! little-endian f32, row-major, concatenated. One format serves language
//! models, classifier heads and baselines (the manifest `kind` field tells
//! them apart). Storage is 32-bit while compute is 64-bit, so saving is
//! lossy; round-trips are bit-identical at the 32-bit level.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub const CONTAINER_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RELM";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a model container (bad magic bytes)")]
    BadMagic,
    #[error("container format version {found} unsupported (expected {CONTAINER_FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("vocabulary hash mismatch: container has {container}, current vocabulary is {current}")]
    HashMismatch { container: String, current: String },
    #[error("tensor '{0}' not present in container")]
    UnknownTensor(String),
    #[error("tensor '{name}': container shape {container:?} does not match expected {expected:?}")]
    ShapeMismatch {
        name: String,
        container: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ContainerError>;

/// Location of one tensor inside the payload, in bytes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// What the payload holds: "language_model", "classifier_head", ...
    pub kind: String,
    /// Snapshot of the configuration the model was built with.
    pub config: serde_json::Value,
    /// SHA-256 of the vocabulary the model is bound to, when applicable.
    pub vocabulary_hash: Option<String>,
    /// Free-form provenance (tool version, preset name). Deterministic only —
    /// no wall-clock values, so reruns stay byte-identical.
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct ModelContainer {
    pub manifest: Manifest,
    pub payload: Vec<u8>,
}

impl ModelContainer {
    /// Packs named tensors (f64 compute values truncated to f32) behind a
    /// manifest. Tensor order in the payload follows the sorted names.
    pub fn build(
        kind: &str,
        config: serde_json::Value,
        vocabulary_hash: Option<String>,
        metadata: BTreeMap<String, String>,
        named: &[(String, Tensor)],
    ) -> ModelContainer {
        let mut sorted: Vec<&(String, Tensor)> = named.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut tensors = BTreeMap::new();
        let mut payload = Vec::new();
        for (name, tensor) in sorted {
            let offset = payload.len() as u64;
            for v in tensor.to_vec() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            tensors.insert(
                name.clone(),
                TensorEntry {
                    shape: tensor.shape().to_vec(),
                    offset,
                    length: payload.len() as u64 - offset,
                },
            );
        }
        ModelContainer {
            manifest: Manifest {
                format_version: CONTAINER_FORMAT_VERSION,
                kind: kind.to_string(),
                config,
                vocabulary_hash,
                metadata,
                tensors,
            },
            payload,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(8 + manifest.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses and fully validates a container: magic, format version, and a
    /// non-overlapping in-bounds tensor directory.
    pub fn from_bytes(bytes: &[u8]) -> Result<ModelContainer> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let manifest_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + manifest_len {
            return Err(ContainerError::Corrupt(
                "manifest length exceeds file size".into(),
            ));
        }
        // peek at the version before full parsing so a future manifest layout
        // still fails with the right error
        let head: serde_json::Value = serde_json::from_slice(&bytes[8..8 + manifest_len])?;
        match head.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CONTAINER_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(ContainerError::VersionMismatch { found: v as u32 });
            }
            None => {
                return Err(ContainerError::Corrupt("manifest has no format_version".into()));
            }
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + manifest_len])?;
        let payload = bytes[8 + manifest_len..].to_vec();

        let mut spans: Vec<(u64, u64, &String)> = Vec::new();
        for (name, entry) in &manifest.tensors {
            let numel: usize = entry.shape.iter().product();
            if entry.length as usize != numel * 4 {
                return Err(ContainerError::Corrupt(format!(
                    "tensor '{name}': length {} does not match shape {:?}",
                    entry.length, entry.shape
                )));
            }
            let end = entry.offset + entry.length;
            if end as usize > payload.len() {
                return Err(ContainerError::Corrupt(format!(
                    "tensor '{name}': span {}..{end} exceeds payload size {}",
                    entry.offset,
                    payload.len()
                )));
            }
            spans.push((entry.offset, end, name));
        }
        spans.sort();
        for pair in spans.windows(2) {
            if pair[0].1 > pair[1].0 {
                return Err(ContainerError::Corrupt(format!(
                    "tensors '{}' and '{}' overlap in the payload",
                    pair[0].2, pair[1].2
                )));
            }
        }
        Ok(ModelContainer { manifest, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<ModelContainer> {
        let bytes = std::fs::read(path).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Fails loudly when the container was built against a different
    /// vocabulary.
    pub fn verify_vocabulary_hash(&self, current: &str) -> Result<()> {
        match &self.manifest.vocabulary_hash {
            Some(h) if h == current => Ok(()),
            Some(h) => Err(ContainerError::HashMismatch {
                container: h.clone(),
                current: current.to_string(),
            }),
            None => Err(ContainerError::HashMismatch {
                container: "<none>".into(),
                current: current.to_string(),
            }),
        }
    }

    /// Values of one tensor widened back to the f64 compute type.
    pub fn tensor_values(&self, name: &str) -> Result<Vec<f64>> {
        let entry = self
            .manifest
            .tensors
            .get(name)
            .ok_or_else(|| ContainerError::UnknownTensor(name.to_string()))?;
        let bytes = &self.payload[entry.offset as usize..(entry.offset + entry.length) as usize];
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect())
    }

    /// Copies every named tensor's stored values into the given parameters,
    /// validating names and shapes.
    pub fn load_into(&self, named: &[(String, Tensor)]) -> Result<()> {
        for (name, tensor) in named {
            let entry = self
                .manifest
                .tensors
                .get(name)
                .ok_or_else(|| ContainerError::UnknownTensor(name.clone()))?;
            if entry.shape != tensor.shape() {
                return Err(ContainerError::ShapeMismatch {
                    name: name.clone(),
                    container: entry.shape.clone(),
                    expected: tensor.shape().to_vec(),
                });
            }
            tensor.set_data(&self.tensor_values(name)?);
        }
        Ok(())
    }
}
