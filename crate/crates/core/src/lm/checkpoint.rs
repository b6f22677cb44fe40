//! Checkpoint directories: `manifest.json` (config and tensor registry),
//! `weights.bin` (little-endian f32, row-major, registry order) and
//! `vocab.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LanguageModel, LmConfig, Params};
use crate::corpus::{CorpusError, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("tensor {name}: shape {found:?} does not match config shape {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("weights.bin holds {found} bytes, registry needs {expected}")]
    Truncated { expected: u64, found: u64 },
    #[error("vocabulary has {vocab} entries but the model expects {model}")]
    VocabMismatch { vocab: usize, model: usize },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Vocab(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: LmConfig,
    pub step_count: u64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: LanguageModel<f32>,
    pub vocab: Vocabulary,
}

/// Writes the three checkpoint files into `dir`, each atomically.
pub fn save_checkpoint(model: &LanguageModel<f32>, vocab: &Vocabulary, dir: &Path) -> Result<(), CheckpointError> {
    if vocab.len() != model.config.vocab_size {
        return Err(CheckpointError::VocabMismatch {
            vocab: vocab.len(),
            model: model.config.vocab_size,
        });
    }
    fs::create_dir_all(dir)?;
    let mut weights = Vec::with_capacity(model.config.parameter_count() * 4);
    let mut tensors = Vec::new();
    for ((name, shape), t) in model.config.tensor_shapes().into_iter().zip(model.params.tensors()) {
        tensors.push(TensorEntry {
            name,
            shape,
            offset: weights.len() as u64,
        });
        for v in &t.data {
            weights.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        step_count: model.step_count,
        tensors,
    };
    crate::io::write_atomic(&dir.join("weights.bin"), &weights)?;
    crate::io::write_atomic(&dir.join("vocab.json"), vocab.to_json().as_bytes())?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    crate::io::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, CheckpointError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: manifest.format_version,
        });
    }
    let config = manifest.config;
    config
        .validate()
        .map_err(|e| CheckpointError::Manifest(serde::de::Error::custom(e.to_string())))?;
    let expected = config.tensor_shapes();
    if expected.len() != manifest.tensors.len() {
        return Err(CheckpointError::Shape {
            name: "<registry>".into(),
            expected: vec![expected.len()],
            found: vec![manifest.tensors.len()],
        });
    }
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(CheckpointError::Shape {
                name: entry.name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
    }
    let bytes = fs::read(dir.join("weights.bin"))?;
    let needed = config.parameter_count() as u64 * 4;
    if bytes.len() as u64 != needed {
        return Err(CheckpointError::Truncated {
            expected: needed,
            found: bytes.len() as u64,
        });
    }
    let mut params = Params::<f32>::zeros(&config);
    for (t, entry) in params.tensors_mut().into_iter().zip(&manifest.tensors) {
        let start = entry.offset as usize;
        let end = start + t.data.len() * 4;
        if end > bytes.len() {
            return Err(CheckpointError::Truncated {
                expected: end as u64,
                found: bytes.len() as u64,
            });
        }
        for (v, chunk) in t.data.iter_mut().zip(bytes[start..end].chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
    if vocab.len() != config.vocab_size {
        return Err(CheckpointError::VocabMismatch {
            vocab: vocab.len(),
            model: config.vocab_size,
        });
    }
    Ok(Checkpoint {
        model: LanguageModel {
            config,
            params,
            step_count: manifest.step_count,
        },
        vocab,
    })
}
