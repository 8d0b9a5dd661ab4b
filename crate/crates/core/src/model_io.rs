//! Model bundles on disk.
//!
//! A bundle is a directory holding three files:
//!
//! * `manifest.toml` – format version, architecture, vocabulary file name and
//!   its SHA-256, weights file name and byte length, optimizer provenance and
//!   seed;
//! * `vocab.tsv` – the vocabulary in its TSV form;
//! * `weights.bin` – every parameter as a 32-bit little-endian float, in the
//!   order embedding table (row-major), then `W, U, b` for the input, forget,
//!   candidate and output gates, then dense `w` and dense `b`.
//!
//! Every file is written through a temporary file and renamed into place;
//! the manifest goes last.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::nn::{ModelConfig, ModelParams, ParamTensors};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub optimizer: String,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub vocabulary: VocabRef,
    pub weights: WeightsRef,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsRef {
    pub file: String,
    pub dtype: String,
    pub bytes: u64,
}

/// Bytes in the weights blob for a given architecture.
pub fn blob_len(config: &ModelConfig) -> u64 {
    4 * config.parameter_count() as u64
}

fn sha256_hex(bytes: &[u8]) -> String {
    crate::io_util::to_hex(&Sha256::digest(bytes))
}

pub fn encode_weights(model: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(blob_len(&model.config) as usize);
    for s in model.weights.slices() {
        for &v in s {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_weights(config: ModelConfig, blob: &[u8]) -> Result<ModelParams> {
    let expected = blob_len(&config);
    if blob.len() as u64 != expected {
        return Err(Error::BlobSize {
            expected,
            found: blob.len() as u64,
        });
    }
    let mut weights = ParamTensors::zeros(&config);
    let mut chunks = blob.chunks_exact(4);
    for s in weights.slices_mut() {
        for (v, c) in s.iter_mut().zip(&mut chunks) {
            *v = f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk")));
        }
    }
    let model = ModelParams { config, weights };
    model.validate()?;
    Ok(model)
}

pub fn save(dir: &Path, model: &ModelParams, vocab: &Vocabulary, provenance: &Provenance) -> Result<()> {
    model.validate()?;
    if vocab.len() != model.config.vocab_size {
        return Err(Error::Config(format!(
            "model expects a vocabulary of {} tokens, got {}",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab_bytes = vocab.to_tsv().into_bytes();
    let blob = encode_weights(model);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.config,
        vocabulary: VocabRef {
            file: VOCAB_FILE.into(),
            sha256: sha256_hex(&vocab_bytes),
        },
        weights: WeightsRef {
            file: WEIGHTS_FILE.into(),
            dtype: "f32le".into(),
            bytes: blob.len() as u64,
        },
        provenance: provenance.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    write_atomic(&dir.join(VOCAB_FILE), &vocab_bytes)?;
    write_atomic(&dir.join(WEIGHTS_FILE), &blob)?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Manifest(e.message().to_string()))?;
    let version = table
        .get("format_version")
        .and_then(toml::Value::as_integer)
        .ok_or_else(|| Error::Manifest("missing format_version".into()))?;
    if version != i64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Manifest(e.message().to_string()))?;
    if manifest.weights.dtype != "f32le" {
        return Err(Error::Manifest(format!("unsupported dtype {:?}", manifest.weights.dtype)));
    }
    manifest.model.validate()?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(ModelParams, Vocabulary)> {
    let manifest = read_manifest(dir)?;
    let vocab_path = dir.join(&manifest.vocabulary.file);
    let vocab_bytes = std::fs::read(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let found = sha256_hex(&vocab_bytes);
    if found != manifest.vocabulary.sha256 {
        return Err(Error::HashMismatch {
            expected: manifest.vocabulary.sha256,
            found,
        });
    }
    let text = std::str::from_utf8(&vocab_bytes).map_err(|_| Error::Parse {
        path: vocab_path.clone(),
        line: 0,
        message: "invalid UTF-8".into(),
    })?;
    let vocab = Vocabulary::from_tsv(text, &vocab_path)?;
    if vocab.len() != manifest.model.vocab_size {
        return Err(Error::Config(format!(
            "manifest declares {} tokens, vocabulary has {}",
            manifest.model.vocab_size,
            vocab.len()
        )));
    }
    let blob_path = dir.join(&manifest.weights.file);
    let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let expected = blob_len(&manifest.model);
    if manifest.weights.bytes != expected {
        return Err(Error::Manifest(format!(
            "weights.bytes = {} but the architecture implies {expected}",
            manifest.weights.bytes
        )));
    }
    let model = decode_weights(manifest.model, &blob)?;
    Ok((model, vocab))
}
