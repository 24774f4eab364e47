//! Single-file model checkpoint.
//!
//! Layout: 8-byte magic `LBMCQCKP`, little-endian `u32` format version,
//! little-endian `u64` header length, a JSON header holding the encoder
//! config and vocabulary, then every parameter as a little-endian `f64` in
//! [`ModelParams::tensors`] order. Values are stored as raw bits, so
//! save/load is bitwise exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EncoderConfig, MiniMcqError, ModelParams, Vocabulary};

const MAGIC: &[u8; 8] = b"LBMCQCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] MiniMcqError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab: Vec<String>,
    num_params: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.params.config,
            vocab: self.vocab.tokens().to_vec(),
            num_params: self.params.num_params(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, tensor) in self.params.tensors() {
            for v in tensor {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |what: &str| CheckpointError::Corrupt(what.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(&e.to_string()))?;
        let vocab = Vocabulary::from_tokens(header.vocab)?;
        if vocab.len() != header.config.vocab_size {
            return Err(corrupt("vocabulary size disagrees with config"));
        }
        header.config.validate()?;
        let mut params = ModelParams::zeros(header.config);
        if params.num_params() != header.num_params {
            return Err(corrupt("parameter count disagrees with config"));
        }
        let data = &body[header_len..];
        if data.len() != 8 * header.num_params {
            return Err(corrupt("parameter block has wrong length"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.set_flat(&values)?;
        Ok(Checkpoint { vocab, params })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
