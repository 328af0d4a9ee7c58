//! Binary checkpoint format.
//!
//! ```text
//! "OLIDCKPT"            8 bytes
//! version               u32 LE
//! header length         u32 LE
//! header                canonical JSON (CheckpointMeta)
//! parameter count       u64 LE
//! parameters            f64 LE, flat-index order
//! checksum              u64 LE, first 8 bytes of SHA-256 over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, TrainingError};
use crate::corpus::Level;
use crate::encoder::{EncoderConfig, ParameterSet};
use crate::preprocess::PreprocessOptions;
use crate::tokenizer::Vocabulary;

pub const MAGIC: &[u8; 8] = b"OLIDCKPT";
pub const VERSION: u32 = 1;

/// Everything in a checkpoint except the parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub level: Level,
    pub preprocess: PreprocessOptions,
    /// Hex SHA-256 of the vocabulary file the model was trained with.
    pub vocab_hash: String,
    pub best_epoch: usize,
    pub valid_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParameterSet,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], TrainingError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(TrainingError::Truncated { what, offset: self.pos }),
        }
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, TrainingError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, TrainingError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.meta).expect("checkpoint metadata serializes");
        let values = &self.params.values;
        let mut out = Vec::with_capacity(32 + header.len() + 8 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainingError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(TrainingError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(TrainingError::VersionMismatch { found: version, expected: VERSION });
        }
        let header_len = r.u32("header length")? as usize;
        let header = r.take(header_len, "header")?;
        let count = r.u64("parameter count")? as usize;
        let payload = r.take(
            count.checked_mul(8).ok_or(TrainingError::Corrupt("parameter count overflows".into()))?,
            "parameters",
        )?;
        let body_end = r.pos;
        let stored = r.u64("checksum")?;
        if r.pos != bytes.len() {
            return Err(TrainingError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if checksum(&bytes[..body_end]) != stored {
            return Err(TrainingError::Corrupt("checksum mismatch".into()));
        }
        let meta: CheckpointMeta =
            serde_json::from_slice(header).map_err(|e| TrainingError::Corrupt(format!("header: {e}")))?;
        let values: Vec<f64> =
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let params = ParameterSet::from_values(&meta.encoder, values)?;
        meta.train.validate_hyperparameters()?;
        if meta.encoder.num_classes != meta.level.num_classes() {
            return Err(TrainingError::Corrupt(format!(
                "level {} needs {} classes but the encoder has {}",
                meta.level,
                meta.level.num_classes(),
                meta.encoder.num_classes
            )));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainingError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Reads a checkpoint; with `vocab`, also checks it is the vocabulary the
    /// model was trained with.
    pub fn load(path: &Path, vocab: Option<&Vocabulary>) -> Result<Self, TrainingError> {
        let ckpt = Self::from_bytes(&std::fs::read(path)?)?;
        if let Some(v) = vocab {
            ckpt.check_vocab(v)?;
        }
        Ok(ckpt)
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), TrainingError> {
        let found = vocab.hash();
        if found != self.meta.vocab_hash {
            return Err(TrainingError::VocabHashMismatch { expected: self.meta.vocab_hash.clone(), found });
        }
        if vocab.size() != self.meta.encoder.vocab_size {
            return Err(TrainingError::Corrupt(format!(
                "vocabulary has {} entries but the encoder expects {}",
                vocab.size(),
                self.meta.encoder.vocab_size
            )));
        }
        Ok(())
    }
}
