//! Pointer-generator encoder-decoder with hand-written backpropagation.
//!
//! The numeric core is generic over [`Real`] so the same code trains in
//! `f32` and is gradient-checked in `f64`.

mod checkpoint;
mod gradcheck;
mod lstm;
mod model;
mod params;
pub mod tensor;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport, GroupError};
pub use model::{copy_mixture, DecoderState, Encoded, Example, Model, StepOutput};
pub use params::{Lstm, Params};
pub use tensor::Tensor;
pub use train::{train, LossRecord, Optimizer, TrainConfig, TrainError, TrainOutcome};

use crate::seqbuild::{BOS_ID, EOS_ID, UNK_ID};

pub trait Real:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per direction.
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub source_vocab_size: usize,
    pub target_vocab_size: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub coverage_enabled: bool,
    pub coverage_weight: f64,
    pub dropout: f64,
    pub seed: u64,
    pub bos_id: u32,
    pub eos_id: u32,
    pub unk_id: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 256,
            encoder_hidden: 128,
            decoder_hidden: 256,
            source_vocab_size: 10_011,
            target_vocab_size: 2_011,
            max_source_len: 600,
            max_target_len: 100,
            coverage_enabled: false,
            coverage_weight: 1.0,
            dropout: 0.3,
            seed: 1,
            bos_id: BOS_ID,
            eos_id: EOS_ID,
            unk_id: UNK_ID,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by tests and demos.
    pub fn toy(vocab: usize, embed: usize, hidden: usize) -> Self {
        ModelConfig {
            embed_dim: embed,
            encoder_hidden: hidden,
            decoder_hidden: 2 * hidden,
            source_vocab_size: vocab,
            target_vocab_size: vocab,
            max_source_len: 64,
            max_target_len: 16,
            dropout: 0.0,
            bos_id: 0,
            eos_id: 1,
            unk_id: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("source_vocab_size", self.source_vocab_size),
            ("target_vocab_size", self.target_vocab_size),
            ("max_source_len", self.max_source_len),
            ("max_target_len", self.max_target_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NeuralError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.decoder_hidden != 2 * self.encoder_hidden {
            return Err(NeuralError::Config(format!(
                "decoder_hidden ({}) must be twice encoder_hidden ({})",
                self.decoder_hidden, self.encoder_hidden
            )));
        }
        if self.target_vocab_size > self.source_vocab_size {
            return Err(NeuralError::Config(
                "target vocabulary must be a prefix of the source vocabulary".into(),
            ));
        }
        for (name, id) in [("bos_id", self.bos_id), ("eos_id", self.eos_id), ("unk_id", self.unk_id)] {
            if id as usize >= self.target_vocab_size {
                return Err(NeuralError::Config(format!("{name} outside the target vocabulary")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range (limit {limit})")]
    IdOutOfRange { id: u32, limit: usize },
    #[error("source length {len} exceeds max_source_len {max}")]
    SourceTooLong { len: usize, max: usize },
    #[error("empty source sequence")]
    EmptySource,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
