//! A small decoder-only transformer with hand-written forward and backward
//! passes. Attention takes a per-token content mask over keys.
//!
//! Layout per layer (pre-norm):
//!
//! ```text
//! x ─┬─ LayerNorm ─ masked multi-head attention ─(+)─┬─ LayerNorm ─ Linear ─ GELU ─ Linear ─(+)─▶
//!    └───────────────────────────────────────────────┘└───────────────────────────────────────┘
//! ```
//!
//! followed by a final LayerNorm and a linear head (separate or tied to the
//! token embeddings). Everything is generic over [`Scalar`] so training can
//! run in `f32` while gradient checks run in `f64`.

mod attention;
mod forward;
mod ops;
mod params;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attention::{masked_attention, Attended, AttentionMatrix};
pub use forward::{backward, forward, forward_cached, ForwardCache};
pub use ops::Matrix;
pub use params::{LayerParams, ModelParams, Tensor};

pub trait Scalar:
    Float + FromPrimitive + Sum + AddAssign + SubAssign + MulAssign + DivAssign + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite attention input")]
    NonFiniteInput,
    #[error("attention row {row} has no attendable key")]
    NoAttendableKey { row: usize },
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    OutOfVocab { id: u32, vocab_size: usize },
    #[error("sequence of length {len} exceeds context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
}

/// How the content mask enters attention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Raw scores are multiplied by the key's mask bit before softmax. A
    /// zeroed score still contributes `e⁰` to the softmax, so masked keys
    /// keep some weight.
    Literal,
    /// Masked keys are removed from the softmax entirely (weight exactly 0).
    #[default]
    Exclusive,
}

impl FromStr for MaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(MaskMode::Literal),
            "exclusive" => Ok(MaskMode::Exclusive),
            other => Err(format!("unknown mask mode {other:?} (expected literal or exclusive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub mask_mode: MaskMode,
    pub tie_embeddings: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            context_len: 128,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            mask_mode: MaskMode::Exclusive,
            tie_embeddings: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ff_dim(&self) -> usize {
        4 * self.d_model
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.context_len < 4 {
            return bad("context_len must be at least 4");
        }
        if self.d_model == 0 || self.n_heads == 0 {
            return bad("d_model and n_heads must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.n_layers == 0 {
            return bad("n_layers must be positive");
        }
        Ok(())
    }
}
