//! Supervised fine-tuning of the student on teacher responses: next-token
//! cross-entropy, AdamW, early stopping on validation loss, checkpoints and
//! perplexity evaluation.

mod adamw;
mod checkpoint;
mod eval;
mod loss;
mod train;

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adamw::{adamw_step, adamw_update, AdamWSettings, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate_perplexity, Evaluation};
pub use loss::{cross_entropy_loss, example_loss_and_gradients, scope_positions, LossOutput};
pub use train::{
    train, train_resampling, train_with_validator, write_metrics_csv, EpochMetrics, MaskResampling, MaskSource,
    TrainOutcome, TrainReport,
};

use crate::config::{parse_value, KeyValue};
use crate::masking::{MaskError, MaskVector};
use crate::model::{MaskMode, ModelError};
use crate::seed::{derive_seed, stream};
use crate::text::TokenizedExample;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("no target tokens in loss scope")]
    EmptyScope,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("shape mismatch in tensor {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed checkpoint: {reason}")]
    MalformedCheckpoint { path: String, reason: String },
}

/// Which next-token targets contribute to the loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScope {
    /// Only response tokens (and the closing `<eos>`), conditioned on the prompt.
    #[default]
    ResponseOnly,
    FullSequence,
}

impl FromStr for LossScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response_only" => Ok(Self::ResponseOnly),
            "full_sequence" => Ok(Self::FullSequence),
            other => Err(format!("unknown loss scope {other:?} (expected response_only or full_sequence)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss_scope: LossScope,
    pub mask_mode: MaskMode,
    /// Share of examples held out for validation when splitting a dataset.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 8,
            max_epochs: 20,
            patience: 3,
            min_delta: 1e-4,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            loss_scope: LossScope::ResponseOnly,
            mask_mode: MaskMode::Exclusive,
            val_fraction: 0.125,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be at least 1");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(TrainError::InvalidConfig(format!("{name} must be in (0, 1)")));
            }
        }
        let positive = |x: f64| x > 0.0;
        let non_negative = |x: f64| x >= 0.0;
        if !positive(self.adam_epsilon) || !non_negative(self.weight_decay) || !non_negative(self.min_delta) {
            return bad("adam_epsilon must be positive; weight_decay and min_delta non-negative");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWSettings {
        AdamWSettings {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

impl KeyValue for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(value)?,
            "batch_size" => self.batch_size = parse_value(value)?,
            "max_epochs" => self.max_epochs = parse_value(value)?,
            "patience" => self.patience = parse_value(value)?,
            "min_delta" => self.min_delta = parse_value(value)?,
            "weight_decay" => self.weight_decay = parse_value(value)?,
            "adam_beta1" => self.adam_beta1 = parse_value(value)?,
            "adam_beta2" => self.adam_beta2 = parse_value(value)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(value)?,
            "seed" => self.seed = parse_value(value)?,
            "loss_scope" => self.loss_scope = value.parse()?,
            "mask_mode" => self.mask_mode = value.parse()?,
            "val_fraction" => self.val_fraction = parse_value(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// One training sequence: token ids, prompt segment length, attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub ids: Vec<u32>,
    pub prompt_len: usize,
    pub mask: Vec<u8>,
}

impl TrainExample {
    pub fn new(example: &TokenizedExample, mask: &MaskVector) -> Result<Self, TrainError> {
        if mask.len() != example.len() {
            return Err(ModelError::LengthMismatch { expected: example.len(), actual: mask.len() }.into());
        }
        Ok(Self { ids: example.ids(), prompt_len: example.prompt_len, mask: mask.bits.clone() })
    }

    /// All positions attendable.
    pub fn unmasked(example: &TokenizedExample) -> Self {
        Self { ids: example.ids(), prompt_len: example.prompt_len, mask: vec![1; example.len()] }
    }
}

/// Seeded disjoint split into (train, validation) index lists, each sorted.
/// The validation share is `round(n·fraction)` clamped to `[1, n−1]`.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if n < 2 {
        return Err(TrainError::EmptySplit(if n == 0 { "train" } else { "validation" }));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::SPLIT])));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}
