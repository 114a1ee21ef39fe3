//! Unmask probabilities and binary attention masks.
//!
//! Each token's chance of staying attendable is
//! `σ(w_tfidf·tfidf + w_pos·pos + w_dep·dep + w_random·random + bias)`.
//! Masks are sampled offline from those probabilities and written to disk
//! next to the dataset, so training never recomputes them.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_masks, save_masks, MaskRecord};

use crate::analyzers::{TokenAnalyzer, TokenScores};
use crate::seed::{derive_seed, stream};
use crate::text::TokenizedExample;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("mask weights must be finite")]
    NonFiniteWeight,
    #[error("floor_mask_rate must be in [0, 0.5], got {0}")]
    InvalidFloor(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("protected index {index} out of range for length {len}")]
    ProtectedOutOfRange { index: usize, len: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed mask record: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskWeights {
    pub w_tfidf: f64,
    pub w_pos: f64,
    pub w_dep: f64,
    pub w_random: f64,
    pub bias: f64,
}

impl Default for MaskWeights {
    fn default() -> Self {
        Self { w_tfidf: 1.0, w_pos: 1.0, w_dep: 1.0, w_random: 0.5, bias: 0.0 }
    }
}

impl MaskWeights {
    pub fn validate(&self) -> Result<(), MaskError> {
        let all = [self.w_tfidf, self.w_pos, self.w_dep, self.w_random, self.bias];
        if all.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(MaskError::NonFiniteWeight)
        }
    }

    fn logit(&self, tfidf: f64, pos: u8, dep: u8, random: f64) -> f64 {
        self.w_tfidf * tfidf
            + self.w_pos * f64::from(pos)
            + self.w_dep * f64::from(dep)
            + self.w_random * random
            + self.bias
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn unmask_probability(scores: &TokenScores, weights: &MaskWeights) -> Result<Vec<f64>, MaskError> {
    weights.validate()?;
    let n = scores.tfidf.len();
    for len in [scores.pos.len(), scores.dep.len(), scores.random.len()] {
        if len != n {
            return Err(MaskError::LengthMismatch { expected: n, actual: len });
        }
    }
    Ok((0..n)
        .map(|i| sigmoid(weights.logit(scores.tfidf[i], scores.pos[i], scores.dep[i], scores.random[i])))
        .collect())
}

/// A binary mask (1 = attendable) plus the probabilities it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskVector {
    pub bits: Vec<u8>,
    pub probabilities: Vec<f64>,
}

impl MaskVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn all_ones(len: usize) -> Self {
        Self { bits: vec![1; len], probabilities: vec![1.0; len] }
    }

    pub fn unmasked_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Independent Bernoulli draw per token.
    Bernoulli,
    /// Deterministic: unmasked iff probability ≥ the threshold.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub floor_mask_rate: f64,
    pub sampling: Sampling,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { floor_mask_rate: 0.15, sampling: Sampling::Bernoulli }
    }
}

fn check_inputs(probabilities: &[f64], protected: &[usize], floor: f64) -> Result<(), MaskError> {
    if !(0.0..=0.5).contains(&floor) {
        return Err(MaskError::InvalidFloor(floor));
    }
    if let Some(&p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MaskError::InvalidProbability(p));
    }
    if let Some(&index) = protected.iter().find(|&&i| i >= probabilities.len()) {
        return Err(MaskError::ProtectedOutOfRange { index, len: probabilities.len() });
    }
    Ok(())
}

/// Samples bit i ~ Bernoulli(pᵢ), then enforces protection, the
/// all-masked fallback and the minimum masked fraction. See
/// [`finalize_mask`] for the post-processing order.
pub fn sample_mask(
    probabilities: &[f64],
    protected: &[usize],
    floor_mask_rate: f64,
    seed: u64,
) -> Result<MaskVector, MaskError> {
    check_inputs(probabilities, protected, floor_mask_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = probabilities.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
    Ok(finalize_mask(bits, probabilities, protected, floor_mask_rate))
}

/// Deterministic variant of [`sample_mask`].
pub fn threshold_mask(
    probabilities: &[f64],
    protected: &[usize],
    floor_mask_rate: f64,
    threshold: f64,
) -> Result<MaskVector, MaskError> {
    check_inputs(probabilities, protected, floor_mask_rate)?;
    let bits = probabilities.iter().map(|&p| u8::from(p >= threshold)).collect();
    Ok(finalize_mask(bits, probabilities, protected, floor_mask_rate))
}

/// Post-processing shared by both sampling modes, in order:
///
/// 1. protected positions are forced to 1;
/// 2. if every non-protected position came out 0, the highest-probability
///    one is set to 1;
/// 3. while fewer than ⌈floor·n⌉ of the n non-protected positions are 0,
///    the lowest-probability unmasked one is masked;
/// 4. if nothing at all is attendable, the highest-probability position is
///    set to 1.
fn finalize_mask(mut bits: Vec<u8>, probabilities: &[f64], protected: &[usize], floor: f64) -> MaskVector {
    let n = bits.len();
    let mut is_protected = vec![false; n];
    for &i in protected {
        is_protected[i] = true;
        bits[i] = 1;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_protected[i]).collect();
    // highest probability, lowest index on ties
    let argmax = |idx: &mut dyn Iterator<Item = usize>| {
        idx.fold(None, |best: Option<usize>, i| match best {
            Some(b) if probabilities[b] >= probabilities[i] => Some(b),
            _ => Some(i),
        })
    };

    if !free.is_empty() && free.iter().all(|&i| bits[i] == 0) {
        if let Some(i) = argmax(&mut free.iter().copied()) {
            bits[i] = 1;
        }
    }

    let needed = ((floor * free.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let masked = free.iter().filter(|&&i| bits[i] == 0).count();
    if masked < needed {
        let mut candidates: Vec<usize> = free.iter().copied().filter(|&i| bits[i] == 1).collect();
        candidates.sort_by(|&a, &b| probabilities[a].total_cmp(&probabilities[b]).then(a.cmp(&b)));
        for &i in candidates.iter().take(needed - masked) {
            bits[i] = 0;
        }
    }

    if n > 0 && bits.iter().all(|&b| b == 0) {
        if let Some(i) = argmax(&mut (0..n)) {
            bits[i] = 1;
        }
    }
    MaskVector { bits, probabilities: probabilities.to_vec() }
}

/// Scores and mask for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMask {
    pub scores: TokenScores,
    pub mask: MaskVector,
}

/// Masks every example. Example `i` draws its noise channel and its
/// Bernoulli samples from seeds derived from `(seed, i)`, so the result does
/// not depend on evaluation order.
pub fn mask_dataset(
    examples: &[TokenizedExample],
    analyzer: &TokenAnalyzer,
    weights: &MaskWeights,
    config: &MaskConfig,
    seed: u64,
) -> Result<Vec<ExampleMask>, MaskError> {
    weights.validate()?;
    examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let scores = analyzer.score(ex, derive_seed(seed, &[stream::RANDOM_SCORES, i as u64]));
            let probs = unmask_probability(&scores, weights)?;
            let protected = ex.structural_positions();
            let mask = match config.sampling {
                Sampling::Bernoulli => sample_mask(
                    &probs,
                    &protected,
                    config.floor_mask_rate,
                    derive_seed(seed, &[stream::MASK_SAMPLING, i as u64]),
                )?,
                Sampling::Threshold(t) => threshold_mask(&probs, &protected, config.floor_mask_rate, t)?,
            };
            Ok(ExampleMask { scores, mask })
        })
        .collect()
}
