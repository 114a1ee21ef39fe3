use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    adamw_step, cross_entropy_loss, example_loss_and_gradients, Checkpoint, OptimizerState, TrainConfig, TrainError,
    TrainExample,
};
use crate::masking::sample_mask;
use crate::model::{forward, ModelError, ModelParams};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Optimizer steps taken so far.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub total_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Checkpoint,
    pub report: TrainReport,
}

/// What a training example's mask is redrawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSource {
    /// Unmask probability per position, as stored with the offline mask.
    pub probabilities: Vec<f64>,
    /// Positions that are always attendable.
    pub protected: Vec<usize>,
}

/// Redraws training masks at the start of every epoch after the first.
/// Epoch 1 uses the masks stored on the examples; epoch `e` then samples
/// example `i` from a seed derived from `(seed, e, i)`. Validation masks
/// never change.
#[derive(Debug, Clone, Copy)]
pub struct MaskResampling<'a> {
    /// One per training example, in the same order.
    pub sources: &'a [MaskSource],
    pub floor_mask_rate: f64,
}

impl MaskResampling<'_> {
    fn check(&self, train_set: &[TrainExample]) -> Result<(), TrainError> {
        if self.sources.len() != train_set.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "<mask sources: {} for {} examples>",
                self.sources.len(),
                train_set.len()
            )));
        }
        for (i, (src, ex)) in self.sources.iter().zip(train_set).enumerate() {
            if src.probabilities.len() != ex.ids.len() {
                return Err(TrainError::ShapeMismatch(format!("<mask source {i}>")));
            }
        }
        Ok(())
    }

    fn redraw(&self, train_set: &[TrainExample], seed: u64, epoch: usize) -> Result<Vec<TrainExample>, TrainError> {
        train_set
            .par_iter()
            .zip(self.sources)
            .enumerate()
            .map(|(i, (ex, src))| {
                let s = derive_seed(seed, &[stream::MASK_RESAMPLE, epoch as u64, i as u64]);
                let mask = sample_mask(&src.probabilities, &src.protected, self.floor_mask_rate, s)?;
                Ok(TrainExample { mask: mask.bits, ..ex.clone() })
            })
            .collect()
    }
}

/// Finite weights whose activations overflow are a training failure, not bad
/// input.
fn overflow_as_divergence(err: TrainError, epoch: usize, step: usize) -> TrainError {
    match err {
        TrainError::Model(ModelError::NonFiniteInput) => TrainError::Divergence { epoch, step },
        other => other,
    }
}

/// Example-mean validation loss.
fn validation_loss(params: &ModelParams<f32>, val: &[TrainExample], config: &TrainConfig) -> Result<f64, TrainError> {
    let losses: Vec<f64> = val
        .par_iter()
        .map(|ex| {
            let logits = forward(params, &ex.ids, &ex.mask)?;
            Ok(cross_entropy_loss(&logits, &ex.ids, ex.prompt_len, config.loss_scope)?.loss)
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains on `train_set`, early-stopping on the loss over `val_set`.
pub fn train(
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    config: &TrainConfig,
    initial: ModelParams<f32>,
) -> Result<TrainOutcome, TrainError> {
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    train_with_validator(train_set, config, initial, |_, params| validation_loss(params, val_set, config))
}

/// [`train`] with training masks redrawn every epoch.
pub fn train_resampling(
    train_set: &[TrainExample],
    resampling: MaskResampling<'_>,
    val_set: &[TrainExample],
    config: &TrainConfig,
    initial: ModelParams<f32>,
) -> Result<TrainOutcome, TrainError> {
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    run(train_set, Some(resampling), config, initial, |_, params| validation_loss(params, val_set, config))
}

/// Training loop with a caller-supplied validation metric, evaluated after
/// every epoch as `validate(epoch, params)`.
///
/// Each epoch shuffles the training set with a seed derived from
/// `(config.seed, epoch)` and walks it in batches of `batch_size` (the last
/// batch may be short). Per-example gradients are computed in parallel and
/// reduced in batch order, so results do not depend on thread scheduling.
///
/// An epoch counts as an improvement when its validation loss beats the best
/// so far by at least `min_delta`; after `patience` epochs without one,
/// training stops. The returned checkpoint is always the best epoch's.
pub fn train_with_validator(
    train_set: &[TrainExample],
    config: &TrainConfig,
    initial: ModelParams<f32>,
    validate: impl FnMut(usize, &ModelParams<f32>) -> Result<f64, TrainError>,
) -> Result<TrainOutcome, TrainError> {
    run(train_set, None, config, initial, validate)
}

fn run(
    train_set: &[TrainExample],
    resampling: Option<MaskResampling<'_>>,
    config: &TrainConfig,
    initial: ModelParams<f32>,
    mut validate: impl FnMut(usize, &ModelParams<f32>) -> Result<f64, TrainError>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if let Some(r) = &resampling {
        r.check(train_set)?;
    }
    let mut params = initial;
    params.config.mask_mode = config.mask_mode;
    params.check_shapes()?;
    if !params.is_finite() {
        return Err(ModelError::NonFiniteInput.into());
    }
    let mut opt = OptimizerState::new(&params);
    let settings = config.adamw();

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let mut since_improvement = 0;
    let mut steps = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let redrawn;
        let epoch_set = match &resampling {
            Some(r) if epoch > 1 => {
                redrawn = r.redraw(train_set, config.seed, epoch)?;
                &redrawn[..]
            }
            _ => train_set,
        };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::SHUFFLE, epoch as u64])));

        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, ModelParams<f32>)> = batch
                .par_iter()
                .map(|&i| example_loss_and_gradients(&params, &epoch_set[i], config.loss_scope))
                .collect::<Result<_, _>>()
                .map_err(|e| overflow_as_divergence(e, epoch, steps + 1))?;
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                for (acc, t) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                    for (a, &x) in acc.data.iter_mut().zip(&t.data) {
                        *a += x;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for t in grads.tensors_mut() {
                for x in &mut t.data {
                    *x *= inv;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Divergence { epoch, step: steps + 1 });
            }
            match adamw_step(&mut params, &grads, &mut opt, &settings) {
                Err(TrainError::NonFiniteGradient(_)) => return Err(TrainError::Divergence { epoch, step: steps + 1 }),
                other => other?,
            }
            steps += 1;
            if !params.is_finite() {
                return Err(TrainError::Divergence { epoch, step: steps });
            }
            loss_sum += batch_loss;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = validate(epoch, &params).map_err(|e| overflow_as_divergence(e, epoch, steps))?;
        if !val_loss.is_finite() {
            return Err(TrainError::Divergence { epoch, step: steps });
        }
        tracing::info!(epoch, train_loss, val_loss, steps, "epoch finished");
        epochs.push(EpochMetrics { epoch, train_loss, val_loss, steps });

        let best_so_far = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let improved = val_loss < best_so_far - config.min_delta;
        if val_loss < best_so_far {
            let ck = Checkpoint { params: params.clone(), optimizer: Some(opt.clone()), seed: config.seed, epoch };
            best = Some((val_loss, epoch, ck));
        }
        if improved {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, best) = best.expect("at least one epoch ran");
    let report = TrainReport { epochs, best_epoch, best_val_loss, stopped_early, total_steps: steps };
    Ok(TrainOutcome { best, report })
}

/// `epoch,train_loss,val_loss` lines, one per epoch.
pub fn write_metrics_csv(path: &Path, report: &TrainReport) -> Result<(), TrainError> {
    let io_err = |source| TrainError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(w, "epoch,train_loss,val_loss").map_err(io_err)?;
    for e in &report.epochs {
        writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_loss).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
