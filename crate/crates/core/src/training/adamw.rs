use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{ModelParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// First and second moments mirroring the parameter tensors, plus the step
/// counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: ModelParams<S>,
    pub v: ModelParams<S>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(params: &ModelParams<S>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One AdamW update of a single tensor at (already incremented) step `t`:
///
/// ```text
/// m ← β₁m + (1−β₁)g          v ← β₂v + (1−β₂)g²
/// m̂ = m/(1−β₁ᵗ)              v̂ = v/(1−β₂ᵗ)
/// p ← p − lr·(m̂/(√v̂+ε) + λ·p)     (λ = 0 unless `decay`)
/// ```
pub fn adamw_update<S: Scalar>(p: &mut [S], g: &[S], m: &mut [S], v: &mut [S], t: u64, s: &AdamWSettings, decay: bool) {
    let (b1, b2) = (S::of(s.beta1), S::of(s.beta2));
    let one = S::one();
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = one - b1.powi(exp);
    let c2 = one - b2.powi(exp);
    let lr = S::of(s.learning_rate);
    let eps = S::of(s.epsilon);
    let wd = if decay { S::of(s.weight_decay) } else { S::zero() };
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
    }
}

/// Applies one AdamW step to every tensor. Weight decay skips vectors and
/// embedding tables (see [`crate::model::Tensor::decays`]).
pub fn adamw_step<S: Scalar>(
    params: &mut ModelParams<S>,
    grads: &ModelParams<S>,
    state: &mut OptimizerState<S>,
    settings: &AdamWSettings,
) -> Result<(), TrainError> {
    {
        let ps = params.tensors();
        let gs = grads.tensors();
        let ms = state.m.tensors();
        let vs = state.v.tensors();
        if gs.len() != ps.len() || ms.len() != ps.len() || vs.len() != ps.len() {
            return Err(TrainError::ShapeMismatch("<tensor count>".into()));
        }
        for (((p, g), m), v) in ps.iter().zip(&gs).zip(&ms).zip(&vs) {
            if g.shape != p.shape || m.shape != p.shape || v.shape != p.shape || g.data.len() != p.data.len() {
                return Err(TrainError::ShapeMismatch(p.name.clone()));
            }
            if g.data.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient(p.name.clone()));
            }
        }
    }
    state.step += 1;
    let t = state.step;
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        let decay = p.decays();
        adamw_update(&mut p.data, &g.data, &mut m.data, &mut v.data, t, settings, decay);
    }
    Ok(())
}
