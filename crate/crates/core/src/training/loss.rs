use std::ops::Range;

use super::{LossScope, TrainError, TrainExample};
use crate::model::{backward, forward_cached, Matrix, ModelError, ModelParams, Scalar};

/// Positions whose next-token prediction is scored. Position `t` predicts
/// `ids[t + 1]`; with [`LossScope::ResponseOnly`] the first scored position
/// is the last prompt-segment token (`<sep>`), which predicts the first
/// response token.
pub fn scope_positions(len: usize, prompt_len: usize, scope: LossScope) -> Range<usize> {
    let end = len.saturating_sub(1);
    let start = match scope {
        LossScope::FullSequence => 0,
        LossScope::ResponseOnly => prompt_len.saturating_sub(1),
    };
    start.min(end)..end
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<S> {
    /// Mean negative log-likelihood in nats per scored token.
    pub loss: f64,
    pub tokens: usize,
    /// Gradient of `loss` with respect to the logits.
    pub dlogits: Matrix<S>,
}

/// Token-mean next-token cross-entropy over the scope, with its gradient.
/// Log-sum-exp is evaluated in `f64` after subtracting the row maximum.
pub fn cross_entropy_loss<S: Scalar>(
    logits: &Matrix<S>,
    ids: &[u32],
    prompt_len: usize,
    scope: LossScope,
) -> Result<LossOutput<S>, TrainError> {
    if logits.rows != ids.len() {
        return Err(ModelError::LengthMismatch { expected: ids.len(), actual: logits.rows }.into());
    }
    let positions = scope_positions(ids.len(), prompt_len, scope);
    let tokens = positions.len();
    if tokens == 0 {
        return Err(TrainError::EmptyScope);
    }
    let vocab = logits.cols;
    let inv = 1.0 / tokens as f64;
    let mut dlogits = Matrix::zeros(logits.rows, vocab);
    let mut total = 0.0;
    let mut probs = vec![0.0f64; vocab];
    for t in positions {
        let target = ids[t + 1] as usize;
        if target >= vocab {
            return Err(ModelError::OutOfVocab { id: ids[t + 1], vocab_size: vocab }.into());
        }
        let row = logits.row(t);
        let max = row.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, x) in probs.iter_mut().zip(row) {
            *p = (x.to_f64().unwrap_or(f64::NAN) - max).exp();
            sum += *p;
        }
        let lse = max + sum.ln();
        total += lse - row[target].to_f64().unwrap_or(f64::NAN);
        let out = dlogits.row_mut(t);
        for (j, (o, p)) in out.iter_mut().zip(&probs).enumerate() {
            let g = p / sum - if j == target { 1.0 } else { 0.0 };
            *o = S::of(g * inv);
        }
    }
    Ok(LossOutput { loss: total * inv, tokens, dlogits })
}

/// Loss and parameter gradients for one example.
pub fn example_loss_and_gradients<S: Scalar>(
    params: &ModelParams<S>,
    example: &TrainExample,
    scope: LossScope,
) -> Result<(f64, ModelParams<S>), TrainError> {
    let (logits, cache) = forward_cached(params, &example.ids, &example.mask)?;
    let out = cross_entropy_loss(&logits, &example.ids, example.prompt_len, scope)?;
    Ok((out.loss, backward(params, &cache, &out.dlogits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)] // the rounded anchor value is the point
    fn uniform_logits_cost_ln_v() {
        let logits = Matrix::<f64>::zeros(2, 10);
        let out = cross_entropy_loss(&logits, &[0, 7], 0, LossScope::FullSequence).unwrap();
        assert_abs_diff_eq!(out.loss, 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.loss, 2.302585, epsilon = 1e-6);
    }

    #[test]
    fn saturated_softmax() {
        let mut logits = Matrix::<f64>::zeros(2, 5);
        logits.data[3] = 30.0;
        let out = cross_entropy_loss(&logits, &[0, 3], 0, LossScope::FullSequence).unwrap();
        assert!(out.loss < 1e-9);
    }

    #[test]
    fn two_class_hand_value() {
        let logits = Matrix::from_vec(2, 2, vec![0.0, 3f64.ln(), 0.0, 0.0]);
        let out = cross_entropy_loss(&logits, &[0, 1], 0, LossScope::FullSequence).unwrap();
        assert_abs_diff_eq!(out.loss, -(0.75f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.loss, 0.287682, epsilon = 1e-6);
        assert_abs_diff_eq!(out.dlogits.data[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out.dlogits.data[1], -0.25, epsilon = 1e-12);
        assert_eq!(&out.dlogits.data[2..], [0.0, 0.0]);
    }

    #[test]
    fn scope_ranges() {
        // <bos> a b <sep> x y <eos>: prompt_len 4
        assert_eq!(scope_positions(7, 4, LossScope::ResponseOnly), 3..6);
        assert_eq!(scope_positions(7, 4, LossScope::FullSequence), 0..6);
        assert_eq!(scope_positions(1, 0, LossScope::FullSequence), 0..0);
        let logits = Matrix::<f64>::zeros(3, 4);
        assert!(matches!(
            cross_entropy_loss(&logits, &[0, 1, 2], 2, LossScope::ResponseOnly),
            Ok(LossOutput { tokens: 1, .. })
        ));
        let logits = Matrix::<f64>::zeros(1, 4);
        assert!(matches!(cross_entropy_loss(&logits, &[0], 0, LossScope::FullSequence), Err(TrainError::EmptyScope)));
    }

    proptest! {
        #[test]
        fn loss_is_non_negative(vals in proptest::collection::vec(-20.0f64..20.0, 12), target in 0u32..4) {
            let logits = Matrix::from_vec(3, 4, vals);
            let out = cross_entropy_loss(&logits, &[0, target, 3 - target], 0, LossScope::FullSequence).unwrap();
            prop_assert!(out.loss >= 0.0);
        }

        #[test]
        fn prompt_targets_do_not_matter(
            vals in proptest::collection::vec(-5.0f64..5.0, 6 * 5),
            prompt in proptest::collection::vec(0u32..5, 3),
            response in proptest::collection::vec(0u32..5, 3),
        ) {
            let logits = Matrix::from_vec(6, 5, vals);
            let mut ids = vec![1, 2, 3];
            ids.extend(&response);
            let base = cross_entropy_loss(&logits, &ids, 3, LossScope::ResponseOnly).unwrap();
            let mut altered = prompt.clone();
            altered.extend(&response);
            let other = cross_entropy_loss(&logits, &altered, 3, LossScope::ResponseOnly).unwrap();
            prop_assert_eq!(base.loss, other.loss);
            prop_assert_eq!(base.dlogits, other.dlogits);
        }
    }
}
