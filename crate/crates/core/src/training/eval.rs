use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_entropy_loss, LossScope, TrainError, TrainExample};
use crate::model::{forward, ModelParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Token-weighted mean cross-entropy in nats per token.
    pub loss: f64,
    pub perplexity: f64,
    pub tokens: usize,
    pub examples: usize,
}

/// Perplexity `exp(loss)` where `loss` averages over every scored token of
/// every example.
pub fn evaluate_perplexity<S: Scalar>(
    params: &ModelParams<S>,
    examples: &[TrainExample],
    scope: LossScope,
) -> Result<Evaluation, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let per_example: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|ex| {
            let logits = forward(params, &ex.ids, &ex.mask)?;
            let out = cross_entropy_loss(&logits, &ex.ids, ex.prompt_len, scope)?;
            Ok((out.loss * out.tokens as f64, out.tokens))
        })
        .collect::<Result<_, TrainError>>()?;
    let (total, tokens) = per_example.iter().fold((0.0, 0), |(s, n), &(l, t)| (s + l, n + t));
    let loss = total / tokens as f64;
    Ok(Evaluation { loss, perplexity: loss.exp(), tokens, examples: examples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn zero_head_gives_ln_v() {
        let mut cfg = ModelConfig::new(13);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.context_len = 16;
        let mut params = ModelParams::<f32>::init(cfg, 0).unwrap();
        params.head.as_mut().unwrap().data.fill(0.0);
        let exs = vec![
            TrainExample { ids: vec![1, 5, 4, 7, 8, 2], prompt_len: 3, mask: vec![1; 6] },
            TrainExample { ids: vec![1, 6, 4, 9, 2], prompt_len: 3, mask: vec![1, 0, 1, 1, 1] },
        ];
        let e = evaluate_perplexity(&params, &exs, LossScope::ResponseOnly).unwrap();
        approx::assert_abs_diff_eq!(e.loss, 13f64.ln(), epsilon = 1e-12);
        assert_eq!(e.perplexity, e.loss.exp());
        assert_eq!((e.tokens, e.examples), (3 + 2, 2));
        assert!(matches!(evaluate_perplexity(&params, &[], LossScope::ResponseOnly), Err(TrainError::EmptySplit(_))));
    }
}
