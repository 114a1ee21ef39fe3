use super::ops::{dot, Matrix};
use super::{MaskMode, ModelError, Scalar};

/// Attention internals for one head, kept for inspection in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix<S> {
    /// Raw scores `qᵢ·kⱼ/√d_head`.
    pub scores: Matrix<S>,
    /// Scores after the mask and causal adjustments; excluded entries are −∞.
    pub adjusted: Matrix<S>,
    /// Row-wise softmax of `adjusted`.
    pub weights: Matrix<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attended<S> {
    pub output: Matrix<S>,
    pub trace: AttentionMatrix<S>,
    /// Score entries touched while applying the content mask. The mask is a
    /// single element-wise pass, so this is always `rows × cols`.
    pub mask_ops: usize,
}

/// Scaled dot-product attention for one head with a per-key content mask.
///
/// In [`MaskMode::Literal`] each raw score is multiplied by the key's mask
/// bit; in [`MaskMode::Exclusive`] masked keys are set to −∞. Causal
/// masking (key after query → −∞) is applied afterwards in both modes.
pub fn masked_attention<S: Scalar>(
    queries: &Matrix<S>,
    keys: &Matrix<S>,
    values: &Matrix<S>,
    content_mask: &[u8],
    causal: bool,
    mode: MaskMode,
) -> Result<Attended<S>, ModelError> {
    if keys.cols != queries.cols {
        return Err(ModelError::LengthMismatch { expected: queries.cols, actual: keys.cols });
    }
    if values.rows != keys.rows {
        return Err(ModelError::LengthMismatch { expected: keys.rows, actual: values.rows });
    }
    if content_mask.len() != keys.rows {
        return Err(ModelError::LengthMismatch { expected: keys.rows, actual: content_mask.len() });
    }
    if [queries, keys, values].iter().any(|m| m.data.iter().any(|x| !x.is_finite())) {
        return Err(ModelError::NonFiniteInput);
    }

    let (n_q, n_k) = (queries.rows, keys.rows);
    let scale = S::one() / S::of(queries.cols as f64).sqrt();
    let mut scores = Matrix::zeros(n_q, n_k);
    for i in 0..n_q {
        for j in 0..n_k {
            scores.data[i * n_k + j] = dot(queries.row(i), keys.row(j)) * scale;
        }
    }
    let (adjusted, mask_ops) = apply_mask(&scores, content_mask, causal, mode);
    let weights = softmax_rows(&adjusted)?;

    let mut output = Matrix::zeros(n_q, values.cols);
    for i in 0..n_q {
        let out = output.row_mut(i);
        for j in 0..n_k {
            let w = weights.get(i, j);
            if w != S::zero() {
                for (o, &v) in out.iter_mut().zip(values.row(j)) {
                    *o += w * v;
                }
            }
        }
    }
    Ok(Attended { output, trace: AttentionMatrix { scores, adjusted, weights }, mask_ops })
}

pub(crate) fn apply_mask<S: Scalar>(
    scores: &Matrix<S>,
    mask: &[u8],
    causal: bool,
    mode: MaskMode,
) -> (Matrix<S>, usize) {
    let mut adjusted = scores.clone();
    let mut ops = 0;
    for i in 0..scores.rows {
        for j in 0..scores.cols {
            let a = &mut adjusted.data[i * scores.cols + j];
            ops += 1;
            match mode {
                MaskMode::Literal => *a *= S::of(f64::from(mask[j])),
                MaskMode::Exclusive if mask[j] == 0 => *a = S::neg_infinity(),
                MaskMode::Exclusive => {}
            }
            if causal && j > i {
                *a = S::neg_infinity();
            }
        }
    }
    (adjusted, ops)
}

/// Softmax over the finite entries of each row; −∞ entries get weight 0.
pub(crate) fn softmax_rows<S: Scalar>(adjusted: &Matrix<S>) -> Result<Matrix<S>, ModelError> {
    let mut weights = Matrix::zeros(adjusted.rows, adjusted.cols);
    for i in 0..adjusted.rows {
        let row = adjusted.row(i);
        let max = row.iter().copied().filter(|x| x.is_finite()).fold(S::neg_infinity(), S::max);
        if max == S::neg_infinity() {
            return Err(ModelError::NoAttendableKey { row: i });
        }
        let out = weights.row_mut(i);
        let mut sum = S::zero();
        for (o, &a) in out.iter_mut().zip(row) {
            if a.is_finite() {
                *o = (a - max).exp();
                sum += *o;
            }
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    Ok(weights)
}
