use super::attention::masked_attention;
use super::ops::{
    acc_at_b, add_assign, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul, matmul_bt, Matrix, NormCache,
};
use super::{ModelError, ModelParams, Scalar};

/// Activations saved by [`forward_cached`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    ids: Vec<u32>,
    mask: Vec<u8>,
    layers: Vec<LayerCache<S>>,
    lnf: NormCache<S>,
    z: Vec<S>,
}

#[derive(Debug, Clone)]
struct LayerCache<S> {
    ln1: NormCache<S>,
    a: Vec<S>,
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    /// Post-softmax weights, one `T×T` matrix per head.
    probs: Vec<Matrix<S>>,
    ctx: Vec<S>,
    ln2: NormCache<S>,
    c: Vec<S>,
    u: Vec<S>,
    g: Vec<S>,
}

fn check_inputs<S: Scalar>(params: &ModelParams<S>, ids: &[u32], mask: &[u8]) -> Result<(), ModelError> {
    let cfg = &params.config;
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > cfg.context_len {
        return Err(ModelError::SequenceTooLong { len: ids.len(), max: cfg.context_len });
    }
    if mask.len() != ids.len() {
        return Err(ModelError::LengthMismatch { expected: ids.len(), actual: mask.len() });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(ModelError::OutOfVocab { id, vocab_size: cfg.vocab_size });
    }
    Ok(())
}

/// Copies head `h`'s columns of a `T×d` matrix into a `T×d_head` matrix.
fn head_slice<S: Scalar>(x: &[S], t: usize, d: usize, dh: usize, h: usize) -> Matrix<S> {
    let mut out = Matrix::zeros(t, dh);
    for i in 0..t {
        out.row_mut(i).copy_from_slice(&x[i * d + h * dh..i * d + (h + 1) * dh]);
    }
    out
}

/// Next-token logits (`T × V`).
pub fn forward<S: Scalar>(params: &ModelParams<S>, ids: &[u32], mask: &[u8]) -> Result<Matrix<S>, ModelError> {
    forward_cached(params, ids, mask).map(|(logits, _)| logits)
}

pub fn forward_cached<S: Scalar>(
    params: &ModelParams<S>,
    ids: &[u32],
    mask: &[u8],
) -> Result<(Matrix<S>, ForwardCache<S>), ModelError> {
    check_inputs(params, ids, mask)?;
    let cfg = params.config;
    let (t, d, f, nh, dh, vocab) = (ids.len(), cfg.d_model, cfg.ff_dim(), cfg.n_heads, cfg.head_dim(), cfg.vocab_size);

    let mut x = vec![S::zero(); t * d];
    for (i, &id) in ids.iter().enumerate() {
        let row = &mut x[i * d..(i + 1) * d];
        let te = &params.tok_emb.data[id as usize * d..(id as usize + 1) * d];
        let pe = &params.pos_emb.data[i * d..(i + 1) * d];
        for j in 0..d {
            row[j] = te[j] + pe[j];
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&x, &lp.ln1_gain.data, &lp.ln1_bias.data, d);
        let q = matmul(&a, &lp.wq.data, t, d, d);
        let k = matmul(&a, &lp.wk.data, t, d, d);
        let v = matmul(&a, &lp.wv.data, t, d, d);
        let mut ctx = vec![S::zero(); t * d];
        let mut probs = Vec::with_capacity(nh);
        for h in 0..nh {
            let att = masked_attention(
                &head_slice(&q, t, d, dh, h),
                &head_slice(&k, t, d, dh, h),
                &head_slice(&v, t, d, dh, h),
                mask,
                true,
                cfg.mask_mode,
            )?;
            for i in 0..t {
                ctx[i * d + h * dh..i * d + (h + 1) * dh].copy_from_slice(att.output.row(i));
            }
            probs.push(att.trace.weights);
        }
        add_assign(&mut x, &matmul(&ctx, &lp.wo.data, t, d, d));

        let (c, ln2) = layer_norm(&x, &lp.ln2_gain.data, &lp.ln2_bias.data, d);
        let mut u = matmul(&c, &lp.ff_in_w.data, t, d, f);
        for row in u.chunks_mut(f) {
            add_assign(row, &lp.ff_in_b.data);
        }
        let g: Vec<S> = u.iter().map(|&z| gelu(z)).collect();
        let mut out = matmul(&g, &lp.ff_out_w.data, t, f, d);
        for row in out.chunks_mut(d) {
            add_assign(row, &lp.ff_out_b.data);
        }
        add_assign(&mut x, &out);
        layers.push(LayerCache { ln1, a, q, k, v, probs, ctx, ln2, c, u, g });
    }

    let (z, lnf) = layer_norm(&x, &params.lnf_gain.data, &params.lnf_bias.data, d);
    let logits = match &params.head {
        Some(head) => matmul(&z, &head.data, t, d, vocab),
        None => matmul_bt(&z, &params.tok_emb.data, t, d, vocab),
    };
    let cache = ForwardCache { ids: ids.to_vec(), mask: mask.to_vec(), layers, lnf, z };
    Ok((Matrix::from_vec(t, vocab, logits), cache))
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient with respect to the logits.
pub fn backward<S: Scalar>(params: &ModelParams<S>, cache: &ForwardCache<S>, dlogits: &Matrix<S>) -> ModelParams<S> {
    let cfg = params.config;
    let (t, d, f, nh, dh, vocab) =
        (cache.ids.len(), cfg.d_model, cfg.ff_dim(), cfg.n_heads, cfg.head_dim(), cfg.vocab_size);
    assert_eq!((dlogits.rows, dlogits.cols), (t, vocab), "dlogits shape");
    let mut grads = params.zeros_like();

    let dz = match (&params.head, &mut grads.head) {
        (Some(head), Some(dhead)) => {
            acc_at_b(&mut dhead.data, &cache.z, &dlogits.data, t, d, vocab);
            matmul_bt(&dlogits.data, &head.data, t, vocab, d)
        }
        _ => {
            // logits = z·Eᵀ ⇒ dE += dlogitsᵀ·z
            acc_at_b(&mut grads.tok_emb.data, &dlogits.data, &cache.z, t, vocab, d);
            matmul(&dlogits.data, &params.tok_emb.data, t, vocab, d)
        }
    };
    let mut dx = layer_norm_backward(
        &dz,
        &cache.lnf,
        &params.lnf_gain.data,
        &mut grads.lnf_gain.data,
        &mut grads.lnf_bias.data,
        d,
    );

    let scale = S::one() / S::of(dh as f64).sqrt();
    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // feed-forward branch
        for row in dx.chunks(d) {
            add_assign(&mut lg.ff_out_b.data, row);
        }
        acc_at_b(&mut lg.ff_out_w.data, &lc.g, &dx, t, f, d);
        let mut du = matmul_bt(&dx, &lp.ff_out_w.data, t, d, f);
        for (g, &u) in du.iter_mut().zip(&lc.u) {
            *g *= gelu_grad(u);
        }
        for row in du.chunks(f) {
            add_assign(&mut lg.ff_in_b.data, row);
        }
        acc_at_b(&mut lg.ff_in_w.data, &lc.c, &du, t, d, f);
        let dc = matmul_bt(&du, &lp.ff_in_w.data, t, f, d);
        let dres =
            layer_norm_backward(&dc, &lc.ln2, &lp.ln2_gain.data, &mut lg.ln2_gain.data, &mut lg.ln2_bias.data, d);
        add_assign(&mut dx, &dres);

        // attention branch
        acc_at_b(&mut lg.wo.data, &lc.ctx, &dx, t, d, d);
        let dctx = matmul_bt(&dx, &lp.wo.data, t, d, d);
        let mut dq = vec![S::zero(); t * d];
        let mut dk = vec![S::zero(); t * d];
        let mut dv = vec![S::zero(); t * d];
        for h in 0..nh {
            let p = &lc.probs[h];
            let off = h * dh;
            let mut ds = Matrix::<S>::zeros(t, t);
            for i in 0..t {
                let dci = &dctx[i * d + off..i * d + off + dh];
                let mut dp = vec![S::zero(); t];
                let mut weighted = S::zero();
                for j in 0..=i {
                    let pij = p.get(i, j);
                    if pij == S::zero() {
                        continue;
                    }
                    let vj = &lc.v[j * d + off..j * d + off + dh];
                    dp[j] = dci.iter().zip(vj).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
                    weighted += pij * dp[j];
                    for (g, &c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                        *g += pij * c;
                    }
                }
                for j in 0..=i {
                    let pij = p.get(i, j);
                    if pij == S::zero() {
                        continue;
                    }
                    // literal mode scales the raw score by mⱼ
                    let m = S::of(f64::from(cache.mask[j]));
                    let adj = match cfg.mask_mode {
                        super::MaskMode::Literal => m,
                        super::MaskMode::Exclusive => S::one(),
                    };
                    ds.data[i * t + j] = pij * (dp[j] - weighted) * adj * scale;
                }
            }
            for i in 0..t {
                for j in 0..=i {
                    let g = ds.get(i, j);
                    if g == S::zero() {
                        continue;
                    }
                    for c in 0..dh {
                        dq[i * d + off + c] += g * lc.k[j * d + off + c];
                        dk[j * d + off + c] += g * lc.q[i * d + off + c];
                    }
                }
            }
        }
        acc_at_b(&mut lg.wq.data, &lc.a, &dq, t, d, d);
        acc_at_b(&mut lg.wk.data, &lc.a, &dk, t, d, d);
        acc_at_b(&mut lg.wv.data, &lc.a, &dv, t, d, d);
        let mut da = matmul_bt(&dq, &lp.wq.data, t, d, d);
        add_assign(&mut da, &matmul_bt(&dk, &lp.wk.data, t, d, d));
        add_assign(&mut da, &matmul_bt(&dv, &lp.wv.data, t, d, d));
        let dres =
            layer_norm_backward(&da, &lc.ln1, &lp.ln1_gain.data, &mut lg.ln1_gain.data, &mut lg.ln1_bias.data, d);
        add_assign(&mut dx, &dres);
    }

    for (i, &id) in cache.ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        add_assign(&mut grads.tok_emb.data[id as usize * d..(id as usize + 1) * d], row);
        add_assign(&mut grads.pos_emb.data[i * d..(i + 1) * d], row);
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MaskMode, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(mode: MaskMode, tied: bool) -> ModelConfig {
        ModelConfig {
            vocab_size: 11,
            context_len: 8,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            mask_mode: mode,
            tie_embeddings: tied,
        }
    }

    /// Scalar test loss Σ R⊙logits with fixed random R, so dlogits = R.
    fn probe(t: usize, v: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(t, v, (0..t * v).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn probe_loss(params: &ModelParams<f64>, ids: &[u32], mask: &[u8], r: &Matrix<f64>) -> f64 {
        let logits = forward(params, ids, mask).unwrap();
        logits.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
    }

    fn check_gradients(mode: MaskMode, tied: bool, n_layers: usize) {
        let mut cfg = tiny(mode, tied);
        cfg.n_layers = n_layers;
        let mut params = ModelParams::<f64>::init(cfg, 3).unwrap();
        // larger weights make every path matter
        for t in params.tensors_mut() {
            for (i, x) in t.data.iter_mut().enumerate() {
                *x = *x * 3.0 + if t.name.contains("gain") { 0.1 * (i as f64).sin() } else { 0.0 };
            }
        }
        let ids = [1, 5, 7, 3, 10, 5];
        let mask = [1, 0, 1, 1, 0, 1];
        let r = probe(ids.len(), 11, 9);
        let (_, cache) = forward_cached(&params, &ids, &mask).unwrap();
        let grads = backward(&params, &cache, &r);

        let eps = 1e-4;
        let n = params.tensors().len();
        for ti in 0..n {
            let mut num = Vec::new();
            for k in 0..params.tensors()[ti].len() {
                let orig = params.tensors()[ti].data[k];
                params.tensors_mut()[ti].data[k] = orig + eps;
                let up = probe_loss(&params, &ids, &mask, &r);
                params.tensors_mut()[ti].data[k] = orig - eps;
                let down = probe_loss(&params, &ids, &mask, &r);
                params.tensors_mut()[ti].data[k] = orig;
                num.push((up - down) / (2.0 * eps));
            }
            let ana = &grads.tensors()[ti].data;
            let diff = ana.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale =
                ana.iter().map(|a| a * a).sum::<f64>().sqrt().max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
            let name = &grads.tensors()[ti].name;
            assert!(scale == 0.0 || diff / scale < 1e-5, "{mode:?} tied={tied} {name}: rel {}", diff / scale);
        }
    }

    #[test]
    fn gradients_exclusive() {
        check_gradients(MaskMode::Exclusive, false, 1);
    }

    #[test]
    fn gradients_literal() {
        check_gradients(MaskMode::Literal, false, 1);
    }

    #[test]
    fn gradients_tied_two_layers() {
        check_gradients(MaskMode::Exclusive, true, 2);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let params = ModelParams::<f64>::init(tiny(MaskMode::Exclusive, false), 1).unwrap();
        let ids = [1, 2, 3];
        let (_, cache) = forward_cached(&params, &ids, &[1, 1, 1]).unwrap();
        let g = backward(&params, &cache, &Matrix::zeros(3, 11));
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn shape_and_determinism() {
        let params = ModelParams::<f32>::init(tiny(MaskMode::Exclusive, false), 1).unwrap();
        let a = forward(&params, &[1, 4, 2], &[1, 0, 1]).unwrap();
        assert_eq!((a.rows, a.cols), (3, 11));
        assert_eq!(a, forward(&params, &[1, 4, 2], &[1, 0, 1]).unwrap());
    }

    #[test]
    fn causal_in_both_modes() {
        for mode in [MaskMode::Literal, MaskMode::Exclusive] {
            let params = ModelParams::<f64>::init(tiny(mode, false), 2).unwrap();
            let a = forward(&params, &[1, 5, 6, 7, 8], &[1, 1, 0, 1, 1]).unwrap();
            let b = forward(&params, &[1, 5, 6, 9, 3], &[1, 1, 0, 0, 1]).unwrap();
            for i in 0..3 {
                assert_eq!(a.row(i), b.row(i), "{mode:?} row {i}");
            }
            assert_ne!(a.row(3), b.row(3));
        }
    }

    #[test]
    fn masked_token_embedding_is_invisible_to_earlier_positions() {
        let mut params = ModelParams::<f64>::init(tiny(MaskMode::Exclusive, false), 2).unwrap();
        let ids = [1, 5, 6, 7];
        let mask = [1, 1, 1, 0];
        let before = forward(&params, &ids, &mask).unwrap();
        for x in &mut params.tok_emb.data[7 * 8..8 * 8] {
            *x += 0.5;
        }
        let after = forward(&params, &ids, &mask).unwrap();
        for i in 0..3 {
            assert_eq!(before.row(i), after.row(i));
        }
        assert_ne!(before.row(3), after.row(3));
    }

    #[test]
    fn literal_and_exclusive_agree_on_all_ones() {
        let lit = ModelParams::<f32>::init(tiny(MaskMode::Literal, false), 2).unwrap();
        let mut exc = lit.clone();
        exc.config.mask_mode = MaskMode::Exclusive;
        let ids = [1, 2, 3, 4, 5];
        assert_eq!(forward(&lit, &ids, &[1; 5]).unwrap(), forward(&exc, &ids, &[1; 5]).unwrap());
        assert_ne!(forward(&lit, &ids, &[1, 0, 1, 0, 1]).unwrap(), forward(&exc, &ids, &[1, 0, 1, 0, 1]).unwrap());
    }

    #[test]
    fn input_errors() {
        let params = ModelParams::<f32>::init(tiny(MaskMode::Exclusive, false), 1).unwrap();
        assert_eq!(forward(&params, &[], &[]).unwrap_err(), ModelError::EmptySequence);
        assert_eq!(forward(&params, &[1, 11], &[1, 1]).unwrap_err(), ModelError::OutOfVocab { id: 11, vocab_size: 11 });
        assert_eq!(forward(&params, &[1; 9], &[1; 9]).unwrap_err(), ModelError::SequenceTooLong { len: 9, max: 8 });
        assert!(matches!(forward(&params, &[1, 2], &[1]), Err(ModelError::LengthMismatch { .. })));
    }
}
