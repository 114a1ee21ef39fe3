use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError, Scalar};

const INIT_STD: f64 = 0.02;

/// A named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: vec![S::zero(); shape.iter().product()] }
    }

    fn filled(name: impl Into<String>, shape: &[usize], value: S) -> Self {
        let mut t = Self::zeros(name, shape);
        t.data.fill(value);
        t
    }

    fn normal(name: impl Into<String>, shape: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, INIT_STD).expect("valid init distribution");
        let mut t = Self::zeros(name, shape);
        for x in &mut t.data {
            *x = S::of(dist.sample(rng));
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Weight decay applies to projection matrices only: vectors (norm
    /// gains, biases) and embedding tables are exempt.
    pub fn decays(&self) -> bool {
        self.shape.len() == 2 && !self.name.ends_with("_emb")
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| T::of(x.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub ln1_gain: Tensor<S>,
    pub ln1_bias: Tensor<S>,
    /// Projections are stored input-major (`d_in × d_out`).
    pub wq: Tensor<S>,
    pub wk: Tensor<S>,
    pub wv: Tensor<S>,
    pub wo: Tensor<S>,
    pub ln2_gain: Tensor<S>,
    pub ln2_bias: Tensor<S>,
    pub ff_in_w: Tensor<S>,
    pub ff_in_b: Tensor<S>,
    pub ff_out_w: Tensor<S>,
    pub ff_out_b: Tensor<S>,
}

impl<S: Scalar> LayerParams<S> {
    fn tensors(&self) -> [&Tensor<S>; 12] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.ff_in_w,
            &self.ff_in_b,
            &self.ff_out_w,
            &self.ff_out_b,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<S>; 12] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.ff_in_w,
            &mut self.ff_in_b,
            &mut self.ff_out_w,
            &mut self.ff_out_b,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub tok_emb: Tensor<S>,
    pub pos_emb: Tensor<S>,
    pub layers: Vec<LayerParams<S>>,
    pub lnf_gain: Tensor<S>,
    pub lnf_bias: Tensor<S>,
    /// `d × V` output projection; `None` when tied to `tok_emb`.
    pub head: Option<Tensor<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// Matrices and embeddings ~ N(0, 0.02²); gains 1; biases 0.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, l, d, f) = (config.vocab_size, config.context_len, config.d_model, config.ff_dim());
        let tok_emb = Tensor::normal("tok_emb", &[v, d], &mut rng);
        let pos_emb = Tensor::normal("pos_emb", &[l, d], &mut rng);
        let layers = (0..config.n_layers)
            .map(|i| {
                let name = |s: &str| format!("layers.{i}.{s}");
                LayerParams {
                    ln1_gain: Tensor::filled(name("ln1_gain"), &[d], S::one()),
                    ln1_bias: Tensor::zeros(name("ln1_bias"), &[d]),
                    wq: Tensor::normal(name("wq"), &[d, d], &mut rng),
                    wk: Tensor::normal(name("wk"), &[d, d], &mut rng),
                    wv: Tensor::normal(name("wv"), &[d, d], &mut rng),
                    wo: Tensor::normal(name("wo"), &[d, d], &mut rng),
                    ln2_gain: Tensor::filled(name("ln2_gain"), &[d], S::one()),
                    ln2_bias: Tensor::zeros(name("ln2_bias"), &[d]),
                    ff_in_w: Tensor::normal(name("ff_in_w"), &[d, f], &mut rng),
                    ff_in_b: Tensor::zeros(name("ff_in_b"), &[f]),
                    ff_out_w: Tensor::normal(name("ff_out_w"), &[f, d], &mut rng),
                    ff_out_b: Tensor::zeros(name("ff_out_b"), &[d]),
                }
            })
            .collect();
        let head = (!config.tie_embeddings).then(|| Tensor::normal("head", &[d, v], &mut rng));
        Ok(Self {
            config,
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: Tensor::filled("lnf_gain", &[d], S::one()),
            lnf_bias: Tensor::zeros("lnf_bias", &[d]),
            head,
        })
    }

    /// Every tensor in a fixed order: embeddings, layers in order, final
    /// norm, head.
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.extend([&self.lnf_gain, &self.lnf_bias]);
        out.extend(self.head.as_ref());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias]);
        out.extend(self.head.as_mut());
        out
    }

    /// Same structure, all values zero. Used for gradients and moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(S::zero());
        }
        z
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        let mut out = ModelParams::<T> {
            config: self.config,
            tok_emb: self.tok_emb.cast(),
            pos_emb: self.pos_emb.cast(),
            layers: Vec::new(),
            lnf_gain: self.lnf_gain.cast(),
            lnf_bias: self.lnf_bias.cast(),
            head: self.head.as_ref().map(Tensor::cast),
        };
        for l in &self.layers {
            out.layers.push(LayerParams {
                ln1_gain: l.ln1_gain.cast(),
                ln1_bias: l.ln1_bias.cast(),
                wq: l.wq.cast(),
                wk: l.wk.cast(),
                wv: l.wv.cast(),
                wo: l.wo.cast(),
                ln2_gain: l.ln2_gain.cast(),
                ln2_bias: l.ln2_bias.cast(),
                ff_in_w: l.ff_in_w.cast(),
                ff_in_b: l.ff_in_b.cast(),
                ff_out_w: l.ff_out_w.cast(),
                ff_out_b: l.ff_out_b.cast(),
            });
        }
        out
    }

    /// Checks that tensor shapes match the config.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        let reference = ModelParams::<S>::init(self.config, 0)?;
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(ModelError::LengthMismatch { expected: theirs.len(), actual: ours.len() });
        }
        for (a, b) in ours.iter().zip(&theirs) {
            if a.shape != b.shape || a.name != b.name || a.data.len() != b.data.len() {
                return Err(ModelError::InvalidConfig(format!(
                    "tensor {} has shape {:?}, expected {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_order() {
        let mut cfg = ModelConfig::new(11);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.n_layers = 1;
        cfg.context_len = 16;
        let p = ModelParams::<f64>::init(cfg, 1).unwrap();
        let names: Vec<_> = p.tensors().iter().map(|t| t.name.clone()).collect();
        assert_eq!(names[0], "tok_emb");
        assert_eq!(names[2], "layers.0.ln1_gain");
        assert_eq!(names.last().unwrap(), "head");
        assert_eq!(names.len(), 2 + 12 + 3);
        assert_eq!(p.parameter_count(), 11 * 8 + 16 * 8 + (4 * 8 + 4 * 64 + 8 * 32 + 32 + 32 * 8 + 8) + 16 + 8 * 11);
        assert!(p.check_shapes().is_ok());
        assert!(p.is_finite());

        cfg.tie_embeddings = true;
        assert!(ModelParams::<f32>::init(cfg, 1).unwrap().head.is_none());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::new(20);
        let a = ModelParams::<f32>::init(cfg, 4).unwrap();
        assert_eq!(a, ModelParams::<f32>::init(cfg, 4).unwrap());
        assert_ne!(a, ModelParams::<f32>::init(cfg, 5).unwrap());
        assert_eq!(a.cast::<f64>().cast::<f32>(), a);
    }

    #[test]
    fn decay_membership() {
        let p = ModelParams::<f32>::init(ModelConfig::new(20), 0).unwrap();
        let decaying: Vec<_> = p.tensors().iter().filter(|t| t.decays()).map(|t| t.name.clone()).collect();
        assert!(decaying.contains(&"layers.0.wq".to_string()));
        assert!(decaying.contains(&"head".to_string()));
        assert!(!decaying.iter().any(|n| n.contains("emb") || n.contains("gain") || n.ends_with("_b")));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig::new(10);
        cfg.n_heads = 3;
        assert!(ModelParams::<f32>::init(cfg, 0).is_err());
        let mut cfg = ModelConfig::new(10);
        cfg.context_len = 3;
        assert!(cfg.validate().is_err());
    }
}
