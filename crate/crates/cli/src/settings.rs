use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maskdistill::config::{apply_entries, parse_value, read_entries, KeyValue};
use maskdistill::masking::{MaskConfig, MaskWeights, Sampling};
use maskdistill::model::{MaskMode, ModelConfig};
use maskdistill::text::FilterSettings;
use maskdistill::training::TrainConfig;

/// Everything a pipeline config file can set. Relative paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub seed: u64,
    pub teacher_url: Option<String>,
    pub templates: Option<PathBuf>,
    pub slots: Option<PathBuf>,
    pub concurrency: usize,
    pub retry_limit: u32,
    pub teacher_max_tokens: u32,
    pub temperature: f64,
    pub blocklist: Option<PathBuf>,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub accept_floor: f64,
    pub weights: MaskWeights,
    pub mask: MaskConfig,
    pub min_count: usize,
    pub context_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub tie_embeddings: bool,
    /// Redraw training masks every epoch instead of reusing the mask file.
    pub resample_each_epoch: bool,
    pub train: TrainConfig,
    base_dir: PathBuf,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        let model = ModelConfig::new(1);
        let filter = FilterSettings::default();
        Self {
            seed: 0,
            teacher_url: None,
            templates: None,
            slots: None,
            concurrency: 4,
            retry_limit: 2,
            teacher_max_tokens: 256,
            temperature: 0.8,
            blocklist: None,
            min_tokens: filter.min_tokens,
            max_tokens: filter.max_tokens,
            accept_floor: 0.5,
            weights: MaskWeights::default(),
            mask: MaskConfig::default(),
            min_count: 1,
            context_len: model.context_len,
            d_model: model.d_model,
            n_heads: model.n_heads,
            n_layers: model.n_layers,
            tie_embeddings: model.tie_embeddings,
            resample_each_epoch: false,
            train: TrainConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl KeyValue for PipelineSettings {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        let path = |v: &str| Some(self.base_dir.join(v));
        match key {
            "seed" => self.seed = parse_value(value)?,
            "teacher_url" => self.teacher_url = Some(value.to_string()),
            "templates" => self.templates = path(value),
            "slots" => self.slots = path(value),
            "concurrency" => self.concurrency = parse_value(value)?,
            "retry_limit" => self.retry_limit = parse_value(value)?,
            "teacher_max_tokens" => self.teacher_max_tokens = parse_value(value)?,
            "temperature" => self.temperature = parse_value(value)?,
            "blocklist" => self.blocklist = path(value),
            "min_tokens" => self.min_tokens = parse_value(value)?,
            "max_tokens" => self.max_tokens = parse_value(value)?,
            "accept_floor" => self.accept_floor = parse_value(value)?,
            "w_tfidf" => self.weights.w_tfidf = parse_value(value)?,
            "w_pos" => self.weights.w_pos = parse_value(value)?,
            "w_dep" => self.weights.w_dep = parse_value(value)?,
            "w_random" => self.weights.w_random = parse_value(value)?,
            "mask_bias" => self.weights.bias = parse_value(value)?,
            "floor_mask_rate" => self.mask.floor_mask_rate = parse_value(value)?,
            "sampling" => self.mask.sampling = parse_sampling(value)?,
            "min_count" => self.min_count = parse_value(value)?,
            "context_len" => self.context_len = parse_value(value)?,
            "d_model" => self.d_model = parse_value(value)?,
            "n_heads" => self.n_heads = parse_value(value)?,
            "n_layers" => self.n_layers = parse_value(value)?,
            "tie_embeddings" => self.tie_embeddings = parse_value(value)?,
            "resample_each_epoch" => self.resample_each_epoch = parse_value(value)?,
            _ => return self.train.set(key, value),
        }
        Ok(true)
    }
}

/// `bernoulli` or `threshold:<p>`.
pub fn parse_sampling(value: &str) -> Result<Sampling, String> {
    match value.split_once(':') {
        None if value == "bernoulli" => Ok(Sampling::Bernoulli),
        Some(("threshold", t)) => Ok(Sampling::Threshold(parse_value(t)?)),
        _ => Err(format!("{value:?}: expected bernoulli or threshold:<p>")),
    }
}

/// `a,b,g,d` → the four score weights.
pub fn parse_weights(value: &str, bias: f64) -> Result<MaskWeights> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("invalid weight {p:?}")))
        .collect::<Result<_>>()?;
    let [w_tfidf, w_pos, w_dep, w_random] = parts[..] else {
        bail!("--weights expects four comma-separated numbers, got {value:?}");
    };
    let w = MaskWeights { w_tfidf, w_pos, w_dep, w_random, bias };
    w.validate()?;
    Ok(w)
}

impl PipelineSettings {
    pub fn load(config: Option<&Path>, seed_override: Option<u64>) -> Result<Self> {
        let mut s = Self::default();
        if let Some(path) = config {
            if !path.is_file() {
                bail!("config file {} does not exist", path.display());
            }
            s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let entries = read_entries(path)?;
            apply_entries(&entries, &path.display().to_string(), &mut [&mut s])?;
        }
        if let Some(seed) = seed_override {
            s.seed = seed;
        }
        s.train.seed = s.seed;
        Ok(s)
    }

    pub fn filter_settings(&self, blocklist: Vec<String>) -> FilterSettings {
        FilterSettings { blocklist, min_tokens: self.min_tokens, max_tokens: self.max_tokens }
    }

    pub fn model_config(&self, vocab_size: usize, mask_mode: MaskMode) -> ModelConfig {
        ModelConfig {
            vocab_size,
            context_len: self.context_len,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            mask_mode,
            tie_embeddings: self.tie_embeddings,
        }
    }
}

/// Picks the command-line value, then the config value, and requires that
/// the file exists.
pub fn existing_path(flag: Option<PathBuf>, config: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    let path = flag.or_else(|| config.cloned()).with_context(|| format!("no {what} file given"))?;
    if !path.is_file() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(path)
}
