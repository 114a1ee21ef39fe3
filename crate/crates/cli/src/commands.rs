use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::{DateTime, Utc};
use maskdistill::acquisition::{
    collect_responses, generate_prompts, load_slots, load_templates, mutate_adversarial, refine_templates,
    save_templates, Backoff, CollectOptions, GeneratedPrompt, HttpTeacher, MockTeacher, RefinementReport, Teacher,
    TemplateKind,
};
use maskdistill::analyzers::{write_score_dump, PosLexicon, TokenAnalyzer};
use maskdistill::masking::{load_masks, mask_dataset, save_masks, MaskConfig, MaskVector, Sampling};
use maskdistill::model::ModelParams;
use maskdistill::seed::{derive_seed, stream};
use maskdistill::text::{
    build_vocabulary, encode_pair, filter_responses, load_dataset, save_dataset, PromptResponsePair, TokenizedExample,
    Tokenizer, Vocabulary,
};
use maskdistill::training::{
    evaluate_perplexity, split_indices, train as run_training, train_resampling, write_metrics_csv, Checkpoint,
    MaskResampling, MaskSource, TrainError, TrainExample,
};
use serde_json::{json, Value};

use crate::settings::{existing_path, parse_weights, PipelineSettings};
use crate::{AcquireArgs, EvalArgs, FilterArgs, MaskArgs, TrainArgs};

/// Timestamp for mock runs: `SOURCE_DATE_EPOCH` if set, else the Unix epoch,
/// so reruns are byte-identical.
fn reproducible_timestamp() -> Result<DateTime<Utc>> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse::<i64>().context("SOURCE_DATE_EPOCH must be an integer")?,
        Err(_) => 0,
    };
    DateTime::from_timestamp(secs, 0).context("SOURCE_DATE_EPOCH out of range")
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new("")).join(name)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w =
        std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn acquire(settings: &PipelineSettings, args: AcquireArgs) -> Result<Value> {
    let templates_path = existing_path(args.templates, settings.templates.as_ref(), "templates")?;
    let slots_path = existing_path(args.slots, settings.slots.as_ref(), "slots")?;
    let templates = load_templates(&templates_path)?;
    let slots = load_slots(&slots_path)?;
    let base = generate_prompts(&templates, &slots, settings.seed)?;

    let mut prompts = Vec::with_capacity(base.len() * (1 + args.mutations.len()));
    for (i, p) in base.iter().enumerate() {
        prompts.push(p.clone());
        for (k, &strategy) in args.mutations.iter().enumerate() {
            let seed = derive_seed(settings.seed, &[stream::MUTATION, i as u64, k as u64]);
            prompts.push(GeneratedPrompt {
                text: mutate_adversarial(&p.text, strategy, args.style_tag.as_deref(), seed)?,
                template_id: p.template_id.clone(),
                kind: TemplateKind::Adversarial,
            });
        }
    }

    let mut options = CollectOptions {
        concurrency: args.concurrency.unwrap_or(settings.concurrency),
        retry_limit: settings.retry_limit,
        max_tokens: settings.teacher_max_tokens,
        temperature: settings.temperature,
        ..CollectOptions::default()
    };
    let teacher: Box<dyn Teacher> = if args.mock {
        options.backoff = Backoff::none();
        options.created_at = Some(reproducible_timestamp()?);
        Box::new(MockTeacher::echo())
    } else {
        let url = args
            .teacher_url
            .or_else(|| settings.teacher_url.clone())
            .context("no teacher endpoint: pass --teacher-url, set teacher_url, or use --mock")?;
        Box::new(HttpTeacher::new(url)?)
    };
    let outcome = collect_responses(&prompts, teacher.as_ref(), &options)?;
    save_dataset(&outcome.pairs, &args.out)?;
    Ok(json!({
        "command": "acquire",
        "prompts": prompts.len(),
        "collected": outcome.pairs.len(),
        "failures": outcome.failures.len(),
        "out": args.out,
    }))
}

fn read_blocklist(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading blocklist {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

pub fn filter(settings: &PipelineSettings, args: FilterArgs) -> Result<Value> {
    require_file(&args.dataset, "dataset")?;
    let blocklist = match args.blocklist.as_ref().or(settings.blocklist.as_ref()) {
        Some(p) => {
            require_file(p, "blocklist")?;
            read_blocklist(p)?
        }
        None => Vec::new(),
    };
    let mut fs_settings = settings.filter_settings(blocklist);
    fs_settings.min_tokens = args.min_tokens.unwrap_or(fs_settings.min_tokens);
    fs_settings.max_tokens = args.max_tokens.unwrap_or(fs_settings.max_tokens);
    ensure!(fs_settings.min_tokens <= fs_settings.max_tokens, "min_tokens exceeds max_tokens");

    let pairs = load_dataset(&args.dataset)?;
    let outcome = filter_responses(&pairs, &fs_settings);
    save_dataset(&outcome.kept, &args.out)?;
    let rejected_path = args.rejected.unwrap_or_else(|| args.out.with_extension("rejected.jsonl"));
    write_jsonl(&rejected_path, &outcome.rejected)?;

    let report = RefinementReport::from_filter(&outcome);
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    let mut refined = Value::Null;
    if let Some(tpath) = &args.templates {
        require_file(tpath, "templates")?;
        let templates = load_templates(tpath)?;
        let floor = args.accept_floor.unwrap_or(settings.accept_floor);
        let (kept, dropped) = refine_templates(&report, &templates, floor);
        let out = args.refined_templates.clone().unwrap_or_else(|| args.out.with_extension("templates.jsonl"));
        save_templates(&kept, &out)?;
        refined = json!({
            "kept": kept.len(),
            "dropped": dropped.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
            "out": out,
        });
    }
    Ok(json!({
        "command": "filter",
        "input": pairs.len(),
        "kept": outcome.kept.len(),
        "rejected": outcome.rejected.len(),
        "out": args.out,
        "rejected_out": rejected_path,
        "templates": refined,
    }))
}

fn encode_all(pairs: &[PromptResponsePair], vocab: &Vocabulary, max_len: usize) -> Result<Vec<TokenizedExample>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            encode_pair(p, vocab, Tokenizer::default(), max_len).with_context(|| format!("encoding pair {i}"))
        })
        .collect()
}

pub fn mask(settings: &PipelineSettings, args: MaskArgs) -> Result<Value> {
    require_file(&args.dataset, "dataset")?;
    let weights = match &args.weights {
        Some(w) => parse_weights(w, settings.weights.bias)?,
        None => settings.weights,
    };
    let config = MaskConfig {
        floor_mask_rate: args.floor.unwrap_or(settings.mask.floor_mask_rate),
        sampling: args.threshold.map(Sampling::Threshold).unwrap_or(settings.mask.sampling),
    };

    let pairs = load_dataset(&args.dataset)?;
    let corpus: Vec<&str> = pairs.iter().flat_map(|p| [p.prompt.as_str(), p.response.as_str()]).collect();
    let vocab = build_vocabulary(&corpus, settings.min_count, Tokenizer::default())?;
    let vocab_path = args.vocab.clone().unwrap_or_else(|| sibling(&args.out, "vocab.txt"));
    vocab.save(&vocab_path)?;

    let examples = encode_all(&pairs, &vocab, settings.context_len)?;
    let (masks, scored): (Vec<MaskVector>, Vec<_>) = if examples.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let analyzer = TokenAnalyzer::fit(&examples, PosLexicon::bundled())?;
        mask_dataset(&examples, &analyzer, &weights, &config, settings.seed)?
            .into_iter()
            .map(|m| (m.mask, m.scores))
            .unzip()
    };
    save_masks(&args.out, &masks)?;
    if let Some(path) = &args.dump_scores {
        write_score_dump(path, examples.iter().zip(&scored).enumerate().map(|(i, (e, s))| (i, e, s)))?;
    }

    let tokens: usize = masks.iter().map(MaskVector::len).sum();
    let unmasked: usize = masks.iter().map(MaskVector::unmasked_count).sum();
    Ok(json!({
        "command": "mask",
        "examples": masks.len(),
        "tokens": tokens,
        "unmasked": unmasked,
        "vocab_size": vocab.len(),
        "out": args.out,
        "vocab": vocab_path,
    }))
}

struct LoadedExamples {
    pairs: Vec<PromptResponsePair>,
    encoded: Vec<TokenizedExample>,
    masks: Vec<MaskVector>,
    examples: Vec<TrainExample>,
}

/// Pairs encoded and joined with their masks.
fn load_examples(dataset: &Path, masks: &Path, vocab: &Vocabulary, max_len: usize) -> Result<LoadedExamples> {
    require_file(dataset, "dataset")?;
    require_file(masks, "mask")?;
    let pairs = load_dataset(dataset)?;
    let masks_path = masks;
    let masks = load_masks(masks_path)?;
    ensure!(
        pairs.len() == masks.len(),
        "{} has {} pairs but {} has {} masks",
        dataset.display(),
        pairs.len(),
        masks_path.display(),
        masks.len()
    );
    let encoded = encode_all(&pairs, vocab, max_len)?;
    let examples = encoded
        .iter()
        .zip(&masks)
        .enumerate()
        .map(|(i, (e, m))| TrainExample::new(e, m).with_context(|| format!("mask {i} does not fit its example")))
        .collect::<Result<_>>()?;
    Ok(LoadedExamples { pairs, encoded, masks, examples })
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

pub fn train(settings: &PipelineSettings, args: TrainArgs) -> Result<Value> {
    let vocab_path = args.vocab.clone().unwrap_or_else(|| sibling(&args.masks, "vocab.txt"));
    require_file(&vocab_path, "vocabulary")?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let LoadedExamples { pairs, encoded, masks, examples } =
        load_examples(&args.dataset, &args.masks, &vocab, settings.context_len)?;
    if examples.is_empty() {
        return Err(TrainError::EmptySplit("train")).context(format!("{} has no pairs", args.dataset.display()));
    }
    settings.train.validate()?;
    let (train_idx, val_idx) = split_indices(examples.len(), settings.train.val_fraction, settings.seed)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let out = |name: &str| args.out.join(name);
    save_dataset(&pick(&pairs, &train_idx), &out("train.jsonl"))?;
    save_masks(&out("train.masks.jsonl"), &pick(&masks, &train_idx))?;
    save_dataset(&pick(&pairs, &val_idx), &out("val.jsonl"))?;
    save_masks(&out("val.masks.jsonl"), &pick(&masks, &val_idx))?;
    vocab.save(&out("vocab.txt"))?;

    let model_config = settings.model_config(vocab.len(), settings.train.mask_mode);
    let init = ModelParams::<f32>::init(model_config, derive_seed(settings.seed, &[stream::INIT]))?;
    let (train_set, val_set) = (pick(&examples, &train_idx), pick(&examples, &val_idx));
    let outcome = if args.resample_each_epoch || settings.resample_each_epoch {
        let sources: Vec<MaskSource> = train_idx
            .iter()
            .map(|&i| MaskSource {
                probabilities: masks[i].probabilities.clone(),
                protected: encoded[i].structural_positions(),
            })
            .collect();
        let resampling = MaskResampling { sources: &sources, floor_mask_rate: settings.mask.floor_mask_rate };
        train_resampling(&train_set, resampling, &val_set, &settings.train, init)?
    } else {
        run_training(&train_set, &val_set, &settings.train, init)?
    };

    let ckpt_path = out("checkpoint.bin");
    outcome.best.save(&ckpt_path)?;
    write_metrics_csv(&out("metrics.csv"), &outcome.report)?;
    fs::write(out("report.json"), serde_json::to_string_pretty(&outcome.report)? + "\n")?;

    let r = &outcome.report;
    let best = &r.epochs[r.best_epoch - 1];
    Ok(json!({
        "command": "train",
        "train_examples": train_idx.len(),
        "val_examples": val_idx.len(),
        "parameters": outcome.best.params.parameter_count(),
        "epochs": r.epochs.len(),
        "steps": r.total_steps,
        "best_epoch": r.best_epoch,
        "best_train_loss": best.train_loss,
        "best_val_loss": r.best_val_loss,
        "stopped_early": r.stopped_early,
        "checkpoint": ckpt_path,
    }))
}

pub fn eval(settings: &PipelineSettings, args: EvalArgs) -> Result<Value> {
    require_file(&args.checkpoint, "checkpoint")?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let vocab_path = args.vocab.clone().unwrap_or_else(|| sibling(&args.checkpoint, "vocab.txt"));
    require_file(&vocab_path, "vocabulary")?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let cfg = ckpt.params.config;
    ensure!(
        vocab.len() == cfg.vocab_size,
        "vocabulary has {} entries but the checkpoint expects {}",
        vocab.len(),
        cfg.vocab_size
    );
    let LoadedExamples { examples, .. } = load_examples(&args.dataset, &args.masks, &vocab, cfg.context_len)?;
    let e = evaluate_perplexity(&ckpt.params, &examples, settings.train.loss_scope)?;
    let summary = json!({
        "command": "eval",
        "examples": e.examples,
        "tokens": e.tokens,
        "loss": e.loss,
        "perplexity": e.perplexity,
        "checkpoint_epoch": ckpt.epoch,
    });
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(summary)
}
