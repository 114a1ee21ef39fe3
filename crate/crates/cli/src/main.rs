mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maskdistill::acquisition::{CollectError, MutationStrategy};
use maskdistill::training::TrainError;
use tracing_subscriber::EnvFilter;

use settings::PipelineSettings;

/// Distill a teacher model into a small masked-attention student.
///
/// Stages hand off through files: acquire → filter → mask → train → eval.
/// Each subcommand prints a one-line JSON summary on success.
#[derive(Debug, Parser)]
#[command(name = "maskdistill", version)]
struct Cli {
    /// Pipeline config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every seeded operation; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand prompt templates and collect teacher responses.
    Acquire(AcquireArgs),
    /// Drop unusable responses and score templates by acceptance.
    Filter(FilterArgs),
    /// Score tokens and sample attention masks.
    Mask(MaskArgs),
    /// Fine-tune the student with early stopping.
    Train(TrainArgs),
    /// Report loss and perplexity of a checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, clap::Args)]
pub struct AcquireArgs {
    /// Template file (JSON lines: id, pattern, kind).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Slot file (JSON lines: name, values).
    #[arg(long)]
    pub slots: Option<PathBuf>,
    /// Output dataset (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Use the built-in echo teacher instead of an HTTP endpoint.
    #[arg(long)]
    pub mock: bool,
    /// Teacher completion endpoint; the bearer token is read from TEACHER_API_KEY.
    #[arg(long)]
    pub teacher_url: Option<String>,
    /// Extra adversarial variants per prompt (conflict, nuance, style).
    #[arg(long, value_delimiter = ',')]
    pub mutations: Vec<MutationStrategy>,
    /// Persona tag for the style mutation.
    #[arg(long)]
    pub style_tag: Option<String>,
    /// Concurrent teacher requests.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct FilterArgs {
    /// Raw dataset from `acquire`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Filtered dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Rejected pairs with reasons [default: <out>.rejected.jsonl].
    #[arg(long)]
    pub rejected: Option<PathBuf>,
    /// Blocklist file, one term per line.
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Templates to refine using per-template acceptance.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Per-template statistics (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Surviving templates [default: <out>.templates.jsonl when --templates is set].
    #[arg(long)]
    pub refined_templates: Option<PathBuf>,
    /// Minimum acceptance ratio for a template to survive.
    #[arg(long)]
    pub accept_floor: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct MaskArgs {
    /// Filtered dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Mask file (JSON lines, one per example).
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary written alongside the masks [default: vocab.txt next to --out].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Score weights as tfidf,pos,dep,random.
    #[arg(long)]
    pub weights: Option<String>,
    /// Minimum share of non-structural tokens to mask, in [0, 0.5].
    #[arg(long)]
    pub floor: Option<f64>,
    /// Mask deterministically: unmask iff probability ≥ this threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write per-token scores (JSON lines).
    #[arg(long)]
    pub dump_scores: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Filtered dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Mask file from `mask`.
    #[arg(long)]
    pub masks: PathBuf,
    /// Vocabulary from `mask` [default: vocab.txt next to --masks].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output directory for the checkpoint, metrics and split files.
    #[arg(long)]
    pub out: PathBuf,
    /// Redraw training masks every epoch from their stored probabilities.
    #[arg(long)]
    pub resample_each_epoch: bool,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    /// Vocabulary [default: vocab.txt next to --checkpoint].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Also write the summary to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// 2 when the teacher never answered, 3 when training diverged, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(CollectError::TeacherUnreachable { .. }) = cause.downcast_ref() {
            return 2;
        }
        if let Some(TrainError::Divergence { .. }) = cause.downcast_ref() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (exit 1); exit 2 is reserved for
    // an unreachable teacher.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let default_level = if cli.verbose { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    let result = PipelineSettings::load(cli.config.as_deref(), cli.seed).and_then(|settings| match cli.command {
        Command::Acquire(a) => commands::acquire(&settings, a),
        Command::Filter(a) => commands::filter(&settings, a),
        Command::Mask(a) => commands::mask(&settings, a),
        Command::Train(a) => commands::train(&settings, a),
        Command::Eval(a) => commands::eval(&settings, a),
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
