//! `ppn`: generate corpora, split, train, evaluate, decode, benchmark,
//! gradient-check and ablate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Preset;

#[derive(Debug, Parser)]
#[command(name = "ppn", version, about = "Parallel pointer network for key information extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its category schemas.
    Gen(GenArgs),
    /// Split a corpus into train and test document ids.
    Split(SplitArgs),
    /// Train a model on the training side of a split.
    Train(TrainArgs),
    /// Score a checkpoint on the test side of a split (or all documents).
    Eval(EvalArgs),
    /// Print the prediction for one document as JSON.
    Decode(DecodeArgs),
    /// Time parallel against one-question-at-a-time inference.
    Bench(BenchArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate the full model and its ablations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings that the config file and flags refine.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for corpus.jsonl and schemas.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long)]
    docs_per_category: Option<usize>,
    #[arg(long)]
    layouts_per_category: Option<usize>,
    #[arg(long)]
    min_types: Option<usize>,
    #[arg(long)]
    max_types: Option<usize>,
    #[arg(long)]
    no_key_ratio: Option<f64>,
    #[arg(long)]
    multi_span_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Schema file; defaults to schemas.json next to the corpus.
    #[arg(long)]
    schemas: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: PathBuf,
    /// zero_shot, few_shot or full.
    #[arg(long)]
    mode: Option<String>,
    /// Documents per test category moved to training (few_shot: 1, 5 or 10).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for split.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelFlags {
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_head_score: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Turn off the rotary position transform in the scorer.
    #[arg(long)]
    no_sinusoidal: bool,
    /// Train only the five value channels.
    #[arg(long)]
    no_key_channels: bool,
    #[arg(long)]
    no_qci: bool,
    #[arg(long)]
    no_qhi: bool,
    #[arg(long)]
    no_qti: bool,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    warmup_ratio: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    dev_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    split: PathBuf,
    /// Output directory for best.ckpt, vocab.json and train_log.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary file; defaults to vocab.json next to the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    checkpoint: CheckpointArgs,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Evaluate the test side of this split; all documents without it.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Name recorded in the report; defaults to the split mode.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Output directory for metrics.json and predictions.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    checkpoint: CheckpointArgs,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    doc_id: String,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Questions asked per document.
    #[arg(long, default_value_t = 16)]
    questions: usize,
    /// Documents to time.
    #[arg(long, default_value_t = 100)]
    docs: usize,
    /// Trained checkpoint; a seeded untrained model is used without it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Corpus to draw documents from; one is generated without it.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    schemas: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optional directory for the predictions of both modes.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    d_model: usize,
    #[arg(long, default_value_t = 16)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    n_layers: usize,
    #[arg(long, default_value_t = 2)]
    n_heads: usize,
    #[arg(long, default_value_t = 4)]
    d_head_score: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Sampled coordinates per tensor.
    #[arg(long, default_value_t = 20)]
    per_tensor: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_key_channels: bool,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    split: PathBuf,
    /// Comma-separated subset of sin,key,qci,qhi,qti.
    #[arg(long, value_delimiter = ',', default_value = "sin,key,qci,qhi,qti")]
    ablations: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Decode(a) => commands::decode(a),
        Command::Bench(a) => commands::bench(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
