//! `relm`: reproducible pipelines for semi-supervised report classification.
//!
//! Subcommands cover the full workflow: synthetic corpus generation,
//! bidirectional-LSTM language-model pretraining, document encoding,
//! classifier fine-tuning with a freeze/unfreeze schedule, feature-based
//! baseline sweeps, and low-dimensional projections for inspection. Every
//! command is a pure function of its input files, configuration and seed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd;
mod config;
mod error;
mod io;

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "relm", version, about = "Semi-supervised report classification pipelines")]
struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed (mandatory here or in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving generated artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates a synthetic labeled corpus.
    Synth,
    /// Pretrains the bidirectional LSTM language model on a corpus.
    TrainLm {
        /// JSON-lines corpus to train on.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Encodes reports into fixed-dimension vectors with a trained model.
    Encode {
        /// Language-model container produced by train-lm.
        #[arg(long)]
        model: PathBuf,
        /// Vocabulary JSON matching the model.
        #[arg(long)]
        vocab: PathBuf,
        /// JSON-lines corpus to encode.
        #[arg(long)]
        corpus: PathBuf,
        /// Output encodings file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tunes a classifier head on top of a pretrained encoder.
    TrainClf {
        /// Language-model container produced by train-lm.
        #[arg(long)]
        encoder: PathBuf,
        /// Vocabulary JSON matching the encoder.
        #[arg(long)]
        vocab: PathBuf,
        /// Labeled training reports (JSON lines).
        #[arg(long)]
        train: PathBuf,
        /// Labeled validation reports for checkpoint selection.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Labeled held-out reports for the final evaluation.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Trains and evaluates feature-based baselines, writing a sweep table.
    Baseline {
        /// Labeled training reports (JSON lines).
        #[arg(long)]
        train: PathBuf,
        /// Labeled evaluation reports (JSON lines).
        #[arg(long)]
        test: PathBuf,
        /// Training-set encodings when `baseline.feature = "embeddings"`.
        #[arg(long)]
        train_embeddings: Option<PathBuf>,
        /// Evaluation-set encodings when `baseline.feature = "embeddings"`.
        #[arg(long)]
        test_embeddings: Option<PathBuf>,
    },
    /// Projects vectors to 2 or 3 coordinates via truncated SVD.
    Project {
        /// Input file: encodings JSON lines, or a corpus when --tfidf is set.
        #[arg(long)]
        source: PathBuf,
        /// Treat the source as a report corpus and build tfidf features.
        #[arg(long)]
        tfidf: bool,
        /// Labeled reports used to join a label column onto the output.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output coordinates CSV.
        #[arg(long)]
        out: PathBuf,
        /// Number of coordinates (2 or 3); overrides `project.k`.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn run(cli: Cli) -> error::Result<()> {
    let cfg = PipelineConfig::resolve(cli.config.as_deref(), cli.seed, cli.output_dir)?;
    match cli.command {
        Command::Synth => cmd::synth::run(&cfg),
        Command::TrainLm { corpus } => cmd::train_lm::run(&cfg, &corpus),
        Command::Encode { model, vocab, corpus, out } => {
            cmd::encode::run(&cfg, &model, &vocab, &corpus, &out)
        }
        Command::TrainClf { encoder, vocab, train, valid, test } => cmd::train_clf::run(
            &cfg,
            &encoder,
            &vocab,
            &train,
            valid.as_deref(),
            test.as_deref(),
        ),
        Command::Baseline { train, test, train_embeddings, test_embeddings } => cmd::baseline::run(
            &cfg,
            &train,
            &test,
            train_embeddings.as_deref(),
            test_embeddings.as_deref(),
        ),
        Command::Project { source, tfidf, labels, out, k } => {
            cmd::project::run(&cfg, &source, tfidf, labels.as_deref(), &out, k)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
