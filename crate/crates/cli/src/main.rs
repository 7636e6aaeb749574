//! Batch front end tying ingestion, training, captioning, and
//! evaluation into reproducible experiment runs. One command per
//! process; `--threads 1` forces fully serial, bitwise-reproducible
//! execution; log verbosity comes from the TIPMF_LOG env var.

mod bundle;
mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tipmf_core::error::Result;

use crate::commands::caption::CaptionArgs;
use crate::commands::evaluate::EvaluateArgs;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "tipmf", version, about = "Hybrid recommender experiment runner")]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override (repeats use seed, seed+1, ...)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 forces serial execution
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for bundles, checkpoints, and reports
    #[arg(long, global = true, default_value = "tipmf-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest ratings/documents into a reproducible dataset bundle
    Ingest,
    /// Train the plain factorization model over `repeats` seeds
    TrainPmf,
    /// Train the document-coupled factorization model
    TrainTipmf,
    /// Train the caption decoder on image features and reference texts
    TrainNic,
    /// Generate one caption per item from its frame features
    Caption {
        /// Trained caption-decoder checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Frame manifest (item_id TAB image_id); defaults to the config
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Item universe, one id per line (e.g. the bundle's items.tsv)
        #[arg(long)]
        items: Option<PathBuf>,
    },
    /// Score a rating checkpoint on a split and/or captions with BLEU
    Evaluate {
        /// Rating-model checkpoint to score
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Bundle split to evaluate on
        #[arg(long, default_value = "test")]
        split: String,
        /// Clamp predictions to the configured rating scale
        #[arg(long)]
        clamp: bool,
        /// Generated captions TSV (item_id TAB text)
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Reference captions TSV (item_id TAB text)
        #[arg(long)]
        references: Option<PathBuf>,
        /// Also print smoothed per-sentence BLEU lines (debug aid)
        #[arg(long)]
        sentence_bleu: bool,
    },
    /// Predict ratings for explicit `user TAB item` pairs
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| {
        tipmf_core::Error::Config("this command requires --config".into())
    })?;
    RunConfig::load(path)
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| tipmf_core::Error::Config(format!("thread pool: {}", e)))?;
    }
    let config = load_config(cli)?;
    match &cli.command {
        Command::Ingest => commands::ingest::run(&config, &cli.out),
        Command::TrainPmf => commands::train::run_pmf(&config, &cli.out, cli.seed),
        Command::TrainTipmf => commands::train::run_tipmf(&config, &cli.out, cli.seed),
        Command::TrainNic => commands::train::run_nic(&config, &cli.out, cli.seed),
        Command::Caption {
            checkpoint,
            manifest,
            items,
        } => commands::caption::run(
            &config,
            &cli.out,
            &CaptionArgs {
                checkpoint: checkpoint.clone(),
                manifest: manifest.clone(),
                items: items.clone(),
            },
        ),
        Command::Evaluate {
            checkpoint,
            split,
            clamp,
            candidates,
            references,
            sentence_bleu,
        } => commands::evaluate::run(
            &config,
            &cli.out,
            &EvaluateArgs {
                checkpoint: checkpoint.clone(),
                split: split.clone(),
                clamp: *clamp,
                candidates: candidates.clone(),
                references: references.clone(),
                sentence_bleu: *sentence_bleu,
            },
        ),
        Command::Predict { checkpoint, pairs } => {
            commands::predict::run(&config, &cli.out, checkpoint, pairs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("TIPMF_LOG", "info"),
    )
    .format_timestamp(None)
    .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
