//! `mcsep`: spatialize → train → separate → evaluate, one subcommand each.
//! Every run is deterministic given its inputs and `--seed`, and every
//! artifact-producing command leaves a `run.json` beside its outputs.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mcsep_core::model::Variant;
use mcsep_core::Result;

use commands::evaluate::{cmd_evaluate, EvaluateArgs};
use commands::separate::cmd_separate;
use commands::spatialize::cmd_spatialize;
use commands::train::{cmd_train, TrainArgs};
use config::{load_settings, Overrides, Settings};

#[derive(Parser)]
#[command(name = "mcsep", version, about = "Multi-channel speech separation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; a flag beats the config file, the file
/// beats the built-in default.
#[derive(Args)]
struct Common {
    /// TOML config file (documented keys: variant, m, k, l, n, b, h, p, x,
    /// r, lr, batch_size, patience, max_epochs, segment_seconds, seed,
    /// zero_mean, clamp_db, count, duration_seconds, sample_rate, t60_min,
    /// t60_max, wav_dir, pool)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model variant: single, ef or lf
    #[arg(long, value_parser = parse_variant, global = true)]
    variant: Option<Variant>,
    /// Microphone count M
    #[arg(long, global = true)]
    mics: Option<usize>,
    /// Speaker count K
    #[arg(long, global = true)]
    speakers: Option<usize>,
    /// Zero-mean signals inside SI-SNR (on, the default) or the literal
    /// un-centered form (off)
    #[arg(long, value_enum, global = true)]
    zero_mean: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: mcsep_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a spatialized two-speaker corpus with a manifest
    Spatialize {
        #[command(flatten)]
        common: Common,
        /// Output directory for WAVs + manifest.tsv
        #[arg(long)]
        out: PathBuf,
        /// Number of samples (overrides the config key)
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a separator; checkpoint + loss history are written to --out
    Train {
        #[command(flatten)]
        common: Common,
        /// Training corpus manifest.tsv
        #[arg(long)]
        corpus: PathBuf,
        /// Validation corpus manifest; defaults to a 1-in-10 holdout
        #[arg(long)]
        valid_corpus: Option<PathBuf>,
        /// Warm-start checkpoint; one extra microphone triggers
        /// channel-sequential expansion
        #[arg(long)]
        init_from: Option<PathBuf>,
        /// Checkpoint output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a checkpoint to one mixture WAV
    Separate {
        #[command(flatten)]
        common: Common,
        /// Trained checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input mixture (channel count must match the checkpoint's M)
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the K estimates
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints on a corpus; CSV reports + table to stdout
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to score (repeatable)
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Corpus manifest.tsv to evaluate on
        #[arg(long)]
        manifest: PathBuf,
        /// Report output directory
        #[arg(long)]
        report: PathBuf,
        /// Also score the ideal-binary-mask oracle
        #[arg(long)]
        ibm: bool,
        /// Print the 12-bucket angle-difference table
        #[arg(long)]
        buckets: bool,
    },
}

fn settings_for(common: &Common, count: Option<usize>) -> Result<Settings> {
    let flags = Overrides {
        variant: common.variant,
        mics: common.mics,
        speakers: common.speakers,
        seed: common.seed,
        zero_mean: common.zero_mean.map(|z| matches!(z, Switch::On)),
        count,
    };
    load_settings(common.config.as_deref(), &flags)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spatialize { common, out, count } => {
            cmd_spatialize(&settings_for(&common, count)?, &out)
        }
        Command::Train { common, corpus, valid_corpus, init_from, out } => cmd_train(
            &settings_for(&common, None)?,
            &TrainArgs {
                corpus: &corpus,
                valid_corpus: valid_corpus.as_deref(),
                init_from: init_from.as_deref(),
                out: &out,
            },
        ),
        Command::Separate { common, checkpoint, input, out } => {
            cmd_separate(&settings_for(&common, None)?, &checkpoint, &input, &out)
        }
        Command::Evaluate { common, checkpoints, manifest, report, ibm, buckets } => cmd_evaluate(
            &settings_for(&common, None)?,
            &EvaluateArgs {
                checkpoints: &checkpoints,
                manifest: &manifest,
                report_dir: &report,
                ibm,
                buckets,
            },
        ),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
