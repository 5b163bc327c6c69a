//! `hatrack` command-line front end.
//!
//! Exit codes: 0 on success, 1 on input or validation errors, 2 when the
//! numerical solver fails. Errors are reported on stderr as one line:
//! `error code=<CODE> message=<text>`.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hatrack", version, about = "Appearance-only multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track one sequence, or every sequence under --dir.
    Track(TrackArgs),
    /// Generate a synthetic sequence (gt.txt, det.txt, feats.bin).
    Synth(SynthArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Time projection fitting on synthetic data.
    Bench(BenchArgs),
    /// Dump 2D original-space and discriminant coordinates for one frame.
    Inspect(InspectArgs),
}

/// Tracker settings: defaults, then the config file, then each --set.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Feature source aligned with the detection rows.
#[derive(Debug, Clone, Args)]
#[group(required = false, multiple = false)]
pub struct FeatureArgs {
    /// Binary feature file.
    #[arg(long)]
    pub feats: Option<PathBuf>,
    /// Text feature file, one comma-separated vector per line.
    #[arg(long = "feats-csv")]
    pub feats_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detection file.
    #[arg(long, conflicts_with = "dir")]
    pub dets: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Directory of sequences, each a subdirectory holding det.txt and
    /// feats.bin (or feats.csv).
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Track file, or output directory with --dir.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat `key = value` synth config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one synth key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Minimum IoU for a prediction to cover a ground-truth box.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub ids: usize,
    /// Queue capacity; also the number of untimed warm-up frames.
    #[arg(long, default_value_t = 60)]
    pub queue: usize,
    /// Timed frames.
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Frame to inspect; the projection is fitted from history before it.
    #[arg(long)]
    pub frame: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => commands::track(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Inspect(a) => commands::inspect(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string() + ": " + e.render().to_string().lines().next().unwrap_or(""));
            eprintln!("{}", err.report_line());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
