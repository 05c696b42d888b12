//! `red-seis`: synthetic sections, network training, Deep-RED de-noising
//! and compressive-sensing recovery, Monte Carlo experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "red-seis", version, about = "Regularization by denoising for seismic sections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a linear-event section (SGRD plus a JSON sidecar).
    Synth(SynthArgs),
    /// Train a residual denoising network on a corpus of sections.
    Train(TrainArgs),
    /// De-noise a section through a Gaussian transform and Deep-RED.
    Denoise(DenoiseArgs),
    /// Compress a section with a randomized DCT and recover it.
    Csrecover(CsArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Local homogeneity factor of each denoiser on a section.
    Lhtest(LhArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(8..))]
    channels: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(8..))]
    time: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    events: u64,
    /// Ricker peak frequency as a fraction of Nyquist.
    #[arg(long, default_value_t = 0.2)]
    peak_freq: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SGRD file or directory of SGRD files.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV (default: OUT with extension `loss.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Options shared by `denoise` and `csrecover`.
#[derive(Args, Debug)]
struct SolveArgs {
    /// Input section (SGRD).
    #[arg(long = "in")]
    input: PathBuf,
    /// Denoiser bank: comma-separated `null`, `blur`, `blur:R:S`, `.dncw`
    /// files or directories.
    #[arg(long)]
    bank: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Add white noise at this SNR to the measurements.
    #[arg(long)]
    snr: Option<f64>,
    /// JSON with any of `bank`, `lambda`, `seed`, `snr`, `ratio`, `delta`,
    /// `patch_size`, `solver`; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output section (SGRD); a JSON summary is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Oversampling p/q of the Gaussian transform.
    #[arg(long)]
    ratio: Option<f64>,
    /// Process the section in non-overlapping square patches of this size
    /// (lambda defaults to 0.5 in this mode).
    #[arg(long)]
    patch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct CsArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Compression rate p/q in (0, 1].
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for records.csv and aggregates.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bank: Option<String>,
}

#[derive(Args, Debug)]
struct LhArgs {
    /// `.dncw` file (or any bank description).
    #[arg(long)]
    weights: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = red_seis::signal::DEFAULT_LH_EPSILON)]
    epsilon: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(commands::Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
