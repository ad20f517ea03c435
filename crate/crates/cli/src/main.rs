use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ewpf_core::data::Profile;
use ewpf_core::ModelKind;

mod commands;

/// Wind power forecasting with an encoder-decoder transformer and LSTM/GRU
/// baselines.
#[derive(Debug, Parser)]
#[command(name = "ewpf", version)]
struct Cli {
    /// Log progress (repeat for debug output). RUST_LOG overrides this.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic hourly series as `timestamp,power` CSV.
    Generate(GenerateArgs),
    /// Train one model and write its checkpoint and loss history.
    Train(TrainArgs),
    /// Score a checkpoint on the test split of a series.
    Evaluate(EvaluateArgs),
    /// Run a model × sequence × horizon grid and write the report tables.
    Benchmark(BenchmarkArgs),
    /// Forecast the next steps from a single input window.
    Forecast(ForecastArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    points: usize,
    #[arg(long, default_value = "diurnal-noise", value_parser = parse_profile)]
    profile: Profile,
    /// Defaults to $EWPF_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Size {
    /// Published model sizes.
    Full,
    /// Small models that train in seconds.
    Toy,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = 20)]
    seq: usize,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// `timestamp,power` CSV; a synthetic diurnal series when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat `key = value` file with model and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "train_out")]
    out: PathBuf,
    /// Adam with β1 = 0, β2 = 0.5.
    #[arg(long)]
    paper_betas: bool,
    #[arg(long, value_enum, default_value_t = Size::Full)]
    size: Size,
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides $EWPF_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Fraction of the series before the test split.
    #[arg(long, default_value_t = ewpf_core::data::DEFAULT_TRAIN_FRAC)]
    train_frac: f64,
    /// Also report every forecast step, not just the last.
    #[arg(long)]
    steps: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Flat `key = value` benchmark spec; full-size defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Cells trained concurrently; overrides the spec.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides the spec.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// The last L observations, either as `timestamp,power` CSV or one value
    /// per line.
    #[arg(long)]
    window_csv: PathBuf,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: ewpf_core::Error| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: ewpf_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Forecast(a) => commands::forecast(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
