//! `vhg`: yearly simulations, forecaster training, parameter sweeps,
//! optimizer self-checks and ledger summaries.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "vhg",
    version,
    about = "Degradation-aware vehicle-home-grid energy management"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a year and write metrics.json and ledger.csv.
    Simulate(SimulateArgs),
    /// Train the load forecaster and save it as JSON.
    Train(TrainArgs),
    /// Run both scenarios over a grid of price ratios, capacities and load
    /// multipliers; writes sweep.csv.
    Sweep(SweepArgs),
    /// Check the optimizer against exhaustive search and finite differences;
    /// writes verify_report.json.
    Verify(VerifyArgs),
    /// Summarize a ledger into totals, daily and hour-of-day tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorArg {
    Forecast,
    Oracle,
    Persistence,
}

/// How Scenario A predicts household load.
#[derive(Debug, Args)]
struct PredictorArgs {
    /// Trained forecaster; overrides `[forecaster] model_path`.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Plan on the actual future load instead of a forecast.
    #[arg(long, conflicts_with = "predictor")]
    no_forecast: bool,
    /// Overrides `[simulation] predictor`.
    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long, value_enum, ignore_case = true, default_value = "both")]
    scenario: ScenarioArg,
    /// Sell/buy price ratio γ.
    #[arg(long, value_name = "F")]
    gamma: Option<f64>,
    /// Seed for trips and synthetic data; overrides `[simulation] rng_seed_unitless`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Battery capacity in kWh; charge capacity and range scale with it.
    #[arg(long, value_name = "F")]
    capacity_kwh: Option<f64>,
    /// Scales the simulated household load.
    #[arg(long, value_name = "F")]
    load_multiplier: Option<f64>,
    #[command(flatten)]
    predictor: PredictorArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    /// Household load files; the last one is held out for evaluation.
    /// Overrides `[simulation] load_csv_paths`.
    #[arg(long = "load-csv", value_name = "PATH")]
    load_csv: Vec<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Where to save the model; defaults to DIR/model.json.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    /// Comma-separated price ratios.
    #[arg(long, value_name = "F,..", value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    gamma: Vec<f64>,
    /// Comma-separated battery capacities.
    #[arg(long, value_name = "F,..", value_delimiter = ',', default_values_t = [41.0, 61.5, 82.0, 102.5])]
    capacity_kwh: Vec<f64>,
    /// Comma-separated load multipliers.
    #[arg(long, value_name = "F,..", value_delimiter = ',', default_values_t = [1.0, 4.0, 8.0])]
    load_multiplier: Vec<f64>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Run cells one after another on the calling thread.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    predictor: PredictorArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct VerifyArgs {
    #[arg(long, value_name = "N", default_value_t = 50)]
    oracle_cases: usize,
    #[arg(long, value_name = "N", default_value_t = 100)]
    gradient_points: usize,
    /// Allowed excess of the continuous objective over the oracle, €.
    #[arg(long, value_name = "F", default_value_t = 1e-3)]
    tolerance: f64,
    #[arg(long, value_name = "N", default_value_t = 7)]
    seed: u64,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Ledger written by `simulate`.
    #[arg(long, value_name = "PATH")]
    ledger: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

/// Exit codes: 1 for bad input, 2 for numerical-quality failures.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Numerical(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Input(e)
    }
}

/// The error chain joined with ": ", skipping causes already quoted by
/// their parent's message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(cli.config.as_deref(), a),
        Command::Train(a) => commands::train(cli.config.as_deref(), a),
        Command::Sweep(a) => commands::sweep(cli.config.as_deref(), a),
        Command::Verify(a) => commands::verify(cli.config.as_deref(), a),
        Command::Report(a) => report::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
