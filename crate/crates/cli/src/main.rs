mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scsm_core::inference::DEFAULT_DRAWS;
use scsm_core::InstrumentModelKind;

/// Instrumental-variables estimation for structural cumulative survival models.
#[derive(Debug, Parser)]
#[command(name = "scsm", version)]
struct Cli {
    /// Worker threads for resampling and simulation (output does not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the cumulative exposure effect with pointwise confidence limits.
    Fit(FitArgs),
    /// Run a supremum test.
    Test(TestArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CauseModeArg {
    Single,
    Competing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InstrumentModelArg {
    /// Center the instrument at its sample mean.
    Mean,
    Linear,
    Logistic,
}

impl From<InstrumentModelArg> for InstrumentModelKind {
    fn from(a: InstrumentModelArg) -> Self {
        match a {
            InstrumentModelArg::Mean => InstrumentModelKind::InterceptOnly,
            InstrumentModelArg::Linear => InstrumentModelKind::Linear,
            InstrumentModelArg::Logistic => InstrumentModelKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    CausalNull,
    Constant,
    Piecewise,
    CompetingRisk,
}

/// Options shared by `fit` and `test`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with header time,status,exposure,instrument[,covariates...].
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = CauseModeArg::Single)]
    pub cause_mode: CauseModeArg,
    /// Model for E(G | L) used to center the instrument.
    #[arg(long, value_enum, default_value_t = InstrumentModelArg::Mean)]
    pub instrument_model: InstrumentModelArg,
    /// Covariates entering the instrument model.
    #[arg(long, value_delimiter = ',')]
    pub instrument_covariates: Vec<String>,
    /// Upper integration limit for effect summaries [default: last event time].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Where to write the result [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also report the time-constant effect over [0, tau].
    #[arg(long)]
    pub constant_effect: bool,
    /// Also report a two-level effect with this changepoint.
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub test: TestArg,
    /// Multiplier draws.
    #[arg(long, visible_alias = "M", default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, env = "SCSM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Changepoint of the piecewise test.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Upper end of the supremum for the piecewise test [default: tau].
    #[arg(long)]
    pub sup_window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON study configuration.
    #[arg(long, conflicts_with_all = ["design", "n", "rho", "reps", "m_test"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["continuous", "continuous-timevarying", "binary", "misspec-binary"])]
    pub design: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub m_test: Option<usize>,
    /// Overrides the seed of the configuration.
    #[arg(long, env = "SCSM_SEED")]
    pub seed: Option<u64>,
    /// JSON report destination [default: stdout, with the table on stderr].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // fails only if a pool already exists, in which case that one is used
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Test(a) => commands::test(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
