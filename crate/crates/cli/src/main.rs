use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

/// Bad input that is not a clap parse error; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Some verification check failed; exits with status 4.
#[derive(Debug)]
pub struct VerificationFailed(pub Vec<String>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

const EXIT_USAGE: u8 = 2;
const EXIT_CALIBRATION: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "targetcost", version, about = "Optimal cost under a stochastic target constraint")]
struct Cli {
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for Monte Carlo and lattice sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for g by shooting and write `<out>.csv` and `<out>.json`.
    Calibrate(CalibrateArgs),
    /// Evaluate v(T, x, c) from a calibrated curve.
    Value(ValueArgs),
    /// Random-walk dynamic programming value, or a g profile with --profile.
    Oracle(OracleArgs),
    /// Simulate the optimal control; prints the summary JSON.
    Simulate(SimulateArgs),
    /// Euler residuals of the BSDE along simulated paths.
    BsdeCheck(BsdeArgs),
    /// Exponential-cost closed form and duality witness table.
    Expcase(ExpcaseArgs),
    /// Run the invariant suites; exits with status 4 on any failure.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub p: Option<f64>,
    /// Endpoint cutoff ε; boundary values are imposed at ε and 1 - ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub boundary_tol: Option<f64>,
    /// Output stem; `.csv` and `.json` are appended.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CurveArg {
    /// Curve written by `calibrate` (stem, `.csv` or `.json`); calibrated on
    /// the fly when omitted.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValueArgs {
    #[command(flatten)]
    pub curve: CurveArg,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieArg {
    Conservative,
    Strict,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Number of walk steps.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Treatment of a terminal walk value exactly at the threshold.
    #[arg(long, value_enum)]
    pub tie: Option<TieArg>,
    /// `a:b:k`: k evenly spaced levels from a to b; prints `y,g_dp` CSV.
    #[arg(long)]
    pub profile: Option<String>,
    /// Write the profile CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub curve: CurveArg,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Master seed (falls back to TARGETCOST_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for per-path CSV files `path_<i>.csv`.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// How many paths to dump (default 1).
    #[arg(long)]
    pub dump_paths: Option<usize>,
    /// Also write the summary JSON here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Leave the cost of the final completion step out of the estimate.
    #[arg(long)]
    pub exclude_terminal_cost: bool,
}

#[derive(Args, Debug)]
pub struct BsdeArgs {
    #[command(flatten)]
    pub curve: CurveArg,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Comma-separated step counts.
    #[arg(long)]
    pub n_steps: Option<String>,
    /// Residuals are collected on [0, T - delta].
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated cutoffs for the terminal classification study.
    #[arg(long)]
    pub terminal_deltas: Option<String>,
}

#[derive(Args, Debug)]
pub struct ExpcaseArgs {
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long = "lambda")]
    pub lam: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Comma-separated witness indices.
    #[arg(long)]
    pub n_list: Option<String>,
    /// Write the witness CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BudgetArg {
    Quick,
    Full,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum)]
    pub budget: Option<BudgetArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Test hook: scale g by (1 + eta) before the simulation suites.
    #[arg(long, hide = true, allow_negative_numbers = true)]
    pub perturb_g: Option<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use targetcost::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return EXIT_VERIFICATION;
    }
    match err.downcast_ref::<E>() {
        Some(E::Calibration(_) | E::Divergence { .. } | E::Range { .. } | E::StepBudget { .. } | E::Resource(_)) => {
            EXIT_CALIBRATION
        }
        Some(_) => EXIT_USAGE,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::run(cli.config.as_deref(), cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
