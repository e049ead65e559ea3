//! Command-line front end for distribution-free residual processes.
//!
//! Subcommands: `fit`, `test`, `simulate`, `power`, `assign`, `limits`.
//! Exit status is 0 on success, 1 on usage, configuration or I/O errors and
//! 2 on numerical failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{CliError, Result};

fn parse_delimiter(s: &str) -> std::result::Result<char, String> {
    match s {
        "tab" | "\\t" => Ok('\t'),
        "space" => Ok(' '),
        _ => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(format!("delimiter must be one character, `tab` or `space`, got `{s}`")),
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dfresid",
    version,
    about = "Distribution-free residual processes for regression model checks"
)]
pub struct Cli {
    /// Directory for all outputs [default: $DFRESID_OUTPUT_DIR, else ./dfresid-out]
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Upper bound on concurrent replications [default: available cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Field delimiter of input and output tables (a character, `tab` or `space`)
    #[arg(long, global = true, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: char,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a data file and write the estimate and residuals
    Fit(FitArgs),
    /// Fit, rotate, transport and compute statistics with Monte Carlo p-values
    Test(TestArgs),
    /// Simulate null distributions of the statistics
    Simulate(SimArgs),
    /// Simulate rejection rates under an alternative
    Power(SimArgs),
    /// Optimal assignment of covariate points to anchors
    Assign(AssignArgs),
    /// Tables of the Kolmogorov law and of limit covariances
    Limits(LimitsArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data file: covariate columns followed by the response
    pub data: PathBuf,
    /// Model id: simple_linear, centered_linear, polynomial:K, bilinear2d, exp_growth
    #[arg(long)]
    pub model: String,
    /// Starting point for iterative fits (comma separated)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications of the null simulation for p-values
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    /// Statistic recorded as primary in the summary: ks_abs, ks_plus or cvm
    #[arg(long, default_value = "ks_abs")]
    pub statistic: String,
    /// Anchor construction for p >= 2: halton or random
    #[arg(long, default_value = "halton")]
    pub anchors: String,
    /// Evaluation grid points per axis for p >= 2
    #[arg(long)]
    pub grid: Option<usize>,
    /// Divide rotated residuals by the residual standard deviation
    #[arg(long)]
    pub studentize: bool,
    /// Also write the evaluated processes
    #[arg(long)]
    pub dump_process: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Experiment config (TOML) or a manifest from an earlier run
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Override a config value, e.g. `--set transport.anchors=random`
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Write (x, Kolmogorov cdf, empirical cdf) tables
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Covariate file, one point per row
    pub data: PathBuf,
    #[arg(long, default_value = "halton")]
    pub anchors: String,
    /// Required for random anchors
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    /// Number of reference functions
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Dimension of the unit cube
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Covariance grid points per axis (on the diagonal for p >= 2)
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long, default_value_t = 3.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 300)]
    pub x_steps: usize,
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let output_dir = output::resolve_output_dir(cli.output_dir.as_deref());
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = commands::Context {
        output_dir: &output_dir,
        workers,
        delimiter: cli.delimiter,
    };
    match &cli.command {
        Command::Fit(a) => commands::fit_cmd(&ctx, a),
        Command::Test(a) => commands::test_cmd(&ctx, a),
        Command::Simulate(a) => commands::simulate_cmd(&ctx, a),
        Command::Power(a) => commands::power_cmd(&ctx, a),
        Command::Assign(a) => commands::assign_cmd(&ctx, a),
        Command::Limits(a) => commands::limits_cmd(&ctx, a),
    }
}
