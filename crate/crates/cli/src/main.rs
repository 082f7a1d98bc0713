//! `hestonvar`: coercivity certificates, PDE prices and oracle comparisons
//! from a JSON run configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "hestonvar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set model.rho=-0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; falls back to `outputs` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Search for (or check) a coercivity certificate and write certificate.json.
    Feasibility(RunArgs),
    /// Solve the PDE and compare with the analytic and Monte Carlo prices.
    Price(RunArgs),
    /// Refine nx, ny, nt and y_max independently and report observed orders.
    Convergence(RunArgs),
    /// Compare Monte Carlo with the analytic price.
    McCompare(RunArgs),
}

#[derive(Debug)]
pub enum Failure {
    Infeasible(String),
    Numerical(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Config(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<hestonvar::Error> for Failure {
    fn from(e: hestonvar::Error) -> Self {
        use hestonvar::Error as E;
        match e {
            E::InvalidParameter(m) => Failure::Config(m),
            E::Infeasible(r) => Failure::Infeasible(r.to_string()),
            E::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("HESTONVAR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Failure::Config(format!("HESTONVAR_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let (Command::Feasibility(args) | Command::Price(args) | Command::Convergence(args) | Command::McCompare(args)) =
        &cli.command;
    let cfg = RunConfig::load(&args.config, &args.set)?;
    let out = cfg.output_dir(args.out.as_deref())?;
    match cli.command {
        Command::Feasibility(_) => commands::feasibility(&cfg, &out),
        Command::Price(_) => commands::price(&cfg, &out),
        Command::Convergence(_) => commands::convergence(&cfg, &out),
        Command::McCompare(_) => commands::mc_compare(&cfg, &out),
    }
}

fn main() -> ExitCode {
    // clap's own usage errors exit with 2, which is reserved for infeasibility
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hestonvar: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
