//! `fracsheet`: simulate sheet pairs, check drift pairs and densities,
//! evaluate the bound sequences, and solve the equation on a grid.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 invalid
//! configuration, 3 numerical non-convergence, 4 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(fracsheet::Error),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Numeric(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<fracsheet::Error> for CliError {
    fn from(e: fracsheet::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use fracsheet::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Numeric(e) => match e {
                E::NonConvergence { .. } | E::Truncation { .. } | E::SeriesDivergence { .. } | E::McVariance { .. } => {
                    3
                }
                _ => 2,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fracsheet", version, about = "Equations driven by a pair of fractional Brownian sheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample sheet pairs; write paths.csv and summary.json.
    Simulate(Common),
    /// Build drift pairs and test the density; write girsanov.json.
    GirsanovCheck(Common),
    /// Bound sequences, Neumann terms and difference estimates; write bounds.json.
    Bounds(Common),
    /// Picard solves, comparison, occupation and law checks; write solve.json and solution.csv.
    Solve(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo paths
    #[arg(long)]
    paths: Option<usize>,
    /// Nodes per axis, including 0
    #[arg(long)]
    grid: Option<usize>,
    /// Extra overrides, `--set key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress the summary lines
    #[arg(long)]
    quiet: bool,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut map = match &common.config {
        Some(p) => config::read_file(p)?,
        None => Default::default(),
    };
    for s in &common.set {
        let (k, v) =
            s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{s}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(v) = common.seed {
        map.insert("seed".into(), v.to_string());
    }
    if let Some(v) = &common.out {
        map.insert("out".into(), v.display().to_string());
    }
    if let Some(v) = common.paths {
        map.insert("paths".into(), v.to_string());
    }
    if let Some(v) = common.grid {
        map.insert("grid".into(), v.to_string());
    }
    RunConfig::from_map(&map)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> Result<commands::Outcome, CliError>) = match &cli.command {
        Command::Simulate(c) => (c, commands::cmd_simulate),
        Command::GirsanovCheck(c) => (c, commands::cmd_girsanov_check),
        Command::Bounds(c) => (c, commands::cmd_bounds),
        Command::Solve(c) => (c, commands::cmd_solve),
    };
    let result = load(common).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            if !common.quiet {
                for line in &outcome.lines {
                    println!("{line}");
                }
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("fracsheet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
