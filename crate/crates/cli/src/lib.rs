//! Batch front end: configuration, command dispatch and CSV export.

mod commands;
mod config;
pub mod records;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nibm_core::ensemble::EnsembleError;
use nibm_core::equilibrium::EquilibriumError;
use nibm_core::graph::GraphError;
use nibm_core::spectral::SpectralError;
use thiserror::Error;

pub use config::{Overrides, RunConfig};
pub use records::{read_csv, write_csv};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("supports touch or overlap: {0}")]
    SupportsTouch(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("equilibrium: {0}")]
    Equilibrium(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Graph(_) => 2,
            CliError::SupportsTouch(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::MissingPrerequisite(_) => 5,
            CliError::Equilibrium(_) => 6,
            CliError::Spectral(_) => 7,
            CliError::Ensemble(EnsembleError::Graph(_)) => 2,
            CliError::Ensemble(_) => 8,
        }
    }
}

impl From<EquilibriumError<f64>> for CliError {
    fn from(e: EquilibriumError<f64>) -> Self {
        match e {
            EquilibriumError::MaxIterationsExceeded { .. } => CliError::NotConverged(e.to_string()),
            other => CliError::Equilibrium(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "nibm", version, about = "Equilibrium measures, spectral checks and finite-n ensembles of non-intersecting Brownian bridges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the transition matrix and print the tree, interaction matrix and peel order.
    Validate(Common),
    /// Solve the vector equilibrium problem.
    Solve(Common),
    /// Check the spectral-curve identities and lens geometry of a solved problem.
    Spectral(Common),
    /// Export (1/n)K(x, x) of the finite-n ensemble.
    Kernel(Common),
    /// Sample path bundles.
    Sample(Common),
    /// L¹ distance between (1/n)K(x, x) and the equilibrium density over a sequence of n.
    Compare(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides { out: self.out.clone(), tol: self.tol, grid: self.grid, seed: self.seed, n: self.n });
        Ok(cfg)
    }
}

/// Runs one command; the returned lines are the report printed on stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Validate(c) => commands::validate(&c.load()?),
        Command::Solve(c) => commands::solve(&c.load()?),
        Command::Spectral(c) => commands::spectral(&c.load()?),
        Command::Kernel(c) => commands::kernel(&c.load()?),
        Command::Sample(c) => commands::sample(&c.load()?),
        Command::Compare(c) => commands::compare(&c.load()?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_error_class() {
        let errors = [
            CliError::Config(String::new()),
            CliError::Graph(GraphError::NotConnected),
            CliError::SupportsTouch(String::new()),
            CliError::NotConverged(String::new()),
            CliError::MissingPrerequisite(String::new()),
            CliError::Equilibrium(String::new()),
            CliError::Spectral(SpectralError::InvalidSheet(9)),
            CliError::Ensemble(EnsembleError::TooLarge { n: 65, cap: 64 }),
        ];
        let codes: Vec<i32> = errors.iter().map(CliError::exit_code).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(CliError::Ensemble(EnsembleError::Graph(GraphError::Empty)).exit_code(), 2);
    }
}
