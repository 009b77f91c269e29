//! Command-line front end: configuration, subcommands and artifacts.

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{BValue, Profiles, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "indefinite", version, about = "Positive solutions of a superlinear indefinite BVP via phase-plane time maps")]
pub struct Cli {
    /// TOML run configuration; defaults to the reference configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long, global = true, value_name = "DIR", env = "INDEFINITE_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Central weight: a number, `bstar` or `<factor>*bstar`.
    #[arg(long, global = true, value_name = "VALUE")]
    pub b: Option<BValue>,
    /// Asymmetry factor of the right outer weight.
    #[arg(long, global = true, value_name = "VALUE")]
    pub nu: Option<f64>,
    /// Solution profiles in `solutions.json`.
    #[arg(long, global = true, value_enum)]
    pub profiles: Option<Profiles>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Boundary curves Γ₀ and Γ₁ (gamma0.csv, gamma1.csv).
    Gamma,
    /// Equilibria, homoclinic and sample orbits at b (phase.csv).
    Phase,
    /// Transit-time maps over the closed-orbit domain at b (timemap.csv).
    Timemap,
    /// All positive solutions at b (solutions.json).
    Solve,
    /// Bifurcation points of the symmetric problem (report.json).
    Bifpoint,
    /// Bifurcation diagram over grids.b_range (diagram.csv, report.json).
    Diagram,
    /// Acceptance suite as a pass/fail table (verify.json).
    Verify,
    /// Print the resolved configuration as TOML.
    Config,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gamma => "gamma",
            Command::Phase => "phase",
            Command::Timemap => "timemap",
            Command::Solve => "solve",
            Command::Bifpoint => "bifpoint",
            Command::Diagram => "diagram",
            Command::Verify => "verify",
            Command::Config => "config",
        }
    }
}

impl Cli {
    /// The config file with flag overrides applied and validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.out {
            cfg.outputs.dir = dir.clone();
        }
        if let Some(b) = self.b {
            cfg.params.b = b;
        }
        if let Some(nu) = self.nu {
            cfg.params.nu = nu;
        }
        if let Some(p) = self.profiles {
            cfg.outputs.profiles = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse-free entry point: resolve, size the thread pool, dispatch.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    if cli.command == Command::Config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    run::run(&cli.command, &cfg)
}
