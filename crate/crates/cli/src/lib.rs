//! Command-line experiment runner for entropy-regularized LQ control.
//!
//! Each subcommand reads an optional JSON config (see [`config`]), writes
//! its reports into the output directory together with `meta.json`, and
//! exits with 0 on success, 1 on configuration or I/O errors and 2 on
//! numerical failures.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "erlq", version, about = "Entropy-regularized LQ control: solves, policy-gradient runs and audits")]
pub struct Cli {
    /// JSON config; omitted sections take the reference experiment values.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config; ERLQ_SEED is used when neither is set).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Add one to every integer output of the bounds calculator.
    #[arg(long, global = true)]
    pub slack: bool,
    /// Smoothing coefficient of the zeroth-order estimators.
    #[arg(long, global = true, value_enum)]
    pub coefficient_mode: Option<CoefficientArg>,
    /// Worker threads for rollout estimates (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefficientArg {
    AmbientDim,
    PaperN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the Riccati equation and report the optimal policy.
    Solve,
    /// Evaluate the configured policy in closed form.
    Eval,
    /// Run exact regularized policy gradient.
    Rpg,
    /// Run sample-based policy gradient.
    Sbrpg,
    /// Compare analytic gradients with finite differences.
    Gradcheck,
    /// Report theoretical constants and the sample-based schedule.
    Bounds,
    /// Sample-based run on the reference experiment with preset settings.
    PaperExp,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Eval => "eval",
            Command::Rpg => "rpg",
            Command::Sbrpg => "sbrpg",
            Command::Gradcheck => "gradcheck",
            Command::Bounds => "bounds",
            Command::PaperExp => "paper-exp",
        }
    }
}

/// Preset of `paper-exp`: the reference plant, K0 = 0, Sigma0 = 0.5 I and
/// the default sample-based settings.
pub fn paper_exp_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

/// Loads the config and applies command-line overrides. Returns the
/// effective config with its seed resolved.
pub fn effective_config(cli: &Cli, env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(_), Command::PaperExp) => {
            return Err(CliError::Config("paper-exp uses a preset and takes no --config".into()));
        }
        (Some(path), _) => config::load(path)?,
        (None, Command::PaperExp) => paper_exp_config(),
        (None, _) => ExperimentConfig::default(),
    };
    let seed = cfg.resolve_seed(cli.seed, env_seed)?;
    cfg.seed = Some(seed);
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if cli.slack {
        cfg.bounds.slack = true;
    }
    if let Some(m) = cli.coefficient_mode {
        cfg.sbrpg.coefficient_mode = match m {
            CoefficientArg::AmbientDim => config::CoefficientSection::AmbientDim,
            CoefficientArg::PaperN => config::CoefficientSection::PaperN,
        };
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let env_seed = std::env::var("ERLQ_SEED").ok();
    let cfg = effective_config(cli, env_seed.as_deref())?;
    commands::dispatch(cli.command, &cfg)
}
