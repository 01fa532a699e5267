//! Experiment driver: synthesize controllers for configured horizons and
//! strategies, compare them, and replay worst-case attacks.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use regret_sls::io::{read_json, ControllerDoc};
use regret_sls::lifted::lift;
use regret_sls::regret::regret_metric;
use regret_sls::sls::simulate_closed_loop;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::Outcome;

#[derive(Debug, Parser)]
#[command(name = "regret-sls", version, about = "Regret-optimal defense against stealthy attacks")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one controller per configured horizon and strategy.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Record measured run times (makes outputs non-reproducible).
        #[arg(long)]
        wallclock: bool,
    },
    /// Synthesize, then compare worst-case regret and attack trajectories.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        wallclock: bool,
    },
    /// Worst-case attack against a stored controller.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        controller: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synthesize { .. } => "synthesize",
            Command::Compare { .. } => "compare",
            Command::Attack { .. } => "attack",
        }
    }

    pub fn config_path(&self) -> &Path {
        match self {
            Command::Synthesize { config, .. } | Command::Compare { config, .. } | Command::Attack { config, .. } => {
                config
            }
        }
    }
}

pub fn cmd_synthesize(cfg: &ExperimentConfig, out: &Path, wallclock: bool) -> CliResult<Vec<Outcome>> {
    let outcomes = experiment::run(cfg)?;
    report::write_synthesis(out, cfg, &outcomes, wallclock)?;
    Ok(outcomes)
}

pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, wallclock: bool) -> CliResult<Vec<Outcome>> {
    if cfg.strategies.len() < 2 {
        return Err(CliError::Config("compare needs at least two strategies".into()));
    }
    let outcomes = experiment::run(cfg)?;
    report::write_synthesis(out, cfg, &outcomes, wallclock)?;
    report::write_comparison(out, cfg, &outcomes)?;
    Ok(outcomes)
}

pub fn cmd_attack(cfg: &ExperimentConfig, controller: &Path, out: &Path) -> CliResult<report::AttackDoc> {
    let doc: ControllerDoc =
        read_json(controller).map_err(|e| CliError::Config(format!("{}: {e}", controller.display())))?;
    let sys = cfg.system(doc.horizon)?;
    let lifted = lift(&sys);
    let (omega, k) = doc
        .to_response(&lifted)
        .map_err(|e| CliError::Config(format!("controller does not fit the plant: {e}")))?;
    let cert = regret_metric(&omega, &lifted, &cfg.spec()).map_err(|e| CliError::from_core("regret", e))?;
    let a = cert.attack.clone().unwrap_or_else(|| DVector::zeros(lifted.na()));
    let tr = simulate_closed_loop(&sys, &k, &a).map_err(|e| CliError::from_core("simulation", e))?;
    let (x0, steps) = sys.unstack_attack(&a);
    let attack = report::AttackDoc {
        horizon: doc.horizon,
        strategy: doc.strategy.clone(),
        alpha: cfg.alpha,
        lambda: cert.lambda,
        mu: cert.mu,
        achieved_regret: cert.achieved_regret,
        stealth: cert.stealth,
        simulated_stealth: tr.cumulative_deviation().last().copied().unwrap_or(0.0),
        a_star: a.iter().copied().collect(),
        x0: x0.iter().copied().collect(),
        steps: steps.iter().map(|s| s.iter().copied().collect()).collect(),
    };
    report::write_attack(out, &attack, &tr)?;
    Ok(attack)
}

/// Execute a parsed command line. On failure an `error.json` record is
/// left in the output directory when it is known.
pub fn run(cli: &Cli) -> CliResult<()> {
    let command = cli.command.name();
    let cfg = match ExperimentConfig::from_path(cli.command.config_path()) {
        Ok(c) => c,
        Err(e) => {
            if let Some(dir) = std::env::var_os(config::OUT_DIR_ENV).filter(|v| !v.is_empty()) {
                error::write_error_record(Path::new(&dir), command, &e);
            }
            return Err(e);
        }
    };
    let out = cfg.resolved_output_dir();
    let result = match &cli.command {
        Command::Synthesize { wallclock, .. } => cmd_synthesize(&cfg, &out, *wallclock).map(|_| ()),
        Command::Compare { wallclock, .. } => cmd_compare(&cfg, &out, *wallclock).map(|_| ()),
        Command::Attack { controller, .. } => cmd_attack(&cfg, controller, &out).map(|_| ()),
    };
    if let Err(e) = &result {
        error::write_error_record(&out, command, e);
    }
    result
}
