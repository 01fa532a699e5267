//! Experiment configuration document.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use regret_sls::io::SystemDoc;
use regret_sls::lifted::{spring_damper_demo_plant, DemoPlantParams, LtvSystem};
use regret_sls::regret::StealthSpec;
use regret_sls::sdp::SdpOptions;
use regret_sls::sls::TopologyMask;
use regret_sls::synthesis::{LiftingMode, Strategy, SynthesisOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces `output_dir`.
pub const OUT_DIR_ENV: &str = "SLS_REGRET_OUT_DIR";

/// Upper bound on `validation_samples`.
pub const MAX_VALIDATION_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of every random draw in the run.
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub plant: PlantConfig,
    /// Horizons to sweep (demo plant only). Empty means the plant's own.
    #[serde(default)]
    pub horizons: Vec<usize>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mask: Option<TopologyMask>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Random stealthy attacks drawn per controller to spot-check the
    /// certificate.
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::FixedLambdaIRM, Strategy::Hinf]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_validation_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Demo(DemoPlantParams),
    Explicit(SystemDoc),
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig::Demo(DemoPlantParams::default())
    }
}

/// Overrides of the λ search and IRM knobs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub lifting: Option<LiftingMode>,
    pub eliminate_zeros: Option<bool>,
    pub max_irm_iters: Option<usize>,
    pub rank_tol: Option<f64>,
    pub stagnation_window: Option<usize>,
    pub lambda_floor: Option<f64>,
    pub grid_points: Option<usize>,
    pub bisection_steps: Option<usize>,
    pub rel_tol: Option<f64>,
    pub lo_ratio: Option<f64>,
    pub parallel: Option<bool>,
}

/// Overrides of the SDP backend tolerances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: Option<usize>,
    pub tol_gap: Option<f64>,
    pub tol_abs: Option<f64>,
    pub tol_feas: Option<f64>,
    pub tol_psd: Option<f64>,
}

fn positive(what: &str, v: Option<f64>) -> CliResult<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!("{what} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        StealthSpec::new(self.alpha).map_err(|e| CliError::Config(e.to_string()))?;
        if self.strategies.is_empty() {
            return Err(CliError::Config("at least one strategy is required".into()));
        }
        let distinct: BTreeSet<&str> = self.strategies.iter().map(|s| s.name()).collect();
        if distinct.len() != self.strategies.len() {
            return Err(CliError::Config("strategies must not repeat".into()));
        }
        if self.horizons.contains(&0) {
            return Err(CliError::Config("horizons must be at least 1".into()));
        }
        let distinct: BTreeSet<usize> = self.horizons.iter().copied().collect();
        if distinct.len() != self.horizons.len() {
            return Err(CliError::Config("horizons must not repeat".into()));
        }
        if let PlantConfig::Explicit(doc) = &self.plant {
            if self.horizons.iter().any(|&t| t != doc.horizon) {
                return Err(CliError::Config(format!(
                    "an explicit plant fixes the horizon to {}",
                    doc.horizon
                )));
            }
        }
        if self.validation_samples > MAX_VALIDATION_SAMPLES {
            return Err(CliError::Config(format!(
                "validation_samples is limited to {MAX_VALIDATION_SAMPLES}"
            )));
        }
        let s = &self.search;
        for (what, v) in [
            ("search.rank_tol", s.rank_tol),
            ("search.lambda_floor", s.lambda_floor),
            ("search.rel_tol", s.rel_tol),
            ("search.lo_ratio", s.lo_ratio),
            ("solver.tol_gap", self.solver.tol_gap),
            ("solver.tol_abs", self.solver.tol_abs),
            ("solver.tol_feas", self.solver.tol_feas),
            ("solver.tol_psd", self.solver.tol_psd),
        ] {
            positive(what, v)?;
        }
        if s.grid_points == Some(0) {
            return Err(CliError::Config("search.grid_points must be at least 1".into()));
        }
        if self.solver.max_iter == Some(0) {
            return Err(CliError::Config("solver.max_iter must be at least 1".into()));
        }
        if let Some(lo) = s.lo_ratio {
            if lo >= 1.0 {
                return Err(CliError::Config("search.lo_ratio must lie below 1".into()));
            }
        }
        // Build every plant once so bad plant documents fail here.
        for t in self.horizon_list() {
            self.system(t)?;
        }
        Ok(())
    }

    /// Horizons in configured order.
    pub fn horizon_list(&self) -> Vec<usize> {
        if !self.horizons.is_empty() {
            return self.horizons.clone();
        }
        match &self.plant {
            PlantConfig::Demo(p) => vec![p.horizon],
            PlantConfig::Explicit(doc) => vec![doc.horizon],
        }
    }

    pub fn system(&self, horizon: usize) -> CliResult<LtvSystem<f64>> {
        match &self.plant {
            PlantConfig::Demo(p) => {
                let params = DemoPlantParams {
                    horizon,
                    ..p.clone()
                };
                spring_damper_demo_plant(&params).map_err(|e| CliError::Config(format!("demo plant: {e}")))
            }
            PlantConfig::Explicit(doc) => {
                if doc.horizon != horizon {
                    return Err(CliError::Config(format!(
                        "the explicit plant has horizon {}, not {horizon}",
                        doc.horizon
                    )));
                }
                doc.to_system().map_err(|e| CliError::Config(format!("plant: {e}")))
            }
        }
    }

    pub fn spec(&self) -> StealthSpec<f64> {
        StealthSpec::new(self.alpha).expect("validated")
    }

    pub fn synthesis_options(&self) -> SynthesisOptions<f64> {
        let mut o = SynthesisOptions::default();
        let s = &self.search;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { o.$f = v; } )* };
        }
        set!(
            lifting,
            eliminate_zeros,
            max_irm_iters,
            rank_tol,
            stagnation_window,
            lambda_floor,
            grid_points,
            bisection_steps,
            rel_tol,
            lo_ratio,
            parallel
        );
        o.sdp = self.sdp_options();
        o
    }

    pub fn sdp_options(&self) -> SdpOptions<f64> {
        let mut o = SdpOptions::default();
        let s = &self.solver;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { o.$f = v; } )* };
        }
        set!(max_iter, tol_gap, tol_abs, tol_feas, tol_psd);
        o
    }

    /// `output_dir`, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}
