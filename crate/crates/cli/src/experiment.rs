//! Synthesis jobs over (horizon, strategy) pairs and their checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use regret_sls::lifted::{lift, LiftedSystem, LtvSystem, Trajectory};
use regret_sls::regret::RegretKernels;
use regret_sls::sls::{clairvoyant, closed_loop_maps, simulate_closed_loop};
use regret_sls::synthesis::{synthesize, Strategy, SynthesisContext, SynthesisResult};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Random stealthy attacks checked against a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub samples: usize,
    pub max_regret: f64,
    pub bound_holds: bool,
}

/// One synthesized controller.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub horizon: usize,
    pub strategy: Strategy,
    pub system: LtvSystem<f64>,
    pub lifted: LiftedSystem<f64>,
    pub result: SynthesisResult<f64>,
    pub validation: Validation,
}

impl Outcome {
    pub fn mu(&self) -> f64 {
        self.result.certificate.mu
    }

    /// Worst-case attack of the certificate (zero when λ = 0).
    pub fn attack(&self) -> DVector<f64> {
        self.result
            .certificate
            .attack
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.lifted.na()))
    }

    /// Closed loop under the worst-case attack.
    pub fn worst_case_trajectory(&self) -> CliResult<Trajectory<f64>> {
        simulate_closed_loop(&self.system, &self.result.gain, &self.attack())
            .map_err(|e| CliError::from_core("simulation", e))
    }
}

/// Per-job random stream derived from the config seed.
pub fn job_rng(seed: u64, job: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(job as u64 + 1);
    rng
}

/// Draw attacks with ‖Φa‖² ≤ α and record the largest regret.
pub fn validate_certificate(
    kernels: &RegretKernels<f64>,
    alpha: f64,
    mu: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Validation {
    let na = kernels.g.nrows();
    let mut max_regret = 0.0f64;
    let mut drawn = 0;
    if na > 0 {
        while drawn < samples {
            let a = DVector::from_fn(na, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = kernels.stealth(&a);
            if !(s > 1e-300) {
                continue;
            }
            let level: f64 = 1.0 - rng.gen::<f64>();
            let a = a * (alpha * level / s).sqrt();
            max_regret = max_regret.max(kernels.regret(&a));
            drawn += 1;
        }
    }
    Validation {
        samples: drawn,
        max_regret,
        bound_holds: max_regret <= mu + 1e-6 * mu.abs().max(1.0),
    }
}

struct HorizonSetup {
    horizon: usize,
    system: LtvSystem<f64>,
    ctx: SynthesisContext<f64>,
}

/// Run every (horizon, strategy) job. Jobs execute concurrently; results
/// come back in configured order.
pub fn run(cfg: &ExperimentConfig) -> CliResult<Vec<Outcome>> {
    let setups = cfg
        .horizon_list()
        .into_iter()
        .map(|t| {
            let system = cfg.system(t)?;
            let lifted = lift(&system);
            let ctx = SynthesisContext::new(&lifted, cfg.spec(), cfg.mask.as_ref(), cfg.synthesis_options())
                .map_err(|e| CliError::from_core(&format!("T={t}"), e))?;
            Ok(HorizonSetup {
                horizon: t,
                system,
                ctx,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let jobs: Vec<(usize, &HorizonSetup, Strategy)> = setups
        .iter()
        .flat_map(|s| cfg.strategies.iter().map(move |&st| (s, st)))
        .enumerate()
        .map(|(i, (s, st))| (i, s, st))
        .collect();
    let results: Vec<CliResult<Outcome>> = jobs
        .par_iter()
        .map(|&(idx, setup, strategy)| {
            let t = setup.horizon;
            log::info!("T={t} {strategy}: synthesizing");
            let result = synthesize(&setup.ctx, strategy)
                .map_err(|e| CliError::from_core(&format!("T={t} {strategy}"), e))?;
            let lifted = setup.ctx.lifted().clone();
            let maps = closed_loop_maps(&result.omega, &lifted)
                .map_err(|e| CliError::from_core(&format!("T={t} {strategy}"), e))?;
            let kernels = RegretKernels::new(&maps, &clairvoyant(&lifted));
            let mut rng = job_rng(cfg.seed, idx);
            let validation =
                validate_certificate(&kernels, cfg.alpha, result.certificate.mu, cfg.validation_samples, &mut rng);
            if !validation.bound_holds {
                log::warn!(
                    "T={t} {strategy}: sampled regret {:.6e} exceeds the certificate {:.6e}",
                    validation.max_regret,
                    result.certificate.mu
                );
            }
            log::info!("T={t} {strategy}: mu = {:.6e}", result.certificate.mu);
            Ok(Outcome {
                horizon: t,
                strategy,
                system: setup.system.clone(),
                lifted,
                result,
                validation,
            })
        })
        .collect();
    results.into_iter().collect()
}

/// μ_H∞ / μ for every non-H∞ outcome of a horizon.
pub fn improvement_factors(outcomes: &[Outcome], horizon: usize) -> Vec<(Strategy, f64)> {
    let at: Vec<&Outcome> = outcomes.iter().filter(|o| o.horizon == horizon).collect();
    let Some(h) = at.iter().find(|o| o.strategy == Strategy::Hinf) else {
        return Vec::new();
    };
    at.iter()
        .filter(|o| o.strategy != Strategy::Hinf)
        .map(|o| {
            let f = if o.mu() > 0.0 {
                h.mu() / o.mu()
            } else if h.mu() > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
            (o.strategy, f)
        })
        .collect()
}
