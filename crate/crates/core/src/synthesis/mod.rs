//! Controller synthesis: fixed-λ rank-constrained programs solved by
//! iterative rank minimization, the Shor bound, the λ search and the H∞
//! baseline.

mod affine;
mod lifting;
mod programs;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::LiftedSystem;
use crate::linalg::{self, sym_eigen};
use crate::regret::{self, RegretCertificate, RegretKernels, StealthSpec};
use crate::scalar::{lit, Real};
use crate::sdp::{self, SdpOptions, SdpProblem, Status};
use crate::sls::{self, SlsResponse, TopologyMask};

pub use affine::AffineResponse;
pub use lifting::{
    propagate_sparsity, rank1_lift_check, rank1_lift_check_with, rank_ratio, LiftedVars, LiftedZeroPattern,
    LiftingLayout, LiftingMode,
};

use programs::VarMap;

/// Synthesis strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    FixedLambdaIRM,
    ShorPlusEval,
    Hinf,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FixedLambdaIRM => "FixedLambdaIRM",
            Strategy::ShorPlusEval => "ShorPlusEval",
            Strategy::Hinf => "Hinf",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FixedLambdaIRM" => Ok(Strategy::FixedLambdaIRM),
            "ShorPlusEval" => Ok(Strategy::ShorPlusEval),
            "Hinf" => Ok(Strategy::Hinf),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other}"))),
        }
    }
}

/// Knobs of the synthesis programs and the λ search.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions<T: Real> {
    pub lifting: LiftingMode,
    /// Drop structurally zero entries of vec(Φ) from the lifting.
    pub eliminate_zeros: bool,
    pub max_irm_iters: usize,
    /// σ₂/σ₁ target of the augmented lifting.
    pub rank_tol: T,
    /// IRM stops early when the rank ratio fails to halve over this many
    /// iterations.
    pub stagnation_window: usize,
    /// Lower clamp on λ.
    pub lambda_floor: T,
    pub grid_points: usize,
    pub bisection_steps: usize,
    pub rel_tol: T,
    /// λ_lo = max(shor/α, lo_ratio·λ_hi).
    pub lo_ratio: T,
    pub sdp: SdpOptions<T>,
    pub parallel: bool,
}

impl<T: Real> Default for SynthesisOptions<T> {
    fn default() -> Self {
        Self {
            lifting: LiftingMode::Chordal,
            eliminate_zeros: true,
            max_irm_iters: 50,
            rank_tol: lit(1e-6),
            stagnation_window: 5,
            lambda_floor: lit(1e-8),
            grid_points: 12,
            bisection_steps: 10,
            rel_tol: lit(1e-2),
            lo_ratio: lit(1e-4),
            sdp: SdpOptions::default(),
            parallel: true,
        }
    }
}

/// Plant, budget, mask and lifting layout shared by every program.
#[derive(Debug, Clone)]
pub struct SynthesisContext<T: Real> {
    pub affine: AffineResponse<T>,
    pub layout: LiftingLayout,
    pub spec: StealthSpec<T>,
    pub options: SynthesisOptions<T>,
}

impl<T: Real> SynthesisContext<T> {
    pub fn new(
        lifted: &LiftedSystem<T>,
        spec: StealthSpec<T>,
        mask: Option<&TopologyMask>,
        options: SynthesisOptions<T>,
    ) -> Result<Self> {
        let affine = AffineResponse::new(lifted, mask)?;
        let zeros = if options.eliminate_zeros {
            affine.structural_zeros()
        } else {
            Vec::new()
        };
        let (ny, na) = affine.phi0.shape();
        let layout = LiftingLayout::new(ny, na, options.lifting, &zeros);
        Ok(Self {
            affine,
            layout,
            spec,
            options,
        })
    }

    pub fn lifted(&self) -> &LiftedSystem<T> {
        self.affine.lifted()
    }

    fn alpha(&self) -> T {
        self.spec.alpha()
    }

    /// Ω(η), its gain and its regret certificate.
    fn certify(&self, eta: &DVector<T>) -> Result<(SlsResponse<T>, DMatrix<T>, RegretCertificate<T>)> {
        let omega = self.affine.response(eta);
        let gain = sls::extract_gain(&omega, self.lifted(), lit(sls::TOL_FEAS))?;
        let maps = self.affine.maps(eta);
        let kernels = RegretKernels::new(&maps, self.affine.clairvoyant());
        let cert = regret::regret_from_kernels(&kernels, &self.spec)?;
        Ok((omega, gain, cert))
    }

    fn lifted_vars(&self, vm: &VarMap, x: &DVector<T>) -> LiftedVars<T> {
        let eta = vm.eta(x);
        let phi = self.affine.maps(&eta).phi;
        let vec_phi = DVector::from_column_slice(phi.as_slice());
        let cliques = vm.clique_values(&self.layout, x);
        LiftedVars::from_cliques(&self.layout, vec_phi, &cliques)
    }

    fn dominant_dirs(&self, vm: &VarMap, x: &DVector<T>) -> Vec<DVector<T>> {
        let eta = vm.eta(x);
        let cliques = vm.clique_values(&self.layout, x);
        cliques
            .iter()
            .enumerate()
            .map(|(c, xc)| {
                let b = programs::clique_block_value(&self.affine, &self.layout, c, xc, &eta);
                let (_, vecs) = sym_eigen(&b);
                vecs.column(vecs.ncols() - 1).into_owned()
            })
            .collect()
    }
}

/// One point visited by the λ search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEvaluation {
    pub lambda: f64,
    pub feasible: bool,
    pub certified_mu: Option<f64>,
    pub rank_ratio: Option<f64>,
    pub irm_iterations: usize,
}

/// Outcome of a synthesis run. The headline number is always
/// `certificate.mu`, recomputed from Ω.
#[derive(Debug, Clone)]
pub struct SynthesisResult<T: Real> {
    pub strategy: Strategy,
    pub omega: SlsResponse<T>,
    pub gain: DMatrix<T>,
    /// λ at which Ω was produced.
    pub lambda: T,
    /// Objective attained by the producing program in regret units.
    pub mu_bar: T,
    pub shor_lower_bound: T,
    pub certificate: RegretCertificate<T>,
    /// σ₂/σ₁ of the augmented lifting after each IRM step.
    pub irm_log: Vec<T>,
    /// Whether the lifting reached rank one (always true without lifting).
    pub rank_one: bool,
    pub lifted: Option<LiftedVars<T>>,
    pub evaluations: Vec<LambdaEvaluation>,
    pub wallclock_s: f64,
}

impl<T: Real> SynthesisResult<T> {
    pub fn mu(&self) -> T {
        self.certificate.mu
    }
}

fn solver_error(status: Status, what: &str) -> Error {
    Error::Solver(format!("{what}: solver stopped with status {status:?}"))
}

/// H∞ baseline: min λα over [λI, Ψᵀ, Φ_uᵀ; Ψ, I, 0; Φ_u, 0, I] ⪰ 0.
pub fn hinf_synthesis<T: Real>(ctx: &SynthesisContext<T>) -> Result<SynthesisResult<T>> {
    let start = Instant::now();
    let (p, lam) = programs::hinf_program(&ctx.affine, ctx.alpha());
    let sol = sdp::solve(&p, &ctx.options.sdp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible("H-infinity program".into())),
        s => return Err(solver_error(s, "H-infinity program")),
    }
    let eta = sol.x.rows(0, ctx.affine.dim()).into_owned();
    let lambda = sol.x[lam];
    let (omega, gain, certificate) = ctx.certify(&eta)?;
    Ok(SynthesisResult {
        strategy: Strategy::Hinf,
        omega,
        gain,
        lambda,
        mu_bar: certificate.mu,
        shor_lower_bound: T::zero(),
        certificate,
        irm_log: Vec::new(),
        rank_one: true,
        lifted: None,
        evaluations: Vec::new(),
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

/// Squared worst-case gain max_{‖a‖≤1} ‖Ψa‖² + ‖Φ_u a‖² of fixed maps,
/// obtained from the H∞ LMI with nothing left to optimize.
pub fn hinf_level<T: Real>(psi: &DMatrix<T>, phi_u: &DMatrix<T>, opts: &SdpOptions<T>) -> Result<T> {
    let na = psi.ncols();
    let nz = psi.nrows();
    let nu = phi_u.nrows();
    let mut p = SdpProblem::new(1);
    p.set_cost(0, T::one());
    let b = p.add_block(na + nz + nu);
    for i in 0..na {
        p.add_coefficient(b, 0, i, i, T::one());
    }
    for i in na..na + nz + nu {
        p.add_constant(b, i, i, T::one());
    }
    p.add_constant_matrix(b, na, 0, psi);
    p.add_constant_matrix(b, na + nz, 0, phi_u);
    let sol = sdp::solve(&p, opts)?;
    if sol.status != Status::Optimal {
        return Err(solver_error(sol.status, "H-infinity level"));
    }
    Ok(sol.x[0])
}

/// Lower bound from dropping the rank constraints of the joint program.
#[derive(Debug, Clone)]
pub struct ShorRelaxation<T: Real> {
    pub lower_bound: T,
    pub lambda: T,
    pub lambda_inv: T,
    pub omega: SlsResponse<T>,
    pub lifted: LiftedVars<T>,
    /// Smallest eigenvalue over every constraint block at the returned point,
    /// relative to the block's scale.
    pub min_relative_eig: T,
}

/// Shor relaxation of the joint program. Without the rank constraints the
/// lifting only has to dominate ΦᵀΦ, so λ can sit at its floor: the optimum
/// is floor·α. The optimal point is built explicitly and checked against
/// every constraint.
pub fn shor_relax<T: Real>(ctx: &SynthesisContext<T>) -> Result<ShorRelaxation<T>> {
    shor_relax_at(ctx, ctx.options.lambda_floor)
}

fn shor_relax_at<T: Real>(ctx: &SynthesisContext<T>, floor: T) -> Result<ShorRelaxation<T>> {
    let aff = &ctx.affine;
    let eta = DVector::zeros(aff.dim());
    let omega = aff.response(&eta);
    let maps = aff.maps(&eta);
    let q = &aff.clairvoyant().q;
    let lambda = floor;
    let lambda_inv = T::one() / floor;
    let na = maps.phi.ncols();
    let (ny, _) = maps.phi.shape();
    let gram = maps.gram();
    let w = linalg::symmetrize(&(maps.cost_kernel() - q));
    // ℓ(𝓧) = ΦᵀΦ + c·I with c making λ_inv Q + ℓ − (ΨᵀΨ + Φ_uᵀΦ_u)/λ ⪰ 0.
    let need = linalg::max_eigenvalue(&(&w / lambda - &gram)).max(T::zero());
    let c = need * (T::one() + lit::<T>(1e-6)) + lit::<T>(1e-9);
    // Distribute c over one clique per column of Φ.
    let mut carrier = vec![None; na];
    for (cl, idx) in ctx.layout.cliques.iter().enumerate() {
        for (a, &p) in idx.iter().enumerate() {
            let (_, j) = ctx.layout.row_col(p);
            if carrier[j].is_none() {
                carrier[j] = Some((cl, a));
            }
        }
    }
    let vec_phi = DVector::from_column_slice(maps.phi.as_slice());
    let mut cliques: Vec<DMatrix<T>> = ctx
        .layout
        .cliques
        .iter()
        .map(|idx| {
            let phi_c = DVector::from_iterator(idx.len(), idx.iter().map(|&p| vec_phi[p]));
            &phi_c * phi_c.transpose()
        })
        .collect();
    for (j, car) in carrier.iter().enumerate() {
        match car {
            Some((cl, a)) => cliques[*cl][(*a, *a)] += c,
            None => {
                if c > T::zero() && w[(j, j)] > T::zero() {
                    return Err(Error::UnboundedRegret);
                }
            }
        }
    }
    let lifted = LiftedVars::from_cliques(&ctx.layout, vec_phi, &cliques);
    // Check every constraint block.
    let ell = lifted.ell(ny);
    let nz = maps.psi.nrows();
    let nu = maps.phi_u.nrows();
    let mut main = DMatrix::zeros(na + nz + nu, na + nz + nu);
    main.view_mut((0, 0), (na, na)).copy_from(&(q * lambda_inv + &ell));
    main.view_mut((na, 0), (nz, na)).copy_from(&maps.psi);
    main.view_mut((0, na), (na, nz)).copy_from(&maps.psi.transpose());
    main.view_mut((na + nz, 0), (nu, na)).copy_from(&maps.phi_u);
    main.view_mut((0, na + nz), (na, nu)).copy_from(&maps.phi_u.transpose());
    for i in na..na + nz + nu {
        main[(i, i)] = lambda;
    }
    let rel = |m: &DMatrix<T>| linalg::min_eigenvalue(m) / m.amax().max(T::one());
    let mut worst = rel(&main);
    for (cl, xc) in cliques.iter().enumerate() {
        let b = programs::clique_block_value(aff, &ctx.layout, cl, xc, &eta);
        worst = worst.min(rel(&b));
    }
    let lam_vec = DVector::from_vec(vec![lambda, lambda_inv, T::one()]);
    let lam_block = &lam_vec * lam_vec.transpose();
    worst = worst.min(rel(&lam_block));
    if worst < -lit::<T>(1e-9) {
        return Err(Error::Solver(format!(
            "relaxed point violates a constraint by {worst:.3e}"
        )));
    }
    let mut lifted = lifted;
    lifted.lambda_lift = Some(lam_block.view((0, 0), (2, 2)).into_owned());
    lifted.lambda_pair = Some((lambda, lambda_inv));
    Ok(ShorRelaxation {
        lower_bound: floor * ctx.alpha(),
        lambda,
        lambda_inv,
        omega,
        lifted,
        min_relative_eig: worst,
    })
}

/// The same relaxation solved numerically with the SDP backend at a given
/// λ floor (use a moderate floor; tiny floors are ill-conditioned).
pub fn shor_relax_sdp<T: Real>(ctx: &SynthesisContext<T>, floor: T) -> Result<(T, LiftedVars<T>)> {
    let (p, vm) = programs::joint_program(&ctx.affine, &ctx.layout, ctx.alpha(), floor);
    let sol = sdp::solve(&p, &ctx.options.sdp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible("relaxed joint program".into())),
        s => return Err(solver_error(s, "relaxed joint program")),
    }
    let mut lv = ctx.lifted_vars(&vm, &sol.x);
    let (l, li) = (sol.x[vm.lambda.unwrap()], sol.x[vm.lambda_inv.unwrap()]);
    lv.lambda_pair = Some((l, li));
    Ok((sol.objective, lv))
}

/// Result of the fixed-λ program before certification.
struct IrmRun<T: Real> {
    x: DVector<T>,
    vm: VarMap,
    log: Vec<T>,
    converged: bool,
}

fn irm_at<T: Real>(ctx: &SynthesisContext<T>, lambda_bar: T) -> Result<IrmRun<T>> {
    let (mut p, vm) = programs::fixed_lambda_program(&ctx.affine, &ctx.layout, lambda_bar);
    let opts = &ctx.options;
    p.set_costs(&programs::trace_cost(&ctx.layout, &vm, p.dim(), T::one()));
    let sol = sdp::solve(&p, &opts.sdp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Infeasible(format!("fixed-lambda program at {lambda_bar:.4e}")))
        }
        s => return Err(solver_error(s, "fixed-lambda program")),
    }
    let mut x = sol.x;
    let mut log = vec![ctx.lifted_vars(&vm, &x).rank_ratio()];
    let mut converged = log[0] <= opts.rank_tol;
    let mut iter = 0;
    while !converged && iter < opts.max_irm_iters {
        iter += 1;
        let dirs = ctx.dominant_dirs(&vm, &x);
        p.set_costs(&programs::irm_cost(&ctx.affine, &ctx.layout, &vm, &dirs, p.dim(), T::one()));
        let sol = sdp::solve(&p, &opts.sdp)?;
        if sol.status != Status::Optimal {
            log::debug!("IRM step {iter} at {lambda_bar:.4e}: {:?}", sol.status);
            break;
        }
        x = sol.x;
        let ratio = ctx.lifted_vars(&vm, &x).rank_ratio();
        log.push(ratio);
        converged = ratio <= opts.rank_tol;
        let w = opts.stagnation_window;
        if !converged && w > 0 && log.len() > w && ratio > log[log.len() - 1 - w] * lit::<T>(0.5) {
            break;
        }
    }
    Ok(IrmRun {
        x,
        vm,
        log,
        converged,
    })
}

/// Fixed-λ synthesis: the trace-minimizing solution of the fixed-λ program
/// refined by iterative rank minimization. `rank_one` is false when IRM
/// stopped before the lifting reached rank one.
pub fn fixed_lambda_synthesis<T: Real>(ctx: &SynthesisContext<T>, lambda_bar: T) -> Result<SynthesisResult<T>> {
    if !(lambda_bar > T::zero()) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let start = Instant::now();
    let lambda_bar = lambda_bar.max(ctx.options.lambda_floor);
    let run = irm_at(ctx, lambda_bar)?;
    let eta = run.vm.eta(&run.x);
    let (omega, gain, certificate) = ctx.certify(&eta)?;
    let lifted = ctx.lifted_vars(&run.vm, &run.x);
    Ok(SynthesisResult {
        strategy: Strategy::FixedLambdaIRM,
        omega,
        gain,
        lambda: lambda_bar,
        mu_bar: lambda_bar * ctx.alpha(),
        shor_lower_bound: ctx.options.lambda_floor * ctx.alpha(),
        certificate,
        irm_log: run.log,
        rank_one: run.converged,
        lifted: Some(lifted),
        evaluations: Vec::new(),
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

fn relaxed_fixed_lambda<T: Real>(ctx: &SynthesisContext<T>, lambda_bar: T) -> Result<(T, DVector<T>, VarMap)> {
    let (mut p, vm) = programs::fixed_lambda_program(&ctx.affine, &ctx.layout, lambda_bar);
    p.set_costs(&programs::trace_cost(&ctx.layout, &vm, p.dim(), T::one()));
    let sol = sdp::solve(&p, &ctx.options.sdp)?;
    match sol.status {
        Status::Optimal => Ok((sol.objective, sol.x, vm)),
        Status::Infeasible => Err(Error::Infeasible(format!(
            "relaxed fixed-lambda program at {lambda_bar:.4e}"
        ))),
        s => Err(solver_error(s, "relaxed fixed-lambda program")),
    }
}

/// Minimal trace of the lifting in the fixed-λ program, with the lifting
/// at the optimum.
pub fn fixed_lambda_trace<T: Real>(ctx: &SynthesisContext<T>, lambda_bar: T) -> Result<(T, LiftedVars<T>)> {
    let lambda_bar = lambda_bar.max(ctx.options.lambda_floor);
    let (obj, x, vm) = relaxed_fixed_lambda(ctx, lambda_bar)?;
    Ok((obj, ctx.lifted_vars(&vm, &x)))
}

/// Relaxed fixed-λ program (trace objective, no rank refinement); Ω is
/// read off and certified.
pub fn shor_fixed_lambda<T: Real>(ctx: &SynthesisContext<T>, lambda_bar: T) -> Result<SynthesisResult<T>> {
    let start = Instant::now();
    let lambda_bar = lambda_bar.max(ctx.options.lambda_floor);
    let (_, x, vm) = relaxed_fixed_lambda(ctx, lambda_bar)?;
    let eta = vm.eta(&x);
    let (omega, gain, certificate) = ctx.certify(&eta)?;
    let lifted = ctx.lifted_vars(&vm, &x);
    let ratio = lifted.rank_ratio();
    Ok(SynthesisResult {
        strategy: Strategy::ShorPlusEval,
        omega,
        gain,
        lambda: lambda_bar,
        mu_bar: certificate.mu,
        shor_lower_bound: ctx.options.lambda_floor * ctx.alpha(),
        certificate,
        irm_log: vec![ratio],
        rank_one: ratio <= ctx.options.rank_tol,
        lifted: Some(lifted),
        evaluations: Vec::new(),
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

fn geometric_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    if points <= 1 || hi <= lo {
        return vec![hi];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            let t = lit::<T>(i as f64 / (points - 1) as f64);
            (llo + (lhi - llo) * t).exp()
        })
        .collect()
}

fn evaluation<T: Real>(lambda: T, r: &Result<SynthesisResult<T>>, need_rank_one: bool) -> LambdaEvaluation {
    match r {
        Ok(res) => LambdaEvaluation {
            lambda: lambda.as_f64(),
            feasible: res.rank_one || !need_rank_one,
            certified_mu: Some(res.certificate.mu.as_f64()),
            rank_ratio: res.irm_log.last().map(|v| v.as_f64()),
            irm_iterations: res.irm_log.len().saturating_sub(1),
        },
        Err(_) => LambdaEvaluation {
            lambda: lambda.as_f64(),
            feasible: false,
            certified_mu: None,
            rank_ratio: None,
            irm_iterations: 0,
        },
    }
}

fn map_lambdas<T, F>(lambdas: &[T], parallel: bool, f: F) -> Vec<Result<SynthesisResult<T>>>
where
    T: Real,
    F: Fn(T) -> Result<SynthesisResult<T>> + Sync + Send,
{
    if parallel {
        lambdas.par_iter().map(|&l| f(l)).collect()
    } else {
        lambdas.iter().map(|&l| f(l)).collect()
    }
}

/// Pick the smallest certified μ, ties broken by the smallest ‖Ω‖_F.
fn best_of<T: Real>(cands: Vec<SynthesisResult<T>>) -> Option<SynthesisResult<T>> {
    let tie = lit::<T>(1e-12);
    cands.into_iter().reduce(|best, c| {
        let (mb, mc) = (best.certificate.mu, c.certificate.mu);
        if mc < mb - tie * mb.abs().max(T::one()) {
            c
        } else if (mc - mb).abs() <= tie * mb.abs().max(T::one()) && c.omega.norm() < best.omega.norm() {
            c
        } else {
            best
        }
    })
}

/// Full synthesis with the requested strategy.
pub fn synthesize<T: Real>(ctx: &SynthesisContext<T>, strategy: Strategy) -> Result<SynthesisResult<T>> {
    let start = Instant::now();
    let mut hinf = hinf_synthesis(ctx)?;
    if strategy == Strategy::Hinf {
        // The relaxation bounds every controller; report it when it exists.
        if let Ok(shor) = shor_relax(ctx) {
            hinf.shor_lower_bound = shor.lower_bound;
        }
        return Ok(hinf);
    }
    let alpha = ctx.alpha();
    let shor = shor_relax(ctx)?;
    let scale = hinf.certificate.mu.abs().max(T::one());
    if hinf.certificate.mu <= lit::<T>(1e-12) * scale {
        // Nothing left to improve.
        let mut r = hinf;
        r.strategy = strategy;
        r.shor_lower_bound = shor.lower_bound;
        r.mu_bar = r.certificate.mu;
        r.wallclock_s = start.elapsed().as_secs_f64();
        return Ok(r);
    }
    let opts = &ctx.options;
    let lambda_hi = hinf.certificate.lambda;
    let lambda_lo = (shor.lower_bound / alpha).max(opts.lo_ratio * lambda_hi);
    let grid = geometric_grid(lambda_lo, lambda_hi, opts.grid_points);
    let mut evaluations = Vec::new();
    let mut candidates = Vec::new();

    match strategy {
        Strategy::FixedLambdaIRM => {
            let runs = map_lambdas(&grid, opts.parallel, |l| fixed_lambda_synthesis(ctx, l));
            let mut first_ok = None;
            for (k, (l, r)) in grid.iter().zip(runs).enumerate() {
                let ev = evaluation(*l, &r, true);
                if ev.feasible && first_ok.is_none() {
                    first_ok = Some(k);
                }
                if ev.feasible {
                    candidates.push(r.expect("feasible run"));
                }
                evaluations.push(ev);
            }
            let Some(k) = first_ok else {
                return Err(Error::Infeasible("no grid value of lambda admits a rank-one solution".into()));
            };
            if k > 0 {
                let (mut lo, mut hi) = (grid[k - 1], grid[k]);
                for _ in 0..opts.bisection_steps {
                    if hi / lo - T::one() <= opts.rel_tol {
                        break;
                    }
                    let mid = (lo * hi).sqrt();
                    let r = fixed_lambda_synthesis(ctx, mid);
                    let ev = evaluation(mid, &r, true);
                    if ev.feasible {
                        hi = mid;
                        candidates.push(r.expect("feasible run"));
                    } else {
                        lo = mid;
                    }
                    evaluations.push(ev);
                }
            }
        }
        Strategy::ShorPlusEval => {
            let runs = map_lambdas(&grid, opts.parallel, |l| shor_fixed_lambda(ctx, l));
            let mut best_k = None;
            let mut best_mu = lit::<T>(f64::INFINITY);
            for (k, (l, r)) in grid.iter().zip(runs).enumerate() {
                evaluations.push(evaluation(*l, &r, false));
                if let Ok(res) = r {
                    if res.certificate.mu < best_mu {
                        best_mu = res.certificate.mu;
                        best_k = Some(k);
                    }
                    candidates.push(res);
                }
            }
            let Some(k) = best_k else {
                return Err(Error::Infeasible("relaxed program infeasible on the whole grid".into()));
            };
            // Golden-section refinement in log λ around the best grid point.
            let mut a = grid[k.saturating_sub(1)].ln();
            let mut b = grid[(k + 1).min(grid.len() - 1)].ln();
            let ratio = lit::<T>(0.618_033_988_749_894_8);
            let eval_at = |ll: T, evals: &mut Vec<LambdaEvaluation>, cands: &mut Vec<SynthesisResult<T>>| {
                let l = ll.exp();
                let r = shor_fixed_lambda(ctx, l);
                evals.push(evaluation(l, &r, false));
                match r {
                    Ok(res) => {
                        let mu = res.certificate.mu;
                        cands.push(res);
                        mu
                    }
                    Err(_) => lit(f64::INFINITY),
                }
            };
            if b > a {
                let mut c = b - (b - a) * ratio;
                let mut d = a + (b - a) * ratio;
                let mut fc = eval_at(c, &mut evaluations, &mut candidates);
                let mut fd = eval_at(d, &mut evaluations, &mut candidates);
                for _ in 2..opts.bisection_steps {
                    if (b - a).exp() - T::one() <= opts.rel_tol {
                        break;
                    }
                    if fc <= fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - (b - a) * ratio;
                        fc = eval_at(c, &mut evaluations, &mut candidates);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + (b - a) * ratio;
                        fd = eval_at(d, &mut evaluations, &mut candidates);
                    }
                }
            }
        }
        Strategy::Hinf => unreachable!(),
    }

    let mut best = best_of(candidates).expect("at least one candidate");
    best.strategy = strategy;
    best.shor_lower_bound = shor.lower_bound;
    best.evaluations = evaluations;
    best.wallclock_s = start.elapsed().as_secs_f64();
    Ok(best)
}

/// Joint program with free λ and the Λ lifting, driven by IRM penalties on
/// both liftings with a growing weight. Starts from the H∞ point.
pub fn joint_synthesis<T: Real>(ctx: &SynthesisContext<T>) -> Result<SynthesisResult<T>> {
    let start = Instant::now();
    let hinf = hinf_synthesis(ctx)?;
    let alpha = ctx.alpha();
    let floor = ctx.options.lambda_floor.max(ctx.options.lo_ratio * hinf.certificate.lambda);
    let (mut p, vm) = programs::joint_program(&ctx.affine, &ctx.layout, alpha, floor);
    let dim = p.dim();
    // Directions of the H∞ point.
    let phi = &ctx.affine.maps(&hinf_eta(ctx, &hinf)?).phi;
    let vec_phi = DVector::from_column_slice(phi.as_slice());
    let mut dirs: Vec<DVector<T>> = ctx
        .layout
        .cliques
        .iter()
        .map(|idx| {
            let mut v = DVector::from_iterator(idx.len() + 1, idx.iter().map(|&q| vec_phi[q]).chain(std::iter::once(T::one())));
            v.normalize_mut();
            v
        })
        .collect();
    let lam0 = hinf.certificate.lambda.max(floor);
    let mut u = DVector::from_vec(vec![lam0, T::one() / lam0, T::one()]);
    u.normalize_mut();
    let mut weight = hinf.certificate.mu.max(lit(1e-9)) * lit::<T>(1e-2);
    let mut log = Vec::new();
    let mut best: Option<(DVector<T>, T)> = None;
    let mut converged = false;
    for _ in 0..ctx.options.max_irm_iters {
        let mut c = programs::irm_cost(&ctx.affine, &ctx.layout, &vm, &dirs, dim, weight);
        programs::lambda_penalty(&vm, &u, &mut c, weight);
        c[vm.lambda.unwrap()] += alpha;
        p.set_costs(&c);
        let sol = sdp::solve(&p, &ctx.options.sdp)?;
        if sol.status != Status::Optimal {
            log::debug!("joint IRM: {:?}", sol.status);
            break;
        }
        let x = sol.x;
        let lv = ctx.lifted_vars(&vm, &x);
        let (l, li) = (x[vm.lambda.unwrap()], x[vm.lambda_inv.unwrap()]);
        let lam_aug = DMatrix::from_row_slice(3, 3, &[
            x[vm.lam11.unwrap()], T::one(), l,
            T::one(), x[vm.lam22.unwrap()], li,
            l, li, T::one(),
        ]);
        let ratio = lv.rank_ratio().max(rank_ratio(&lam_aug));
        log.push(ratio);
        best = Some((x.clone(), l));
        if ratio <= ctx.options.rank_tol {
            converged = true;
            break;
        }
        dirs = ctx.dominant_dirs(&vm, &x);
        let (_, vecs) = sym_eigen(&lam_aug);
        u = vecs.column(2).into_owned();
        weight *= lit::<T>(2.0);
    }
    let Some((x, lambda)) = best else {
        return Err(Error::Solver("joint program produced no iterate".into()));
    };
    let eta = vm.eta(&x);
    let (omega, gain, certificate) = ctx.certify(&eta)?;
    let mut lifted = ctx.lifted_vars(&vm, &x);
    let li = x[vm.lambda_inv.unwrap()];
    lifted.lambda_pair = Some((lambda, li));
    lifted.lambda_lift = Some(DMatrix::from_row_slice(2, 2, &[x[vm.lam11.unwrap()], T::one(), T::one(), x[vm.lam22.unwrap()]]));
    Ok(SynthesisResult {
        strategy: Strategy::FixedLambdaIRM,
        omega,
        gain,
        lambda,
        mu_bar: lambda * alpha,
        shor_lower_bound: ctx.options.lambda_floor * alpha,
        certificate,
        irm_log: log,
        rank_one: converged,
        lifted: Some(lifted),
        evaluations: Vec::new(),
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

fn hinf_eta<T: Real>(ctx: &SynthesisContext<T>, hinf: &SynthesisResult<T>) -> Result<DVector<T>> {
    // Recover η from L by least squares on the basis.
    let aff = &ctx.affine;
    let d = aff.dim();
    let l = &hinf.omega.l;
    let zero = DVector::zeros(d);
    let l0 = aff.free_matrix(&zero);
    let cols: Vec<DVector<T>> = (0..d)
        .map(|k| {
            let mut e = DVector::zeros(d);
            e[k] = T::one();
            let m = aff.free_matrix(&e) - &l0;
            DVector::from_column_slice(m.as_slice())
        })
        .collect();
    if d == 0 {
        return Ok(zero);
    }
    let a = DMatrix::from_columns(&cols);
    let b = DVector::from_column_slice((l - l0).as_slice());
    Ok(linalg::lstsq(&a, &b))
}
