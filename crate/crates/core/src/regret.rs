//! Worst-case regret of a fixed controller under α-stealthy attacks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lifted::LiftedSystem;
use crate::linalg::{self, sym_eigen};
use crate::scalar::{lit, Real};
use crate::sdp::{self, SdpOptions, SdpProblem, Status};
use crate::sls::{self, ClairvoyantData, ClosedLoopMaps, SlsResponse};

/// Smallest admissible stealth budget.
pub const ALPHA_FLOOR: f64 = 1e-12;

/// Dimension guard for the dense eigen oracle.
pub const ORACLE_MAX_DIM: usize = 40;

/// Stealth budget on ‖y − y_n‖².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealthSpec<T: Real> {
    alpha: T,
}

impl<T: Real> StealthSpec<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha >= lit(ALPHA_FLOOR)) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stealth budget must be at least {ALPHA_FLOOR:e}, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// G = ΦᵀΦ and W = ΨᵀΨ + Φ_uᵀΦ_u − Q, so that regret(a) = aᵀWa and
/// stealth(a) = aᵀGa.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretKernels<T: Real> {
    pub g: DMatrix<T>,
    pub w: DMatrix<T>,
}

impl<T: Real> RegretKernels<T> {
    pub fn new(maps: &ClosedLoopMaps<T>, clair: &ClairvoyantData<T>) -> Self {
        Self {
            g: linalg::symmetrize(&maps.gram()),
            w: linalg::symmetrize(&(maps.cost_kernel() - &clair.q)),
        }
    }

    pub fn regret(&self, a: &DVector<T>) -> T {
        (a.transpose() * &self.w * a)[(0, 0)]
    }

    pub fn stealth(&self, a: &DVector<T>) -> T {
        (a.transpose() * &self.g * a)[(0, 0)]
    }

    /// λG − W.
    pub fn slack(&self, lambda: T) -> DMatrix<T> {
        linalg::symmetrize(&(&self.g * lambda - &self.w))
    }
}

/// Dual certificate of the worst-case regret.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCertificate<T: Real> {
    pub alpha: T,
    pub lambda: T,
    pub mu: T,
    /// λΦᵀΦ − ΨᵀΨ − Φ_uᵀΦ_u + Q.
    pub slack: DMatrix<T>,
    pub slack_min_eig: T,
    pub attack: Option<DVector<T>>,
    /// aᵀWa at the extracted attack.
    pub achieved_regret: T,
    /// aᵀΦᵀΦa at the extracted attack.
    pub stealth: T,
    pub solver_iterations: usize,
}

fn metric_options<T: Real>() -> SdpOptions<T> {
    SdpOptions {
        tol_gap: lit(1e-11),
        tol_abs: lit(1e-14),
        tol_feas: lit(1e-11),
        max_iter: 300,
        ..SdpOptions::default()
    }
}

/// Solve min λα s.t. λG − W ⪰ 0, λ ≥ 0 and extract the worst-case attack.
pub fn regret_from_kernels<T: Real>(k: &RegretKernels<T>, spec: &StealthSpec<T>) -> Result<RegretCertificate<T>> {
    let na = k.g.nrows();
    if k.g.shape() != (na, na) || k.w.shape() != (na, na) {
        return Err(Error::Shape {
            what: "regret kernels",
            expected: format!("{na}x{na}"),
            got: format!("{:?}", k.w.shape()),
        });
    }
    let alpha = spec.alpha();
    let scale = k.w.norm().max(k.g.norm()).max(T::one());
    // λ = 0 already certifies when −W ⪰ 0.
    let at_zero = linalg::min_eigenvalue(&(-&k.w));
    let (lambda, iterations) = if na == 0 || at_zero >= -lit::<T>(1e-13) * scale {
        (T::zero(), 0)
    } else {
        let mut p = SdpProblem::new(1);
        p.set_cost(0, alpha);
        let b = p.add_block(na);
        p.add_coefficient_matrix(b, 0, 0, 0, &k.g);
        p.add_constant_matrix(b, 0, 0, &(-&k.w));
        p.add_lower_bound(0, T::zero());
        let sol = sdp::solve(&p, &metric_options())?;
        match sol.status {
            Status::Optimal => (sol.x[0].max(T::zero()), sol.iterations),
            Status::Infeasible => return Err(Error::UnboundedRegret),
            Status::Unbounded => {
                return Err(Error::Solver("regret dual reported unbounded".into()));
            }
            Status::MaxIter => {
                // Accept a nearly converged answer if the slack certifies it.
                let lam = sol.x[0].max(T::zero());
                if linalg::min_eigenvalue(&k.slack(lam)) >= -lit::<T>(1e-8) * scale {
                    (lam, sol.iterations)
                } else if linalg::min_eigenvalue(&k.g) <= lit::<T>(1e-12) * scale {
                    return Err(Error::UnboundedRegret);
                } else {
                    return Err(Error::Solver(format!(
                        "regret SDP stopped after {} iterations",
                        sol.iterations
                    )));
                }
            }
        }
    };
    let slack = k.slack(lambda);
    let slack_min_eig = linalg::min_eigenvalue(&slack);
    let mut cert = RegretCertificate {
        alpha,
        lambda,
        mu: lambda * alpha,
        slack,
        slack_min_eig,
        attack: None,
        achieved_regret: T::zero(),
        stealth: T::zero(),
        solver_iterations: iterations,
    };
    let a = worst_case_attack(&cert, k, spec)?;
    cert.achieved_regret = k.regret(&a);
    cert.stealth = k.stealth(&a);
    cert.attack = Some(a);
    Ok(cert)
}

/// Certificate for a response on a lifted plant.
pub fn regret_metric<T: Real>(
    omega: &SlsResponse<T>,
    lifted: &LiftedSystem<T>,
    spec: &StealthSpec<T>,
) -> Result<RegretCertificate<T>> {
    let (rho1, rho2) = sls::sls_residuals(omega, lifted)?;
    let tol = lit::<T>(sls::TOL_FEAS);
    if rho1 > tol || rho2 > tol {
        return Err(Error::NotAchievable {
            rho1: rho1.as_f64(),
            rho2: rho2.as_f64(),
            tol: sls::TOL_FEAS,
        });
    }
    let maps = sls::closed_loop_maps(omega, lifted)?;
    let clair = sls::clairvoyant(lifted);
    regret_from_kernels(&RegretKernels::new(&maps, &clair), spec)
}

fn canonical_sign<T: Real>(mut v: DVector<T>) -> DVector<T> {
    let big = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let thresh = big * lit::<T>(1e-12);
    if let Some(first) = v.iter().find(|x| x.abs() > thresh) {
        if *first < T::zero() {
            v.neg_mut();
        }
    }
    v
}

/// Attack attaining the certificate: a = t·v, v the bottom eigenvector of
/// the slack, scaled onto aᵀGa = α.
pub fn worst_case_attack<T: Real>(
    cert: &RegretCertificate<T>,
    k: &RegretKernels<T>,
    spec: &StealthSpec<T>,
) -> Result<DVector<T>> {
    let na = k.g.nrows();
    if cert.lambda <= T::zero() || na == 0 {
        return Ok(DVector::zeros(na));
    }
    let (_, v) = sdp::min_eig_vec(&cert.slack);
    let gv = (v.transpose() * &k.g * &v)[(0, 0)];
    let v = if gv <= lit(1e-10) {
        generalized_top_vector(k)?
    } else {
        v
    };
    let gv = (v.transpose() * &k.g * &v)[(0, 0)];
    if !(gv > T::zero()) {
        return Err(Error::Solver("worst-case direction has no stealth footprint".into()));
    }
    Ok(canonical_sign(v * (spec.alpha() / gv).sqrt()))
}

fn regularized_cholesky<T: Real>(g: &DMatrix<T>) -> Result<DMatrix<T>> {
    if let Some(c) = g.clone().cholesky() {
        let l = c.l();
        let dmin = (0..l.nrows()).fold(lit::<T>(f64::INFINITY), |m, i| m.min(l[(i, i)]));
        let dmax = (0..l.nrows()).fold(T::zero(), |m, i| m.max(l[(i, i)]));
        if dmin > dmax * lit::<T>(1e-7) {
            return Ok(l);
        }
    }
    let n = g.nrows();
    let shifted = g + DMatrix::identity(n, n) * lit::<T>(1e-10);
    shifted
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Singular("stealth Gram matrix".into()))
}

/// Top generalized eigenvector of W v = θ G v (G regularized if singular).
fn generalized_top_vector<T: Real>(k: &RegretKernels<T>) -> Result<DVector<T>> {
    let l = regularized_cholesky(&k.g)?;
    let linv_w = l
        .solve_lower_triangular(&k.w)
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_w.transpose())
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let (_, vecs) = sym_eigen(&linalg::symmetrize(&c));
    let top = vecs.column(vecs.ncols() - 1).into_owned();
    l.transpose()
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))
}

/// max aᵀWa s.t. aᵀGa ≤ α through the generalized eigenproblem.
pub fn qcqp_oracle<T: Real>(k: &RegretKernels<T>, spec: &StealthSpec<T>) -> Result<T> {
    let na = k.g.nrows();
    if na > ORACLE_MAX_DIM {
        return Err(Error::DimensionGuard {
            dim: na,
            limit: ORACLE_MAX_DIM,
        });
    }
    if na == 0 {
        return Ok(T::zero());
    }
    let l = regularized_cholesky(&k.g)?;
    let linv_w = l
        .solve_lower_triangular(&k.w)
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_w.transpose())
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let theta = linalg::max_eigenvalue(&linalg::symmetrize(&c));
    Ok(spec.alpha() * theta.max(T::zero()))
}

/// Oracle value for a response on a lifted plant.
pub fn qcqp_oracle_for<T: Real>(
    omega: &SlsResponse<T>,
    lifted: &LiftedSystem<T>,
    spec: &StealthSpec<T>,
) -> Result<T> {
    let maps = sls::closed_loop_maps(omega, lifted)?;
    let clair = sls::clairvoyant(lifted);
    qcqp_oracle(&RegretKernels::new(&maps, &clair), spec)
}
