//! System-level parameterization: responses, achievability, gain extraction
//! and the clairvoyant benchmark.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{Dims, LiftedSystem, LtvSystem, Trajectory};
use crate::linalg;
use crate::scalar::Real;

/// Default achievability tolerance for [`extract_gain`].
pub const TOL_FEAS: f64 = 1e-6;

/// Which of the four response blocks a pattern refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    R,
    N,
    M,
    L,
}

/// Per-step allowed-entry pattern, replicated over every causal block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub rows: usize,
    pub cols: usize,
    /// Row-major flags.
    pub allowed: Vec<bool>,
}

impl SparsityPattern {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Pattern from an adjacency list: row `i` may read the listed columns.
    pub fn from_adjacency(rows: usize, cols: usize, adjacency: &[(usize, Vec<usize>)]) -> Result<Self> {
        let mut allowed = vec![false; rows * cols];
        for (i, js) in adjacency {
            for &j in js {
                if *i >= rows || j >= cols {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency entry ({i}, {j}) outside {rows}x{cols}"
                    )));
                }
                allowed[i * cols + j] = true;
            }
        }
        Ok(Self {
            rows,
            cols,
            allowed,
        })
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[(i % self.rows) * self.cols + (j % self.cols)]
    }
}

/// Optional topology restrictions on each response block.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyMask {
    pub r: Option<SparsityPattern>,
    pub n: Option<SparsityPattern>,
    pub m: Option<SparsityPattern>,
    pub l: Option<SparsityPattern>,
}

impl TopologyMask {
    pub fn pattern(&self, c: Component) -> Option<&SparsityPattern> {
        match c {
            Component::R => self.r.as_ref(),
            Component::N => self.n.as_ref(),
            Component::M => self.m.as_ref(),
            Component::L => self.l.as_ref(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_none() && self.n.is_none() && self.m.is_none() && self.l.is_none()
    }

    /// Check per-step pattern sizes against the plant.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        let want = [
            (Component::R, dims.n, dims.n),
            (Component::N, dims.n, dims.p_y),
            (Component::M, dims.m_u, dims.n),
            (Component::L, dims.m_u, dims.p_y),
        ];
        for (c, r, k) in want {
            if let Some(p) = self.pattern(c) {
                if p.rows != r || p.cols != k || p.allowed.len() != r * k {
                    return Err(Error::Shape {
                        what: "topology pattern",
                        expected: format!("{c:?}: {r}x{k}"),
                        got: format!("{}x{}", p.rows, p.cols),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Block sizes (rows, cols) of a component for the given plant.
pub fn block_sizes(c: Component, dims: Dims) -> (usize, usize) {
    match c {
        Component::R => (dims.n, dims.n),
        Component::N => (dims.n, dims.p_y),
        Component::M => (dims.m_u, dims.n),
        Component::L => (dims.m_u, dims.p_y),
    }
}

/// Entry (i, j) lies on or below the block diagonal.
#[inline]
pub fn is_causal(i: usize, j: usize, block_rows: usize, block_cols: usize) -> bool {
    if block_rows == 0 || block_cols == 0 {
        return true;
    }
    j / block_cols <= i / block_rows
}

/// Whether entry (i, j) of component `c` may be nonzero.
pub fn entry_allowed(c: Component, i: usize, j: usize, dims: Dims, mask: Option<&TopologyMask>) -> bool {
    let (br, bc) = block_sizes(c, dims);
    if !is_causal(i, j, br, bc) {
        return false;
    }
    match mask.and_then(|m| m.pattern(c)) {
        Some(p) => {
            if c == Component::R && i / br == j / bc && i % br == j % bc {
                // identity diagonal of R is structural
                true
            } else {
                p.allows(i, j)
            }
        }
        None => true,
    }
}

/// Closed-loop system response Ω = (R, N, M, L).
#[derive(Debug, Clone, PartialEq)]
pub struct SlsResponse<T: Real> {
    pub horizon: usize,
    pub dims: Dims,
    pub r: DMatrix<T>,
    pub n: DMatrix<T>,
    pub m: DMatrix<T>,
    pub l: DMatrix<T>,
    pub topology: Option<TopologyMask>,
}

impl<T: Real> SlsResponse<T> {
    pub fn component(&self, c: Component) -> &DMatrix<T> {
        match c {
            Component::R => &self.r,
            Component::N => &self.n,
            Component::M => &self.m,
            Component::L => &self.l,
        }
    }

    /// Largest magnitude among entries outside the causal/topology support,
    /// plus deviation of R's diagonal blocks from identity.
    pub fn support_violation(&self) -> T {
        let mut worst = T::zero();
        for c in [Component::R, Component::N, Component::M, Component::L] {
            let m = self.component(c);
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if !entry_allowed(c, i, j, self.dims, self.topology.as_ref()) {
                        worst = worst.max(m[(i, j)].abs());
                    }
                }
            }
        }
        let n = self.dims.n;
        for k in 0..=self.horizon {
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { T::one() } else { T::zero() };
                    worst = worst.max((self.r[(k * n + i, k * n + j)] - target).abs());
                }
            }
        }
        worst
    }

    /// Frobenius norm of the stacked response.
    pub fn norm(&self) -> T {
        (self.r.norm_squared() + self.n.norm_squared() + self.m.norm_squared() + self.l.norm_squared())
            .sqrt()
    }
}

fn check_response_shape<T: Real>(omega: &SlsResponse<T>, lifted: &LiftedSystem<T>) -> Result<()> {
    let (nx, nu, ny) = (lifted.nx(), lifted.nu(), lifted.ny());
    let ok = omega.r.shape() == (nx, nx)
        && omega.n.shape() == (nx, ny)
        && omega.m.shape() == (nu, nx)
        && omega.l.shape() == (nu, ny);
    if ok {
        Ok(())
    } else {
        Err(Error::Shape {
            what: "system response",
            expected: format!("R {nx}x{nx}, N {nx}x{ny}, M {nu}x{nx}, L {nu}x{ny}"),
            got: format!(
                "R {:?}, N {:?}, M {:?}, L {:?}",
                omega.r.shape(),
                omega.n.shape(),
                omega.m.shape(),
                omega.l.shape()
            ),
        })
    }
}

/// Frobenius residuals of the two achievability identities.
pub fn sls_residuals<T: Real>(omega: &SlsResponse<T>, lifted: &LiftedSystem<T>) -> Result<(T, T)> {
    check_response_shape(omega, lifted)?;
    let imza = lifted.i_minus_za();
    let zbu = &lifted.z * &lifted.bu;
    // [I−ZA, −ZBu][R N; M L] − [I 0]
    let mut top_r = &imza * &omega.r - &zbu * &omega.m;
    for i in 0..top_r.nrows() {
        top_r[(i, i)] -= T::one();
    }
    let top_n = &imza * &omega.n - &zbu * &omega.l;
    let rho1 = (top_r.norm_squared() + top_n.norm_squared()).sqrt();
    // [R N; M L][I−ZA; −Cy] − [I; 0]
    let mut left_r = &omega.r * &imza - &omega.n * &lifted.cy;
    for i in 0..left_r.nrows() {
        left_r[(i, i)] -= T::one();
    }
    let left_m = &omega.m * &imza - &omega.l * &lifted.cy;
    let rho2 = (left_r.norm_squared() + left_m.norm_squared()).sqrt();
    Ok((rho1, rho2))
}

fn check_gain<T: Real>(k: &DMatrix<T>, lifted: &LiftedSystem<T>) -> Result<()> {
    let (nu, ny) = (lifted.nu(), lifted.ny());
    if k.shape() != (nu, ny) {
        return Err(Error::Shape {
            what: "gain",
            expected: format!("{nu}x{ny}"),
            got: format!("{}x{}", k.nrows(), k.ncols()),
        });
    }
    if !linalg::all_finite(k) {
        return Err(Error::NonFinite("gain"));
    }
    let d = lifted.dims;
    for j in 0..ny {
        for i in 0..nu {
            if !is_causal(i, j, d.m_u, d.p_y) && k[(i, j)] != T::zero() {
                return Err(Error::NotCausal { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Response produced by a causal output-feedback gain u = K y.
pub fn response_from_gain<T: Real>(k: &DMatrix<T>, lifted: &LiftedSystem<T>) -> Result<SlsResponse<T>> {
    check_gain(k, lifted)?;
    let nx = lifted.nx();
    let zbu = &lifted.z * &lifted.bu;
    let closed = lifted.i_minus_za() - &zbu * k * &lifted.cy;
    let r = linalg::left_solve_unit_lower(&closed, &DMatrix::identity(nx, nx), lifted.dims.n.max(1))?;
    let n = &r * &zbu * k;
    let m = k * &lifted.cy * &r;
    let l = k + &m * &zbu * k;
    Ok(SlsResponse {
        horizon: lifted.horizon,
        dims: lifted.dims,
        r,
        n,
        m,
        l,
        topology: None,
    })
}

/// K = L − M R⁻¹ N, after checking achievability.
pub fn extract_gain<T: Real>(omega: &SlsResponse<T>, lifted: &LiftedSystem<T>, tol_feas: T) -> Result<DMatrix<T>> {
    let (rho1, rho2) = sls_residuals(omega, lifted)?;
    if rho1 > tol_feas || rho2 > tol_feas || !rho1.is_finite() || !rho2.is_finite() {
        return Err(Error::NotAchievable {
            rho1: rho1.as_f64(),
            rho2: rho2.as_f64(),
            tol: tol_feas.as_f64(),
        });
    }
    let rinv_n = linalg::left_solve_unit_lower(&omega.r, &omega.n, lifted.dims.n.max(1))?;
    let mut k = &omega.l - &omega.m * rinv_n;
    let d = lifted.dims;
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            if !is_causal(i, j, d.m_u, d.p_y) {
                k[(i, j)] = T::zero();
            }
        }
    }
    Ok(k)
}

/// Attack-to-signal maps of a closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMaps<T: Real> {
    pub phi_x: DMatrix<T>,
    pub phi_u: DMatrix<T>,
    pub phi: DMatrix<T>,
    pub psi: DMatrix<T>,
}

impl<T: Real> ClosedLoopMaps<T> {
    /// J = ‖Ψa‖² + ‖Φ_u a‖².
    pub fn cost(&self, a: &DVector<T>) -> T {
        (&self.psi * a).norm_squared() + (&self.phi_u * a).norm_squared()
    }

    /// ‖Φa‖², the stealth level of an attack.
    pub fn stealth(&self, a: &DVector<T>) -> T {
        (&self.phi * a).norm_squared()
    }

    /// ΦᵀΦ.
    pub fn gram(&self) -> DMatrix<T> {
        self.phi.tr_mul(&self.phi)
    }

    /// ΨᵀΨ + Φ_uᵀΦ_u.
    pub fn cost_kernel(&self) -> DMatrix<T> {
        linalg::symmetrize(&(self.psi.tr_mul(&self.psi) + self.phi_u.tr_mul(&self.phi_u)))
    }
}

pub fn closed_loop_maps<T: Real>(omega: &SlsResponse<T>, lifted: &LiftedSystem<T>) -> Result<ClosedLoopMaps<T>> {
    check_response_shape(omega, lifted)?;
    let phi_x = &omega.r * &lifted.ba + &omega.n * &lifted.dya;
    let phi_u = &omega.m * &lifted.ba + &omega.l * &lifted.dya;
    let phi = &lifted.cy * &phi_x + &lifted.dya;
    let psi = &lifted.cz * &phi_x + &lifted.dzu * &phi_u;
    Ok(ClosedLoopMaps {
        phi_x,
        phi_u,
        phi,
        psi,
    })
}

/// Quantities of the non-causal (clairvoyant) benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ClairvoyantData<T: Real> {
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
    /// F·ℬ_a.
    pub fb: DMatrix<T>,
    pub q: DMatrix<T>,
}

impl<T: Real> ClairvoyantData<T> {
    /// J*(a) = aᵀQa.
    pub fn optimal_cost(&self, a: &DVector<T>) -> T {
        (a.transpose() * &self.q * a)[(0, 0)]
    }

    /// ‖E u + Fℬ_a a‖² + ‖u‖².
    pub fn cost(&self, u: &DVector<T>, a: &DVector<T>) -> T {
        (&self.e * u + &self.fb * a).norm_squared() + u.norm_squared()
    }
}

pub fn clairvoyant<T: Real>(lifted: &LiftedSystem<T>) -> ClairvoyantData<T> {
    let f = &lifted.cz * &lifted.resolvent;
    let e = &f * &lifted.z * &lifted.bu + &lifted.dzu;
    let fb = &f * &lifted.ba;
    let nz = lifted.nz();
    let gram = DMatrix::identity(nz, nz) + &e * e.transpose();
    let chol = gram.cholesky().expect("I + E Eᵀ is positive definite");
    let solved = chol.solve(&fb);
    let q = linalg::symmetrize(&(fb.transpose() * solved));
    ClairvoyantData { e, f, fb, q }
}

/// u_nc(a) = −(I + EᵀE)⁻¹ Eᵀ F ℬ_a a.
pub fn noncausal_input<T: Real>(data: &ClairvoyantData<T>, a: &DVector<T>) -> DVector<T> {
    let nu = data.e.ncols();
    let gram = DMatrix::identity(nu, nu) + data.e.tr_mul(&data.e);
    let rhs = -(data.e.transpose() * (&data.fb * a));
    gram.cholesky()
        .expect("I + EᵀE is positive definite")
        .solve(&rhs)
}

/// Closed-loop simulation of u = K y driven by a stacked attack
/// a = [x0; a_0; …; a_{T−1}]. The nominal output is the run with a = 0.
pub fn simulate_closed_loop<T: Real>(
    sys: &LtvSystem<T>,
    k: &DMatrix<T>,
    a_lifted: &DVector<T>,
) -> Result<Trajectory<T>> {
    let t = sys.horizon();
    let d = sys.dims();
    let na = d.n + t * d.m_a;
    if a_lifted.len() != na {
        return Err(Error::Shape {
            what: "stacked attack",
            expected: format!("{na}"),
            got: format!("{}", a_lifted.len()),
        });
    }
    if k.shape() != ((t + 1) * d.m_u, (t + 1) * d.p_y) {
        return Err(Error::Shape {
            what: "gain",
            expected: format!("{}x{}", (t + 1) * d.m_u, (t + 1) * d.p_y),
            got: format!("{}x{}", k.nrows(), k.ncols()),
        });
    }
    let (x0, a) = sys.unstack_attack(a_lifted);
    let run = |x0: &DVector<T>, a: &[DVector<T>]| {
        let mut x = vec![x0.clone()];
        let mut y: Vec<DVector<T>> = Vec::with_capacity(t + 1);
        let mut u: Vec<DVector<T>> = Vec::with_capacity(t + 1);
        let mut z = Vec::with_capacity(t + 1);
        for step in 0..=t {
            let mut yk = sys.cy(step) * &x[step];
            if step < t {
                yk += sys.dya(step) * &a[step];
            }
            y.push(yk);
            let mut uk = DVector::zeros(d.m_u);
            for (j, yj) in y.iter().enumerate() {
                uk += k.view((step * d.m_u, j * d.p_y), (d.m_u, d.p_y)) * yj;
            }
            z.push(sys.cz(step) * &x[step] + sys.dzu(step) * &uk);
            if step < t {
                let next = sys.a(step) * &x[step] + sys.bu(step) * &uk + sys.ba(step) * &a[step];
                x.push(next);
            }
            u.push(uk);
        }
        (x, u, y, z)
    };
    let (x, u, y, z) = run(&x0, &a);
    let zero_a = vec![DVector::zeros(d.m_a); t];
    let (_, _, y_nominal, _) = run(&DVector::zeros(d.n), &zero_a);
    Ok(Trajectory {
        x,
        u,
        y,
        z,
        y_nominal,
    })
}

/// Open-loop response Ω(K = 0).
pub fn open_loop_response<T: Real>(lifted: &LiftedSystem<T>) -> SlsResponse<T> {
    let (nx, nu, ny) = (lifted.nx(), lifted.nu(), lifted.ny());
    SlsResponse {
        horizon: lifted.horizon,
        dims: lifted.dims,
        r: lifted.resolvent.clone(),
        n: DMatrix::zeros(nx, ny),
        m: DMatrix::zeros(nu, nx),
        l: DMatrix::zeros(nu, ny),
        topology: None,
    }
}
