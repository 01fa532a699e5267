//! Achievable responses as an affine family in a free causal matrix.
//!
//! Every Ω satisfying both achievability identities is
//! R = P0 + Gu·L·CyP0, N = Gu·L, M = L·CyP0 with P0 = (I − 𝒵𝒜)⁻¹ and
//! Gu = P0𝒵ℬ_u, for a block-lower-triangular L. Topology zeros on R, N, M
//! become linear equalities on L's entries and are removed by a nullspace
//! basis, so the family below is always exact.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lifted::LiftedSystem;
use crate::linalg;
use crate::scalar::{lit, Real};
use crate::sls::{self, ClairvoyantData, ClosedLoopMaps, Component, SlsResponse, TopologyMask};

/// Ω(η) = Ω(L0 + Σ η_k L_k) together with its closed-loop maps.
#[derive(Debug, Clone)]
pub struct AffineResponse<T: Real> {
    lifted: LiftedSystem<T>,
    topology: Option<TopologyMask>,
    l0: DMatrix<T>,
    l_basis: Vec<DMatrix<T>>,
    gu: DMatrix<T>,
    cyp0: DMatrix<T>,
    /// 𝒞_y P0 ℬ_a + 𝒟_ya.
    h: DMatrix<T>,
    clair: ClairvoyantData<T>,
    pub(crate) phi0: DMatrix<T>,
    pub(crate) phi_k: Vec<DMatrix<T>>,
    pub(crate) psi0: DMatrix<T>,
    pub(crate) psi_k: Vec<DMatrix<T>>,
    pub(crate) phu0: DMatrix<T>,
    pub(crate) phu_k: Vec<DMatrix<T>>,
}

impl<T: Real> AffineResponse<T> {
    pub fn new(lifted: &LiftedSystem<T>, mask: Option<&TopologyMask>) -> Result<Self> {
        if let Some(m) = mask {
            m.validate(lifted.dims)?;
        }
        let d = lifted.dims;
        let (nu, ny) = (lifted.nu(), lifted.ny());
        let p0 = &lifted.resolvent;
        let gu = p0 * &lifted.z * &lifted.bu;
        let cyp0 = &lifted.cy * p0;
        let h = &cyp0 * &lifted.ba + &lifted.dya;

        // Free entries of L.
        let mut free = Vec::new();
        for j in 0..ny {
            for i in 0..nu {
                if sls::entry_allowed(Component::L, i, j, d, mask) {
                    free.push((i, j));
                }
            }
        }
        let unit = |&(i, j): &(usize, usize)| {
            let mut m = DMatrix::zeros(nu, ny);
            m[(i, j)] = T::one();
            m
        };
        let mut l0 = DMatrix::zeros(nu, ny);
        let mut l_basis: Vec<DMatrix<T>> = free.iter().map(unit).collect();

        if let Some(m) = mask {
            let (rows, rhs) = topology_constraints(lifted, &gu, &cyp0, &free, m);
            if !rows.is_empty() {
                let a = DMatrix::from_fn(rows.len(), free.len(), |r, c| rows[r][c]);
                let b = DVector::from_vec(rhs);
                let (basis, _) = linalg::nullspace(&a, lit(1e-10));
                let theta = linalg::lstsq(&a, &b);
                let res = (&a * &theta - &b).norm();
                if res > lit::<T>(1e-9) * b.norm().max(T::one()) {
                    return Err(Error::Infeasible(
                        "no achievable response satisfies the topology mask".into(),
                    ));
                }
                for (k, &(i, j)) in free.iter().enumerate() {
                    l0[(i, j)] = theta[k];
                }
                l_basis = (0..basis.ncols())
                    .map(|c| {
                        let mut m = DMatrix::zeros(nu, ny);
                        for (k, &(i, j)) in free.iter().enumerate() {
                            m[(i, j)] = basis[(k, c)];
                        }
                        m
                    })
                    .collect();
            }
        }

        let clair = sls::clairvoyant(lifted);
        let cygu = &lifted.cy * &gu;
        let fb = &clair.fb;
        let e = &clair.e;
        let phi_of = |l: &DMatrix<T>| &cygu * l * &h;
        let psi_of = |l: &DMatrix<T>| e * l * &h;
        let phu_of = |l: &DMatrix<T>| l * &h;
        let phi0 = &h + phi_of(&l0);
        let psi0 = fb + psi_of(&l0);
        let phu0 = phu_of(&l0);
        let phi_k = l_basis.iter().map(phi_of).collect();
        let psi_k = l_basis.iter().map(psi_of).collect();
        let phu_k = l_basis.iter().map(phu_of).collect();
        Ok(Self {
            lifted: lifted.clone(),
            topology: mask.cloned(),
            l0,
            l_basis,
            gu,
            cyp0,
            h,
            clair,
            phi0,
            phi_k,
            psi0,
            psi_k,
            phu0,
            phu_k,
        })
    }

    /// Number of free parameters η.
    pub fn dim(&self) -> usize {
        self.l_basis.len()
    }

    pub fn lifted(&self) -> &LiftedSystem<T> {
        &self.lifted
    }

    pub fn clairvoyant(&self) -> &ClairvoyantData<T> {
        &self.clair
    }

    /// Attack-to-measurement map of the open loop, 𝒞_y P0 ℬ_a + 𝒟_ya.
    pub fn open_loop_phi(&self) -> &DMatrix<T> {
        &self.h
    }

    pub fn free_matrix(&self, eta: &DVector<T>) -> DMatrix<T> {
        let mut l = self.l0.clone();
        for (k, b) in self.l_basis.iter().enumerate() {
            if eta[k] != T::zero() {
                l += b * eta[k];
            }
        }
        l
    }

    pub fn response(&self, eta: &DVector<T>) -> SlsResponse<T> {
        let l = self.free_matrix(eta);
        let n = &self.gu * &l;
        let m = &l * &self.cyp0;
        let r = &self.lifted.resolvent + &n * &self.cyp0;
        SlsResponse {
            horizon: self.lifted.horizon,
            dims: self.lifted.dims,
            r,
            n,
            m,
            l,
            topology: self.topology.clone(),
        }
    }

    pub fn maps(&self, eta: &DVector<T>) -> ClosedLoopMaps<T> {
        let combine = |base: &DMatrix<T>, parts: &[DMatrix<T>]| {
            let mut out = base.clone();
            for (k, p) in parts.iter().enumerate() {
                if eta[k] != T::zero() {
                    out += p * eta[k];
                }
            }
            out
        };
        let l = self.free_matrix(eta);
        let phi_x = &self.lifted.resolvent * &self.lifted.ba + &self.gu * &l * &self.h;
        ClosedLoopMaps {
            phi_x,
            phi_u: combine(&self.phu0, &self.phu_k),
            phi: combine(&self.phi0, &self.phi_k),
            psi: combine(&self.psi0, &self.psi_k),
        }
    }

    /// Column-major indices of vec(Φ) that vanish for every η.
    pub fn structural_zeros(&self) -> Vec<usize> {
        let (ny, na) = self.phi0.shape();
        let scale = self
            .phi_k
            .iter()
            .chain(std::iter::once(&self.phi0))
            .fold(T::one(), |m, p| m.max(p.amax()));
        let tol = scale * lit::<T>(1e-13);
        let mut out = Vec::new();
        for j in 0..na {
            for r in 0..ny {
                let zero = self.phi0[(r, j)].abs() <= tol
                    && self.phi_k.iter().all(|p| p[(r, j)].abs() <= tol);
                if zero {
                    out.push(j * ny + r);
                }
            }
        }
        out
    }
}

/// Linear equalities on the free entries of L encoding topology zeros of
/// R, N and M inside the causal pattern.
fn topology_constraints<T: Real>(
    lifted: &LiftedSystem<T>,
    gu: &DMatrix<T>,
    cyp0: &DMatrix<T>,
    free: &[(usize, usize)],
    mask: &TopologyMask,
) -> (Vec<Vec<T>>, Vec<T>) {
    let d = lifted.dims;
    let (nx, nu, ny) = (lifted.nx(), lifted.nu(), lifted.ny());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let tol = lit::<T>(1e-14);
    let mut push = |coeffs: Vec<T>, constant: T| {
        if coeffs.iter().any(|c| c.abs() > tol) || constant.abs() > tol {
            rows.push(coeffs);
            rhs.push(-constant);
        }
    };
    let forbidden = |c: Component, i: usize, j: usize| {
        let (br, bc) = sls::block_sizes(c, d);
        sls::is_causal(i, j, br, bc) && !sls::entry_allowed(c, i, j, d, Some(mask))
    };
    if mask.r.is_some() {
        for j in 0..nx {
            for i in 0..nx {
                if forbidden(Component::R, i, j) {
                    let coeffs = free.iter().map(|&(a, b)| gu[(i, a)] * cyp0[(b, j)]).collect();
                    push(coeffs, lifted.resolvent[(i, j)]);
                }
            }
        }
    }
    if mask.n.is_some() {
        for j in 0..ny {
            for i in 0..nx {
                if forbidden(Component::N, i, j) {
                    let coeffs = free
                        .iter()
                        .map(|&(a, b)| if b == j { gu[(i, a)] } else { T::zero() })
                        .collect();
                    push(coeffs, T::zero());
                }
            }
        }
    }
    if mask.m.is_some() {
        for j in 0..nx {
            for i in 0..nu {
                if forbidden(Component::M, i, j) {
                    let coeffs = free
                        .iter()
                        .map(|&(a, b)| if a == i { cyp0[(b, j)] } else { T::zero() })
                        .collect();
                    push(coeffs, T::zero());
                }
            }
        }
    }
    (rows, rhs)
}
