//! SDP assembly for the synthesis programs.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{lit, Real};
use crate::sdp::SdpProblem;

use super::affine::AffineResponse;
use super::lifting::LiftingLayout;

/// Where each group of unknowns sits in the decision vector.
#[derive(Debug, Clone)]
pub(crate) struct VarMap {
    pub n_eta: usize,
    pub cliques: Vec<usize>,
    pub lambda: Option<usize>,
    pub lambda_inv: Option<usize>,
    pub lam11: Option<usize>,
    pub lam22: Option<usize>,
    /// Block indices of the clique blocks.
    pub clique_blocks: Vec<usize>,
    /// Block index of the Λ block.
    pub lambda_block: Option<usize>,
    pub dim: usize,
}

impl VarMap {
    fn new(n_eta: usize, layout: Option<&LiftingLayout>, lambda_vars: bool) -> Self {
        let mut next = n_eta;
        let mut cliques = Vec::new();
        if let Some(l) = layout {
            for c in 0..l.cliques.len() {
                cliques.push(next);
                next += l.clique_vars(c);
            }
        }
        let mut take = || {
            let v = next;
            next += 1;
            v
        };
        let (lambda, lambda_inv, lam11, lam22) = if lambda_vars {
            (Some(take()), Some(take()), Some(take()), Some(take()))
        } else {
            (None, None, None, None)
        };
        Self {
            n_eta,
            cliques,
            lambda,
            lambda_inv,
            lam11,
            lam22,
            clique_blocks: Vec::new(),
            lambda_block: None,
            dim: next,
        }
    }

    pub fn eta<T: Real>(&self, x: &DVector<T>) -> DVector<T> {
        x.rows(0, self.n_eta).into_owned()
    }

    /// Dense symmetric value of every clique's 𝓧 part.
    pub fn clique_values<T: Real>(&self, layout: &LiftingLayout, x: &DVector<T>) -> Vec<DMatrix<T>> {
        layout
            .cliques
            .iter()
            .zip(&self.cliques)
            .map(|(idx, &off)| {
                let s = idx.len();
                let mut m = DMatrix::zeros(s, s);
                for a in 0..s {
                    for b in 0..=a {
                        let v = x[off + LiftingLayout::packed(a, b)];
                        m[(a, b)] = v;
                        m[(b, a)] = v;
                    }
                }
                m
            })
            .collect()
    }
}

/// vec(Φ(η)) restricted to one clique, as (constant, per-η coefficients).
fn clique_phi<T: Real>(aff: &AffineResponse<T>, layout: &LiftingLayout, p: usize) -> (T, Vec<T>) {
    let (r, j) = layout.row_col(p);
    (aff.phi0[(r, j)], aff.phi_k.iter().map(|m| m[(r, j)]).collect())
}

/// Add [X_c, φ_c; φ_cᵀ, 1] ⪰ 0 for every clique.
fn add_cliques<T: Real>(p: &mut SdpProblem<T>, aff: &AffineResponse<T>, layout: &LiftingLayout, vm: &mut VarMap) {
    for (c, idx) in layout.cliques.iter().enumerate() {
        let s = idx.len();
        let b = p.add_block(s + 1);
        let off = vm.cliques[c];
        for a in 0..s {
            for bb in 0..=a {
                p.add_coefficient(b, off + LiftingLayout::packed(a, bb), a, bb, T::one());
            }
            let (c0, ck) = clique_phi(aff, layout, idx[a]);
            p.add_constant(b, s, a, c0);
            for (k, v) in ck.into_iter().enumerate() {
                p.add_coefficient(b, k, s, a, v);
            }
        }
        p.add_constant(b, s, s, T::one());
        vm.clique_blocks.push(b);
    }
}

/// Add coef·ℓ(𝓧) to the top-left corner of `block`.
fn add_ell<T: Real>(p: &mut SdpProblem<T>, block: usize, layout: &LiftingLayout, vm: &VarMap, coef: T) {
    for (c, idx) in layout.cliques.iter().enumerate() {
        let off = vm.cliques[c];
        for a in 0..idx.len() {
            for b in 0..=a {
                let (ra, ja) = layout.row_col(idx[a]);
                let (rb, jb) = layout.row_col(idx[b]);
                if ra == rb {
                    p.add_coefficient(block, off + LiftingLayout::packed(a, b), ja, jb, coef);
                }
            }
        }
    }
}

/// Place Ψ(η) and Φ_u(η) below the top-left N_a×N_a corner, starting at
/// rows `r_psi` and `r_phu`.
fn add_cost_maps<T: Real>(p: &mut SdpProblem<T>, block: usize, aff: &AffineResponse<T>, r_psi: usize, r_phu: usize) {
    p.add_constant_matrix(block, r_psi, 0, &aff.psi0);
    p.add_constant_matrix(block, r_phu, 0, &aff.phu0);
    for k in 0..aff.dim() {
        p.add_coefficient_matrix(block, k, r_psi, 0, &aff.psi_k[k]);
        p.add_coefficient_matrix(block, k, r_phu, 0, &aff.phu_k[k]);
    }
}

/// [Q + λ̄ℓ(𝓧), Ψᵀ, Φ_uᵀ; Ψ, I, 0; Φ_u, 0, I] ⪰ 0 plus the clique blocks.
pub(crate) fn fixed_lambda_program<T: Real>(
    aff: &AffineResponse<T>,
    layout: &LiftingLayout,
    lambda_bar: T,
) -> (SdpProblem<T>, VarMap) {
    let na = aff.phi0.ncols();
    let nz = aff.psi0.nrows();
    let nu = aff.phu0.nrows();
    let mut vm = VarMap::new(aff.dim(), Some(layout), false);
    let mut p = SdpProblem::new(vm.dim);
    let main = p.add_block(na + nz + nu);
    p.add_constant_matrix(main, 0, 0, &aff.clairvoyant().q);
    for i in na..na + nz + nu {
        p.add_constant(main, i, i, T::one());
    }
    add_ell(&mut p, main, layout, &vm, lambda_bar);
    add_cost_maps(&mut p, main, aff, na, na + nz);
    add_cliques(&mut p, aff, layout, &mut vm);
    (p, vm)
}

/// min λα over [λI, Ψᵀ, Φ_uᵀ; Ψ, I, 0; Φ_u, 0, I] ⪰ 0.
pub(crate) fn hinf_program<T: Real>(aff: &AffineResponse<T>, alpha: T) -> (SdpProblem<T>, usize) {
    let na = aff.phi0.ncols();
    let nz = aff.psi0.nrows();
    let nu = aff.phu0.nrows();
    let lam = aff.dim();
    let mut p = SdpProblem::new(lam + 1);
    p.set_cost(lam, alpha);
    let main = p.add_block(na + nz + nu);
    for i in 0..na {
        p.add_coefficient(main, lam, i, i, T::one());
    }
    for i in na..na + nz + nu {
        p.add_constant(main, i, i, T::one());
    }
    add_cost_maps(&mut p, main, aff, na, na + nz);
    (p, lam)
}

/// Joint program with free λ and the Λ lifting:
/// [λ_inv Q + ℓ(𝓧), Ψᵀ, Φ_uᵀ; Ψ, λI, 0; Φ_u, 0, λI] ⪰ 0,
/// [Λ11, 1, λ; 1, Λ22, λ_inv; λ, λ_inv, 1] ⪰ 0, cliques, λ ≥ floor.
pub(crate) fn joint_program<T: Real>(
    aff: &AffineResponse<T>,
    layout: &LiftingLayout,
    alpha: T,
    floor: T,
) -> (SdpProblem<T>, VarMap) {
    let na = aff.phi0.ncols();
    let nz = aff.psi0.nrows();
    let nu = aff.phu0.nrows();
    let mut vm = VarMap::new(aff.dim(), Some(layout), true);
    let (lam, lam_inv, l11, l22) = (
        vm.lambda.unwrap(),
        vm.lambda_inv.unwrap(),
        vm.lam11.unwrap(),
        vm.lam22.unwrap(),
    );
    let mut p = SdpProblem::new(vm.dim);
    p.set_cost(lam, alpha);
    let main = p.add_block(na + nz + nu);
    p.add_coefficient_matrix(main, lam_inv, 0, 0, &aff.clairvoyant().q);
    for i in na..na + nz + nu {
        p.add_coefficient(main, lam, i, i, T::one());
    }
    add_ell(&mut p, main, layout, &vm, T::one());
    add_cost_maps(&mut p, main, aff, na, na + nz);
    add_cliques(&mut p, aff, layout, &mut vm);
    let lb = p.add_block(3);
    p.add_coefficient(lb, l11, 0, 0, T::one());
    p.add_constant(lb, 1, 0, T::one());
    p.add_coefficient(lb, l22, 1, 1, T::one());
    p.add_coefficient(lb, lam, 2, 0, T::one());
    p.add_coefficient(lb, lam_inv, 2, 1, T::one());
    p.add_constant(lb, 2, 2, T::one());
    vm.lambda_block = Some(lb);
    p.add_lower_bound(lam, floor);
    (p, vm)
}

/// Cost Σ_c tr(X_c), the trace surrogate of the lifting.
pub(crate) fn trace_cost<T: Real>(layout: &LiftingLayout, vm: &VarMap, dim: usize, weight: T) -> DVector<T> {
    let mut c = DVector::zeros(dim);
    for (cl, idx) in layout.cliques.iter().enumerate() {
        for a in 0..idx.len() {
            c[vm.cliques[cl] + LiftingLayout::packed(a, a)] += weight;
        }
    }
    c
}

/// Cost Σ_c tr(B_c) − v_cᵀB_cv_c with B_c the augmented clique block; the
/// constant (1,1) corner is dropped.
pub(crate) fn irm_cost<T: Real>(
    aff: &AffineResponse<T>,
    layout: &LiftingLayout,
    vm: &VarMap,
    dirs: &[DVector<T>],
    dim: usize,
    weight: T,
) -> DVector<T> {
    let two = lit::<T>(2.0);
    let mut c = DVector::zeros(dim);
    for (cl, idx) in layout.cliques.iter().enumerate() {
        let v = &dirs[cl];
        let s = idx.len();
        let off = vm.cliques[cl];
        for a in 0..s {
            c[off + LiftingLayout::packed(a, a)] += weight * (T::one() - v[a] * v[a]);
            for b in 0..a {
                c[off + LiftingLayout::packed(a, b)] -= weight * two * v[a] * v[b];
            }
            // φ_a sits at (s, a) and (a, s).
            let (_, ck) = clique_phi(aff, layout, idx[a]);
            let w = -weight * two * v[s] * v[a];
            for (k, val) in ck.into_iter().enumerate() {
                c[k] += w * val;
            }
        }
    }
    c
}

/// Penalty tr(Λ_aug) − uᵀΛ_aug u on the 3×3 λ lifting, constants dropped.
pub(crate) fn lambda_penalty<T: Real>(vm: &VarMap, u: &DVector<T>, c: &mut DVector<T>, weight: T) {
    let two = lit::<T>(2.0);
    let (lam, lam_inv, l11, l22) = (
        vm.lambda.unwrap(),
        vm.lambda_inv.unwrap(),
        vm.lam11.unwrap(),
        vm.lam22.unwrap(),
    );
    c[l11] += weight * (T::one() - u[0] * u[0]);
    c[l22] += weight * (T::one() - u[1] * u[1]);
    c[lam] -= weight * two * u[2] * u[0];
    c[lam_inv] -= weight * two * u[2] * u[1];
}

/// Value of an augmented clique block at a solution.
pub(crate) fn clique_block_value<T: Real>(
    aff: &AffineResponse<T>,
    layout: &LiftingLayout,
    c: usize,
    xc: &DMatrix<T>,
    eta: &DVector<T>,
) -> DMatrix<T> {
    let idx = &layout.cliques[c];
    let s = idx.len();
    let mut m = DMatrix::zeros(s + 1, s + 1);
    m.view_mut((0, 0), (s, s)).copy_from(xc);
    for (a, &p) in idx.iter().enumerate() {
        let (c0, ck) = clique_phi(aff, layout, p);
        let v = ck.iter().zip(eta.iter()).fold(c0, |acc, (x, y)| acc + *x * *y);
        m[(s, a)] = v;
        m[(a, s)] = v;
    }
    m[(s, s)] = T::one();
    m
}
