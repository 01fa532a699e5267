//! Layout of the rank-one lifting of vec(Φ) and rank checks.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, sym_eigen};
use crate::scalar::{lit, Real};

/// How the lifted matrix 𝓧 is represented in the SDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftingMode {
    /// One PSD clique per row of Φ. ℓ(𝓧) only reads entries sharing a row,
    /// so this is an exact reformulation of the full lifting.
    Chordal,
    /// A single dense (q+1)×(q+1) block.
    Full,
}

/// Entries of 𝓧 and of the augmented column forced to zero by structural
/// zeros of vec(Φ).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedZeroPattern {
    /// Ordered (row, col) positions of 𝓧.
    pub x_entries: Vec<(usize, usize)>,
    /// Positions of the augmented vec(Φ) column.
    pub vec_entries: Vec<usize>,
}

impl LiftedZeroPattern {
    pub fn diagonal_count(&self) -> usize {
        self.x_entries.iter().filter(|(i, j)| i == j).count()
    }
}

/// Every row and column of 𝓧 indexed by a structurally zero entry of vec(Φ)
/// is zero as well.
pub fn propagate_sparsity(zero: &[usize], q: usize) -> LiftedZeroPattern {
    let set: BTreeSet<usize> = zero.iter().copied().filter(|&i| i < q).collect();
    let mut x_entries = Vec::new();
    for i in 0..q {
        for j in 0..q {
            if set.contains(&i) || set.contains(&j) {
                x_entries.push((i, j));
            }
        }
    }
    LiftedZeroPattern {
        x_entries,
        vec_entries: set.into_iter().collect(),
    }
}

/// Clique structure of the lifting over vec(Φ) (column-major, index
/// j·N_y + r for row r and column j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftingLayout {
    pub ny: usize,
    pub na: usize,
    pub mode: LiftingMode,
    /// Eliminated vec(Φ) indices.
    pub zeros: Vec<usize>,
    /// Surviving vec(Φ) indices per clique, ascending.
    pub cliques: Vec<Vec<usize>>,
}

impl LiftingLayout {
    pub fn new(ny: usize, na: usize, mode: LiftingMode, zeros: &[usize]) -> Self {
        let zero: BTreeSet<usize> = zeros.iter().copied().collect();
        let keep = |idx: &usize| !zero.contains(idx);
        let cliques = match mode {
            LiftingMode::Chordal => (0..ny)
                .map(|r| (0..na).map(|j| j * ny + r).filter(keep).collect::<Vec<_>>())
                .filter(|c| !c.is_empty())
                .collect(),
            LiftingMode::Full => {
                let all: Vec<usize> = (0..ny * na).filter(keep).collect();
                if all.is_empty() {
                    Vec::new()
                } else {
                    vec![all]
                }
            }
        };
        Self {
            ny,
            na,
            mode,
            zeros: zero.into_iter().collect(),
            cliques,
        }
    }

    pub fn q(&self) -> usize {
        self.ny * self.na
    }

    /// (row of Φ, column of Φ) of a vec index.
    #[inline]
    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx % self.ny, idx / self.ny)
    }

    /// Number of scalar unknowns of clique `c` (lower triangle).
    pub fn clique_vars(&self, c: usize) -> usize {
        let s = self.cliques[c].len();
        s * (s + 1) / 2
    }

    pub fn total_vars(&self) -> usize {
        (0..self.cliques.len()).map(|c| self.clique_vars(c)).sum()
    }

    /// Offset of entry (a, b), a ≥ b, inside a clique's packed variables.
    #[inline]
    pub fn packed(a: usize, b: usize) -> usize {
        debug_assert!(a >= b);
        a * (a + 1) / 2 + b
    }
}

/// Values of the lifted variables at a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedVars<T: Real> {
    /// Completed q×q lifting.
    pub x: DMatrix<T>,
    pub vec_phi: DVector<T>,
    /// Λ when the λ lifting is active.
    pub lambda_lift: Option<DMatrix<T>>,
    /// (λ, λ_inv) when the λ lifting is active.
    pub lambda_pair: Option<(T, T)>,
}

impl<T: Real> LiftedVars<T> {
    /// Build the completion φφᵀ + Σ_c embed(X_c − φ_cφ_cᵀ) from clique values.
    pub fn from_cliques(layout: &LiftingLayout, vec_phi: DVector<T>, cliques: &[DMatrix<T>]) -> Self {
        let q = layout.q();
        let mut x = &vec_phi * vec_phi.transpose();
        for zi in &layout.zeros {
            x.row_mut(*zi).fill(T::zero());
            x.column_mut(*zi).fill(T::zero());
        }
        for (idx, xc) in layout.cliques.iter().zip(cliques) {
            for (a, &p) in idx.iter().enumerate() {
                for (b, &r) in idx.iter().enumerate() {
                    x[(p, r)] += xc[(a, b)] - vec_phi[p] * vec_phi[r];
                }
            }
        }
        debug_assert_eq!(x.nrows(), q);
        Self {
            x,
            vec_phi,
            lambda_lift: None,
            lambda_pair: None,
        }
    }

    /// [𝓧, vec(Φ); vec(Φ)ᵀ, 1].
    pub fn augmented(&self) -> DMatrix<T> {
        augment(&self.x, &self.vec_phi)
    }

    /// σ₂/σ₁ of the augmented lifting.
    pub fn rank_ratio(&self) -> T {
        rank_ratio(&self.augmented())
    }

    /// ℓ(𝓧)_{jk} = Σ_r 𝓧_{(r,j),(r,k)}.
    pub fn ell(&self, ny: usize) -> DMatrix<T> {
        let na = self.vec_phi.len() / ny.max(1);
        DMatrix::from_fn(na, na, |j, k| {
            (0..ny).fold(T::zero(), |s, r| s + self.x[(j * ny + r, k * ny + r)])
        })
    }

    /// vec(Φ) read off the dominant eigenvector of the augmented lifting,
    /// normalized so its last entry is one.
    pub fn reconstruct_phi(&self) -> DVector<T> {
        let aug = self.augmented();
        let n = aug.nrows();
        let (vals, vecs) = sym_eigen(&aug);
        let v = vecs.column(n - 1) * vals[n - 1].max(T::zero()).sqrt();
        let last = v[n - 1];
        let v = if last != T::zero() { v / last } else { v.into_owned() };
        v.rows(0, n - 1).into_owned()
    }
}

fn augment<T: Real>(s: &DMatrix<T>, a: &DVector<T>) -> DMatrix<T> {
    let n = a.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(s);
    m.view_mut((0, n), (n, 1)).copy_from(a);
    m.view_mut((n, 0), (1, n)).copy_from(&a.transpose());
    m[(n, n)] = T::one();
    m
}

/// σ₂/σ₁ of a symmetric PSD-ish matrix (eigenvalue magnitudes).
pub fn rank_ratio<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    if n < 2 {
        return T::zero();
    }
    let (vals, _) = sym_eigen(m);
    let mut mags: Vec<T> = vals.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if mags[0] <= T::zero() {
        return T::zero();
    }
    mags[1] / mags[0]
}

/// Default tolerances of [`rank1_lift_check`].
pub const LIFT_PSD_TOL: f64 = 1e-9;
pub const LIFT_RANK_TOL: f64 = 1e-6;

/// Whether S is the rank-one lifting aaᵀ of a: the augmented matrix
/// [S, a; aᵀ, 1] must be PSD and of numerical rank one. (Rank one of S
/// alone would also admit S = c·aaᵀ with c > 1.)
pub fn rank1_lift_check<T: Real>(s: &DMatrix<T>, a: &DVector<T>) -> bool {
    rank1_lift_check_with(s, a, lit(LIFT_PSD_TOL), lit(LIFT_RANK_TOL))
}

pub fn rank1_lift_check_with<T: Real>(s: &DMatrix<T>, a: &DVector<T>, tol: T, tol_rank: T) -> bool {
    if s.nrows() != a.len() || s.ncols() != a.len() {
        return false;
    }
    let aug = augment(&linalg::symmetrize(s), a);
    let (vals, _) = sym_eigen(&aug);
    let n = vals.len();
    let top = vals[n - 1];
    if vals[0] < -tol * top.max(T::one()) {
        return false;
    }
    let second = if n >= 2 { vals[n - 2].abs().max(vals[0].abs()) } else { T::zero() };
    second / top.max(tol) <= tol_rank
}
