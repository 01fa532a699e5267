//! Dense semidefinite programming: problem assembly, equality elimination
//! and the interior-point driver.

mod ipm;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::scalar::{lit, Real};

/// Termination status of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions<T: Real> {
    pub max_iter: usize,
    /// Accepted negativity of the slack's smallest eigenvalue.
    pub tol_psd: T,
    /// Equality-constraint consistency tolerance.
    pub tol_eq: T,
    /// Relative duality gap.
    pub tol_gap: T,
    /// Absolute duality gap.
    pub tol_abs: T,
    /// Relative primal/dual residual.
    pub tol_feas: T,
    /// Iterative refinement passes on each KKT solve.
    pub refinement: usize,
}

impl<T: Real> Default for SdpOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_psd: lit(1e-7),
            tol_eq: lit(1e-8),
            tol_gap: lit(1e-7),
            tol_abs: lit(1e-9),
            tol_feas: lit(1e-9),
            refinement: 1,
        }
    }
}

/// One linear matrix inequality F0 + Σ x_i F_i ⪰ 0, stored as packed
/// lower-triangular entries keyed by (slot, i, j); slot 0 is the constant,
/// slot v+1 the coefficient of x_v.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock<T: Real> {
    size: usize,
    entries: BTreeMap<(usize, usize, usize), T>,
}

impl<T: Real> LmiBlock<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    fn add(&mut self, slot: usize, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        *self.entries.entry((slot, i, j)).or_insert_with(T::zero) += v;
    }

    fn dense(&self, slot: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (&(_, i, j), &v) in self.entries.range((slot, 0, 0)..(slot + 1, 0, 0)) {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

/// minimize cᵀx subject to LMI blocks and A_eq x = b_eq.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem<T: Real> {
    dim: usize,
    c: DVector<T>,
    blocks: Vec<LmiBlock<T>>,
    eq: Vec<(Vec<(usize, T)>, T)>,
}

impl<T: Real> SdpProblem<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            c: DVector::zeros(dim),
            blocks: Vec::new(),
            eq: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cost(&self) -> &DVector<T> {
        &self.c
    }

    pub fn blocks(&self) -> &[LmiBlock<T>] {
        &self.blocks
    }

    pub fn set_cost(&mut self, var: usize, v: T) {
        self.c[var] = v;
    }

    /// Replace the whole objective vector.
    pub fn set_costs(&mut self, c: &DVector<T>) {
        assert_eq!(c.len(), self.dim, "objective length");
        self.c.copy_from(c);
    }

    pub fn add_cost(&mut self, var: usize, v: T) {
        self.c[var] += v;
    }

    /// Add an empty size×size block; returns its index.
    pub fn add_block(&mut self, size: usize) -> usize {
        self.blocks.push(LmiBlock {
            size,
            entries: BTreeMap::new(),
        });
        self.blocks.len() - 1
    }

    /// Add v to the symmetric entry pair (i, j), (j, i) of the constant.
    pub fn add_constant(&mut self, block: usize, i: usize, j: usize, v: T) {
        if v != T::zero() {
            self.blocks[block].add(0, i, j, v);
        }
    }

    /// Add v to the symmetric entry pair (i, j), (j, i) of F_var.
    pub fn add_coefficient(&mut self, block: usize, var: usize, i: usize, j: usize, v: T) {
        assert!(var < self.dim, "variable {var} out of range");
        if v != T::zero() {
            self.blocks[block].add(var + 1, i, j, v);
        }
    }

    fn add_matrix(&mut self, block: usize, slot: usize, r0: usize, c0: usize, m: &DMatrix<T>) {
        let (rows, cols) = m.shape();
        if r0 == c0 && rows == cols {
            if linalg::asymmetry(m) > lit(1e-10) {
                log::warn!("asymmetric diagonal block symmetrized (block {block})");
            }
            let s = linalg::symmetrize(m);
            for j in 0..cols {
                for i in j..rows {
                    if s[(i, j)] != T::zero() {
                        self.blocks[block].add(slot, r0 + i, c0 + j, s[(i, j)]);
                    }
                }
            }
        } else {
            assert!(
                r0 >= c0 + cols || c0 >= r0 + rows,
                "off-diagonal placement must not touch the diagonal"
            );
            for j in 0..cols {
                for i in 0..rows {
                    if m[(i, j)] != T::zero() {
                        self.blocks[block].add(slot, r0 + i, c0 + j, m[(i, j)]);
                    }
                }
            }
        }
    }

    /// Place a submatrix of the constant at (r0, c0). Diagonal placements are
    /// symmetrized; off-diagonal ones imply their transpose.
    pub fn add_constant_matrix(&mut self, block: usize, r0: usize, c0: usize, m: &DMatrix<T>) {
        self.add_matrix(block, 0, r0, c0, m);
    }

    /// Same as [`SdpProblem::add_constant_matrix`] for the coefficient of x_var.
    pub fn add_coefficient_matrix(&mut self, block: usize, var: usize, r0: usize, c0: usize, m: &DMatrix<T>) {
        assert!(var < self.dim, "variable {var} out of range");
        self.add_matrix(block, var + 1, r0, c0, m);
    }

    /// x_var ≥ lo, as a 1×1 block.
    pub fn add_lower_bound(&mut self, var: usize, lo: T) {
        let b = self.add_block(1);
        self.add_constant(b, 0, 0, -lo);
        self.add_coefficient(b, var, 0, 0, T::one());
    }

    /// Σ coeffs · x = rhs.
    pub fn add_equality(&mut self, coeffs: &[(usize, T)], rhs: T) {
        self.eq.push((coeffs.to_vec(), rhs));
    }

    pub fn constant_matrix(&self, block: usize) -> DMatrix<T> {
        self.blocks[block].dense(0)
    }

    pub fn coefficient_matrix(&self, block: usize, var: usize) -> DMatrix<T> {
        self.blocks[block].dense(var + 1)
    }

    /// F0 + Σ x_i F_i for one block.
    pub fn slack(&self, block: usize, x: &DVector<T>) -> DMatrix<T> {
        let b = &self.blocks[block];
        let mut m = DMatrix::zeros(b.size, b.size);
        for (&(slot, i, j), &v) in &b.entries {
            let w = if slot == 0 { v } else { v * x[slot - 1] };
            m[(i, j)] += w;
            if i != j {
                m[(j, i)] += w;
            }
        }
        m
    }

    /// Sparse text dump: one `block i j var value` line per stored entry,
    /// var 0 meaning the constant and var k the coefficient of x_{k-1}.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dim {} blocks {} equalities {}", self.dim, self.blocks.len(), self.eq.len())?;
        let cost: Vec<String> = self.c.iter().map(|v| format!("{:.17e}", v.as_f64())).collect();
        writeln!(w, "c {}", cost.join(" "))?;
        for (bi, b) in self.blocks.iter().enumerate() {
            writeln!(w, "size {bi} {}", b.size)?;
            for (&(slot, i, j), &v) in &b.entries {
                writeln!(w, "{bi} {i} {j} {slot} {:.17e}", v.as_f64())?;
            }
        }
        for (coeffs, rhs) in &self.eq {
            let terms: Vec<String> = coeffs
                .iter()
                .map(|(k, v)| format!("{k}:{:.17e}", v.as_f64()))
                .collect();
            writeln!(w, "eq {} = {:.17e}", terms.join(" "), rhs.as_f64())?;
        }
        Ok(())
    }
}

/// Primal/dual answer of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution<T: Real> {
    pub status: Status,
    pub x: DVector<T>,
    pub objective: T,
    pub dual_objective: T,
    /// Smallest eigenvalue of F0 + Σ x_i F_i per block.
    pub slack_min_eig: Vec<T>,
    /// Dual matrix per block.
    pub duals: Vec<DMatrix<T>>,
    /// Multipliers of the equality constraints.
    pub eq_duals: DVector<T>,
    pub eq_residual: T,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
}

impl<T: Real> SdpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn min_slack(&self) -> T {
        self.slack_min_eig
            .iter()
            .fold(lit(f64::INFINITY), |m: T, &v| m.min(v))
    }
}

fn validate<T: Real>(p: &SdpProblem<T>) -> Result<()> {
    for (bi, b) in p.blocks.iter().enumerate() {
        for (&(slot, i, _), v) in &b.entries {
            if i >= b.size || slot > p.dim {
                return Err(Error::Shape {
                    what: "LMI block entry",
                    expected: format!("block {bi} of size {}", b.size),
                    got: format!("row {i}, slot {slot}"),
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("LMI data"));
            }
        }
    }
    for (coeffs, rhs) in &p.eq {
        if !rhs.is_finite() || coeffs.iter().any(|(k, v)| *k >= p.dim || !v.is_finite()) {
            return Err(Error::InvalidParameter("malformed equality constraint".into()));
        }
    }
    if !p.c.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("objective"));
    }
    Ok(())
}

/// Affine substitution x = x0 + N η eliminating the equalities.
struct Reduction<T: Real> {
    x0: DVector<T>,
    basis: Option<DMatrix<T>>,
}

impl<T: Real> Reduction<T> {
    fn expand(&self, eta: &DVector<T>) -> DVector<T> {
        match &self.basis {
            Some(n) => &self.x0 + n * eta,
            None => eta.clone(),
        }
    }
}

enum Reduced<T: Real> {
    Ready(ipm::ConeProblem<T>, Reduction<T>, Vec<usize>),
    Inconsistent(DVector<T>),
    FreeDirection,
}

fn reduce<T: Real>(p: &SdpProblem<T>, opts: &SdpOptions<T>) -> Reduced<T> {
    let d = p.dim;
    let (x0, basis) = if p.eq.is_empty() {
        (DVector::zeros(d), None)
    } else {
        let mut a = DMatrix::zeros(p.eq.len(), d);
        let mut b = DVector::zeros(p.eq.len());
        for (r, (coeffs, rhs)) in p.eq.iter().enumerate() {
            for &(k, v) in coeffs {
                a[(r, k)] += v;
            }
            b[r] = *rhs;
        }
        let (n, _) = linalg::nullspace(&a, lit(1e-12));
        let xp = linalg::lstsq(&a, &b);
        let res = (&a * &xp - &b).norm();
        if res > opts.tol_eq * b.norm().max(T::one()) {
            return Reduced::Inconsistent(xp);
        }
        (xp, Some(n))
    };
    let dr = basis.as_ref().map_or(d, |n| n.ncols());
    let c_red = match &basis {
        Some(n) => n.transpose() * &p.c,
        None => p.c.clone(),
    };
    let mut blocks = Vec::with_capacity(p.blocks.len());
    let mut used = vec![false; dr];
    for b in &p.blocks {
        let mut f0 = b.dense(0);
        let mut per_var: BTreeMap<usize, BTreeMap<(usize, usize), T>> = BTreeMap::new();
        for (&(slot, i, j), &v) in b.entries.range((1, 0, 0)..) {
            let var = slot - 1;
            match &basis {
                None => {
                    *per_var.entry(var).or_default().entry((i, j)).or_insert_with(T::zero) += v;
                }
                Some(n) => {
                    let shift = v * x0[var];
                    f0[(i, j)] += shift;
                    if i != j {
                        f0[(j, i)] += shift;
                    }
                    for k in 0..dr {
                        let w = n[(var, k)];
                        if w != T::zero() {
                            *per_var.entry(k).or_default().entry((i, j)).or_insert_with(T::zero) += v * w;
                        }
                    }
                }
            }
        }
        let mut vars = Vec::new();
        let mut terms = Vec::new();
        for (var, entries) in per_var {
            let t: Vec<(usize, usize, T)> = entries
                .into_iter()
                .filter(|(_, v)| v.abs() > lit(1e-15))
                .map(|((i, j), v)| (i, j, v))
                .collect();
            if !t.is_empty() {
                used[var] = true;
                vars.push(var);
                terms.push(t);
            }
        }
        blocks.push(ipm::ConeBlock {
            size: b.size,
            f0,
            vars,
            terms,
        });
    }
    // Compact away variables that appear in no block.
    let active: Vec<usize> = (0..dr).filter(|&k| used[k]).collect();
    let mut pos = vec![usize::MAX; dr];
    for (new, &old) in active.iter().enumerate() {
        pos[old] = new;
    }
    for b in &mut blocks {
        for v in &mut b.vars {
            *v = pos[*v];
        }
    }
    let c_active = DVector::from_iterator(active.len(), active.iter().map(|&k| c_red[k]));
    let cone = ipm::ConeProblem {
        dim: active.len(),
        c: c_active,
        blocks,
    };
    let inactive_cost = (0..dr)
        .filter(|&k| !used[k])
        .any(|k| c_red[k].abs() > lit(1e-14));
    if inactive_cost {
        // A variable outside every block with nonzero cost is unbounded.
        return Reduced::FreeDirection;
    }
    Reduced::Ready(cone, Reduction { x0, basis }, active)
}

/// Solve an SDP. Returns `Err` only for malformed input; infeasibility and
/// iteration limits are reported through [`SdpSolution::status`].
pub fn solve<T: Real>(p: &SdpProblem<T>, opts: &SdpOptions<T>) -> Result<SdpSolution<T>> {
    validate(p)?;
    let (status, x, duals, iterations, pres, dres, gap) = match reduce(p, opts) {
        Reduced::FreeDirection => {
            let x = DVector::zeros(p.dim);
            let duals = p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
            (Status::Unbounded, x, duals, 0, T::zero(), T::zero(), T::zero())
        }
        Reduced::Inconsistent(xp) => {
            let duals = p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
            (Status::Infeasible, xp, duals, 0, T::zero(), T::zero(), T::zero())
        }
        Reduced::Ready(cone, red, active) => {
            let dr = red.basis.as_ref().map_or(p.dim, |n| n.ncols());
            if cone.dim == 0 {
                let x = red.expand(&DVector::zeros(dr));
                let feasible = (0..p.blocks.len()).all(|b| {
                    linalg::min_eigenvalue(&p.slack(b, &x)) >= -opts.tol_psd
                });
                let status = if feasible { Status::Optimal } else { Status::Infeasible };
                let duals = p.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect();
                (status, x, duals, 0, T::zero(), T::zero(), T::zero())
            } else {
                let settings = ipm::IpmSettings {
                    max_iter: opts.max_iter,
                    feastol: opts.tol_feas,
                    abstol: opts.tol_abs,
                    reltol: opts.tol_gap,
                    refinement: opts.refinement,
                };
                let out = ipm::solve(&cone, &settings);
                let mut eta = DVector::zeros(dr);
                for (k, &old) in active.iter().enumerate() {
                    eta[old] = out.x[k];
                }
                let x = match (out.status, &red.basis) {
                    (Status::Unbounded | Status::Infeasible, Some(n)) => n * &eta,
                    _ => red.expand(&eta),
                };
                (out.status, x, out.z, out.iterations, out.pres, out.dres, out.gap)
            }
        }
    };

    let slack_min_eig: Vec<T> = (0..p.blocks.len())
        .map(|b| linalg::min_eigenvalue(&p.slack(b, &x)))
        .collect();
    let objective = p.c.dot(&x);
    let mut fz = DVector::zeros(p.dim);
    let mut f0z = T::zero();
    for (b, z) in p.blocks.iter().zip(&duals) {
        for (&(slot, i, j), &v) in &b.entries {
            let w = if i == j { v * z[(i, i)] } else { lit::<T>(2.0) * v * z[(i, j)] };
            if slot == 0 {
                f0z += w;
            } else {
                fz[slot - 1] += w;
            }
        }
    }
    let (eq_duals, eq_residual, eq_term) = if p.eq.is_empty() {
        (DVector::zeros(0), T::zero(), T::zero())
    } else {
        let mut a = DMatrix::zeros(p.eq.len(), p.dim);
        let mut b = DVector::zeros(p.eq.len());
        for (r, (coeffs, rhs)) in p.eq.iter().enumerate() {
            for &(k, v) in coeffs {
                a[(r, k)] += v;
            }
            b[r] = *rhs;
        }
        let y = linalg::lstsq(&a.transpose(), &(&p.c - &fz));
        let res = (&a * &x - &b).norm();
        let term = b.dot(&y);
        (y, res, term)
    };
    if status == Status::Optimal {
        let worst = slack_min_eig.iter().fold(lit::<T>(f64::INFINITY), |m, &v| m.min(v));
        if worst < -opts.tol_psd {
            log::debug!("sdp: slack min eigenvalue {worst:.3e} below tolerance");
        }
    }
    Ok(SdpSolution {
        status,
        x,
        objective,
        dual_objective: -f0z + eq_term,
        slack_min_eig,
        duals,
        eq_duals,
        eq_residual,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
    })
}

/// Smallest eigenvalue of a symmetric matrix with its unit eigenvector.
pub fn min_eig_vec<T: Real>(s: &DMatrix<T>) -> (T, DVector<T>) {
    let (vals, vecs) = sym_eigen(s);
    (vals[0], vecs.column(0).into_owned())
}
