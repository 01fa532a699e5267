//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// (S + Sᵀ)/2.
pub fn symmetrize<T: Real>(s: &DMatrix<T>) -> DMatrix<T> {
    (s + s.transpose()) * lit::<T>(0.5)
}

/// Largest absolute entry of S − Sᵀ.
pub fn asymmetry<T: Real>(s: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for j in 0..s.ncols() {
        for i in 0..j {
            let d = (s[(i, j)] - s[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen<T: Real>(s: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = s.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(s));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty one).
pub fn min_eigenvalue<T: Real>(s: &DMatrix<T>) -> T {
    if s.nrows() == 0 {
        return lit(f64::INFINITY);
    }
    if s.nrows() == 1 {
        return s[(0, 0)];
    }
    sym_eigen(s).0[0]
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue<T: Real>(s: &DMatrix<T>) -> T {
    let n = s.nrows();
    if n == 0 {
        return lit(f64::NEG_INFINITY);
    }
    sym_eigen(s).0[n - 1]
}

/// SVD with U and Vᵀ, singular values in descending order.
///
/// nalgebra's bidiagonal iteration can stop on a wrong factorization of
/// rank-deficient matrices. Its result is checked against A and replaced by
/// a one-sided Jacobi SVD when the check fails. U columns belonging to zero
/// singular values may be zero in that case.
pub fn svd<T: Real>(a: &DMatrix<T>) -> SVD<T, Dyn, Dyn> {
    let tol = lit::<T>(100.0 * (a.nrows().max(a.ncols()).max(1)) as f64) * T::EPS * a.norm();
    if let Some(s) = SVD::try_new_unordered(a.clone(), true, true, T::EPS, 0) {
        if let (Some(u), Some(vt)) = (&s.u, &s.v_t) {
            if (u * DMatrix::from_diagonal(&s.singular_values) * vt - a).amax() <= tol {
                return sorted(s);
            }
        }
    }
    log::debug!("svd: falling back to Jacobi on a {}x{} matrix", a.nrows(), a.ncols());
    if a.nrows() >= a.ncols() {
        sorted(jacobi_svd(a))
    } else {
        let t = jacobi_svd(&a.transpose());
        sorted(SVD {
            u: t.v_t.map(|vt| vt.transpose()),
            v_t: t.u.map(|u| u.transpose()),
            singular_values: t.singular_values,
        })
    }
}

/// One-sided (Hestenes) Jacobi SVD of a matrix with at least as many rows
/// as columns.
fn jacobi_svd<T: Real>(a: &DMatrix<T>) -> SVD<T, Dyn, Dyn> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::identity(n, n);
    let rotate = |x: &mut DMatrix<T>, p: usize, q: usize, c: T, s: T| {
        for i in 0..x.nrows() {
            let (xp, xq) = (x[(i, p)], x[(i, q)]);
            x[(i, p)] = c * xp - s * xq;
            x[(i, q)] = s * xp + c * xq;
        }
    };
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == T::zero() || gamma.abs() <= T::EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sv = DVector::from_fn(n, |j, _| w.column(j).norm());
    let mut u = DMatrix::zeros(m, n);
    for j in 0..n {
        if sv[j] > T::zero() {
            u.set_column(j, &(w.column(j) / sv[j]));
        }
    }
    SVD {
        u: Some(u),
        v_t: Some(v.transpose()),
        singular_values: sv,
    }
}

fn sorted<T: Real>(mut s: SVD<T, Dyn, Dyn>) -> SVD<T, Dyn, Dyn> {
    s.sort_by_singular_values();
    s
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    svd(a).singular_values
}

/// Full SVD of an arbitrary matrix, padding with zero rows so that all right
/// singular vectors come back. Returns (singular values, V) with V square.
fn full_right_svd<T: Real>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let (p, d) = a.shape();
    let padded = if p < d {
        let mut m = DMatrix::zeros(d, d);
        m.view_mut((0, 0), (p, d)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let svd = svd(&padded);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sv = order.iter().map(|&k| svd.singular_values[k]).collect();
    let mut v = DMatrix::zeros(d, order.len());
    for (c, &k) in order.iter().enumerate() {
        v.set_column(c, &vt.row(k).transpose());
    }
    (sv, v)
}

/// Orthonormal basis of ker(A) and the numerical rank of A.
pub fn nullspace<T: Real>(a: &DMatrix<T>, rel_tol: T) -> (DMatrix<T>, usize) {
    let d = a.ncols();
    if a.nrows() == 0 || d == 0 {
        return (DMatrix::identity(d, d), 0);
    }
    let (sv, v) = full_right_svd(a);
    let smax = sv.first().copied().unwrap_or(T::zero());
    let thresh = rel_tol * smax.max(T::one());
    let rank = sv.iter().filter(|&&s| s > thresh).count();
    let basis = v.columns(rank, d - rank).into_owned();
    (basis, rank)
}

/// Numerical rank via singular values with threshold `max_dim·σ_max·rel`.
pub fn rank<T: Real>(a: &DMatrix<T>, rel: T) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = singular_values(a);
    let smax = sv.iter().fold(T::zero(), |m, &s| m.max(s));
    let maxdim: T = lit(a.nrows().max(a.ncols()) as f64);
    let thresh = maxdim * smax * rel;
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Minimum-norm least-squares solution of A x = b.
pub fn lstsq<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = svd(a);
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    let eps = smax * lit::<T>(a.nrows().max(a.ncols()) as f64) * T::EPS;
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Cholesky factor of a symmetric positive definite matrix; if the plain
/// factorization fails a growing diagonal shift is tried.
pub fn cholesky_regularized<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c.l());
    }
    let n = m.nrows();
    let scale = (0..n).fold(T::zero(), |acc, i| acc.max(m[(i, i)].abs())).max(T::one());
    let mut shift = scale * lit::<T>(1e-14);
    for _ in 0..8 {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        if let Some(c) = shifted.cholesky() {
            return Some(c.l());
        }
        shift *= lit::<T>(100.0);
    }
    None
}

/// Solve X·R = B for X when R is unit lower-block-triangular with square
/// diagonal blocks of size `block`, i.e. compute B·R⁻¹ without forming R⁻¹.
pub fn right_solve_unit_lower<T: Real>(
    b: &DMatrix<T>,
    r: &DMatrix<T>,
    block: usize,
) -> Result<DMatrix<T>> {
    // X R = B  <=>  Rᵀ Xᵀ = Bᵀ, Rᵀ unit upper triangular.
    let xt = solve_unit_lower_blocks(&r.transpose(), &b.transpose(), block, true)?;
    Ok(xt.transpose())
}

/// Solve R·X = B for X, R unit lower-block-triangular.
pub fn left_solve_unit_lower<T: Real>(
    r: &DMatrix<T>,
    b: &DMatrix<T>,
    block: usize,
) -> Result<DMatrix<T>> {
    solve_unit_lower_blocks(r, b, block, false)
}

fn solve_unit_lower_blocks<T: Real>(
    m: &DMatrix<T>,
    b: &DMatrix<T>,
    block: usize,
    upper: bool,
) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n || b.nrows() != n || block == 0 || n % block != 0 {
        return Err(Error::Shape {
            what: "block triangular solve",
            expected: format!("square {n}x{n} with block {block}"),
            got: format!("{}x{} rhs {}x{}", m.nrows(), m.ncols(), b.nrows(), b.ncols()),
        });
    }
    let nb = n / block;
    let mut x = b.clone();
    let order: Vec<usize> = if upper {
        (0..nb).rev().collect()
    } else {
        (0..nb).collect()
    };
    for (pos, &k) in order.iter().enumerate() {
        let rk = k * block;
        for &j in &order[..pos] {
            let cj = j * block;
            let mk = m.view((rk, cj), (block, block)).clone_owned();
            if mk.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let xj = x.view((cj, 0), (block, x.ncols())).clone_owned();
            let mut xk = x.view_mut((rk, 0), (block, b.ncols()));
            xk -= mk * xj;
        }
        let diag = m.view((rk, rk), (block, block)).clone_owned();
        let id = DMatrix::<T>::identity(block, block);
        let off = (&diag - &id).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if off > lit(1e-12) {
            // Generic (non-unit) diagonal block.
            let lu = diag.lu();
            let rhs = x.view((rk, 0), (block, x.ncols())).clone_owned();
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("diagonal block of a triangular solve".into()))?;
            x.view_mut((rk, 0), (block, b.ncols())).copy_from(&sol);
        }
    }
    Ok(x)
}

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().fold(0.0, |s, v| s + v.abs().as_f64()))
        .fold(0.0f64, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * lit::<T>(0.5f64.powi(s));
    let b = |k: usize| lit::<T>(B[k]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &scaled * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Frobenius inner product ⟨A, B⟩.
pub fn frob_dot<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Block-diagonal stacking of a list of matrices.
pub fn blkdiag<T: Real>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub(crate) fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}
