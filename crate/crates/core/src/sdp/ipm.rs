//! Homogeneous self-dual interior-point iteration for
//!
//! ```text
//! minimize cᵀx  s.t.  F0 + Σ x_i F_i ⪰ 0   (one or more dense blocks)
//! ```
//!
//! written in cone form G x + s = h with G x = −Σ x_i F_i and h = F0. Each
//! iteration uses Nesterov–Todd scaling and a Mehrotra predictor-corrector
//! step.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, cholesky_regularized, sym_eigen};
use crate::scalar::{lit, Real};

use super::Status;

/// A stalled run is still reported optimal when its best iterate is within
/// this factor of every tolerance.
const NEAR_OPTIMAL: f64 = 1e3;

/// One LMI block with dense constant and sparse lower-triangular
/// coefficient matrices.
#[derive(Debug, Clone)]
pub(crate) struct ConeBlock<T: Real> {
    pub size: usize,
    pub f0: DMatrix<T>,
    pub vars: Vec<usize>,
    /// Lower-triangular triplets (i ≥ j) for each entry of `vars`.
    pub terms: Vec<Vec<(usize, usize, T)>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProblem<T: Real> {
    pub dim: usize,
    pub c: DVector<T>,
    pub blocks: Vec<ConeBlock<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmSettings<T: Real> {
    pub max_iter: usize,
    pub feastol: T,
    pub abstol: T,
    pub reltol: T,
    pub refinement: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome<T: Real> {
    pub status: Status,
    pub x: DVector<T>,
    pub z: Vec<DMatrix<T>>,
    pub iterations: usize,
    pub pres: T,
    pub dres: T,
    pub gap: T,
}

/// ⟨F, Z⟩ for F given by lower triplets.
#[inline]
fn sparse_dot<T: Real>(terms: &[(usize, usize, T)], z: &DMatrix<T>) -> T {
    let two = lit::<T>(2.0);
    terms.iter().fold(T::zero(), |acc, &(i, j, v)| {
        if i == j {
            acc + v * z[(i, i)]
        } else {
            acc + two * v * z[(i, j)]
        }
    })
}

#[inline]
fn add_sparse<T: Real>(out: &mut DMatrix<T>, terms: &[(usize, usize, T)], scale: T) {
    for &(i, j, v) in terms {
        out[(i, j)] += scale * v;
        if i != j {
            out[(j, i)] += scale * v;
        }
    }
}

impl<T: Real> ConeProblem<T> {
    /// G x = −Σ x_i F_i per block.
    fn apply_g(&self, x: &DVector<T>) -> Vec<DMatrix<T>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.size, b.size);
                for (k, &v) in b.vars.iter().enumerate() {
                    if x[v] != T::zero() {
                        add_sparse(&mut m, &b.terms[k], -x[v]);
                    }
                }
                m
            })
            .collect()
    }

    /// Gᵀ Z = (−⟨F_i, Z⟩)_i.
    fn apply_gt(&self, z: &[DMatrix<T>]) -> DVector<T> {
        let mut out = DVector::zeros(self.dim);
        for (b, zb) in self.blocks.iter().zip(z) {
            for (k, &v) in b.vars.iter().enumerate() {
                out[v] -= sparse_dot(&b.terms[k], zb);
            }
        }
        out
    }

    fn h_dot(&self, z: &[DMatrix<T>]) -> T {
        self.blocks
            .iter()
            .zip(z)
            .fold(T::zero(), |acc, (b, zb)| acc + linalg::frob_dot(&b.f0, zb))
    }
}

fn norm_blocks<T: Real>(m: &[DMatrix<T>]) -> T {
    m.iter().fold(T::zero(), |a, b| a + b.norm_squared()).sqrt()
}

fn dot_blocks<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + linalg::frob_dot(x, y))
}

/// Nesterov–Todd scaling of one block: W(Z) = RᵀZR, W⁻ᵀ(S) = R⁻¹SR⁻ᵀ,
/// with both scaled iterates equal to diag(λ).
struct NtScaling<T: Real> {
    r: DMatrix<T>,
    rinv: DMatrix<T>,
    lambda: DVector<T>,
    /// R⁻ᵀR⁻¹.
    m: DMatrix<T>,
}

fn nt_scaling<T: Real>(s: &DMatrix<T>, z: &DMatrix<T>) -> Option<NtScaling<T>> {
    let ls = cholesky_regularized(s)?;
    let lz = cholesky_regularized(z)?;
    let prod = lz.transpose() * &ls;
    let svd = linalg::svd(&prod);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return None;
    }
    let n = lambda.len();
    let mut r = &ls * vt.transpose();
    let mut rinv = u.transpose() * lz.transpose();
    for k in 0..n {
        let f = lambda[k].sqrt();
        let mut col = r.column_mut(k);
        col /= f;
        let mut row = rinv.row_mut(k);
        row /= f;
    }
    let m = rinv.tr_mul(&rinv);
    Some(NtScaling {
        r,
        rinv,
        lambda,
        m,
    })
}

/// Y = λ ∘⁻¹ X, i.e. Y_ij = 2 X_ij / (λ_i + λ_j).
fn jordan_div<T: Real>(lambda: &DVector<T>, x: &DMatrix<T>) -> DMatrix<T> {
    let two = lit::<T>(2.0);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| two * x[(i, j)] / (lambda[i] + lambda[j]))
}

/// (XY + YX)/2.
fn jordan_prod<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    let p = x * y;
    (&p + p.transpose()) * lit::<T>(0.5)
}

/// Largest t ≥ 0 such that diag(λ) + t·D stays PSD is 1/max(0, −λ_min(Λ^{-1/2} D Λ^{-1/2})).
fn max_step_measure<T: Real>(lambda: &DVector<T>, d: &DMatrix<T>) -> T {
    let n = lambda.len();
    let isq: Vec<T> = lambda.iter().map(|l| T::one() / l.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| d[(i, j)] * isq[i] * isq[j]);
    let m = linalg::symmetrize(&m);
    let emin = if n == 1 { m[(0, 0)] } else { sym_eigen(&m).0[0] };
    (-emin).max(T::zero())
}

struct Kkt<T: Real> {
    chol: DMatrix<T>,
    scalings: Vec<NtScaling<T>>,
}

impl<T: Real> Kkt<T> {
    fn solve_h(&self, rhs: &DVector<T>) -> DVector<T> {
        let l = &self.chol;
        let y = l.solve_lower_triangular(rhs).unwrap_or_else(|| rhs.clone());
        l.tr_solve_lower_triangular(&y).unwrap_or(y)
    }
}

fn build_kkt<T: Real>(p: &ConeProblem<T>, scalings: Vec<NtScaling<T>>) -> Option<Kkt<T>> {
    let d = p.dim;
    let mut h = DMatrix::<T>::zeros(d, d);
    for (b, sc) in p.blocks.iter().zip(&scalings) {
        let m = &sc.m;
        let nb = b.size;
        for (kj, &vj) in b.vars.iter().enumerate() {
            let terms = &b.terms[kj];
            // Columns touched by the full symmetric F_j.
            let mut cols: Vec<usize> = Vec::with_capacity(2 * terms.len());
            for &(i, j, _) in terms {
                cols.push(i);
                cols.push(j);
            }
            cols.sort_unstable();
            cols.dedup();
            let mut mf = DMatrix::<T>::zeros(nb, cols.len());
            for &(i, j, v) in terms {
                // F has v at (i,j) and (j,i): column j gets v·M[:,i], column i gets v·M[:,j].
                let cj = cols.binary_search(&j).unwrap_or(0);
                let ci = cols.binary_search(&i).unwrap_or(0);
                {
                    let src = m.column(i).clone_owned();
                    let mut dst = mf.column_mut(cj);
                    dst.axpy(v, &src, T::one());
                }
                if i != j {
                    let src = m.column(j).clone_owned();
                    let mut dst = mf.column_mut(ci);
                    dst.axpy(v, &src, T::one());
                }
            }
            let mut mrows = DMatrix::<T>::zeros(cols.len(), nb);
            for (r, &c) in cols.iter().enumerate() {
                mrows.set_row(r, &m.row(c));
            }
            let y = mf * mrows;
            for (ki, &vi) in b.vars.iter().enumerate().skip(kj) {
                let val = sparse_dot(&b.terms[ki], &y);
                h[(vi, vj)] += val;
                if vi != vj {
                    h[(vj, vi)] += val;
                }
            }
        }
    }
    let chol = cholesky_regularized(&h)?;
    Some(Kkt { chol, scalings })
}

impl<T: Real> ConeProblem<T> {
    /// Solve [0 Gᵀ; G −WᵀW][ux; ζ] = [px; pz]; returns (ux, scaled uz = Wζ).
    fn f3_once(&self, kkt: &Kkt<T>, px: &DVector<T>, pz: &[DMatrix<T>]) -> (DVector<T>, Vec<DMatrix<T>>) {
        // rhs = px + Gᵀ (WᵀW)⁻¹ pz, with (WᵀW)⁻¹ pz = M pz M.
        let wz: Vec<DMatrix<T>> = kkt
            .scalings
            .iter()
            .zip(pz)
            .map(|(sc, p)| &sc.m * p * &sc.m)
            .collect();
        let rhs = px + self.apply_gt(&wz);
        let ux = kkt.solve_h(&rhs);
        let gux = self.apply_g(&ux);
        let uz = kkt
            .scalings
            .iter()
            .zip(gux.iter().zip(pz))
            .map(|(sc, (g, p))| {
                let diff = g - p;
                linalg::symmetrize(&(&sc.rinv * diff * sc.rinv.transpose()))
            })
            .collect();
        (ux, uz)
    }

    fn f3(
        &self,
        kkt: &Kkt<T>,
        px: &DVector<T>,
        pz: &[DMatrix<T>],
        refinement: usize,
    ) -> (DVector<T>, Vec<DMatrix<T>>) {
        let (mut ux, mut uz) = self.f3_once(kkt, px, pz);
        for _ in 0..refinement {
            // Residual of the unscaled system using ζ = W⁻¹ uz.
            let zeta: Vec<DMatrix<T>> = kkt
                .scalings
                .iter()
                .zip(&uz)
                .map(|(sc, u)| sc.rinv.transpose() * u * &sc.rinv)
                .collect();
            let r1 = px - self.apply_gt(&zeta);
            let gux = self.apply_g(&ux);
            let r2: Vec<DMatrix<T>> = kkt
                .scalings
                .iter()
                .zip(pz.iter().zip(gux.iter().zip(&uz)))
                .map(|(sc, (p, (g, u)))| {
                    // WᵀW ζ = R (Wζ) Rᵀ
                    let wtw = &sc.r * u * sc.r.transpose();
                    p - (g - wtw)
                })
                .collect();
            let (dx, dz) = self.f3_once(kkt, &r1, &r2);
            ux += dx;
            for (a, b) in uz.iter_mut().zip(dz) {
                *a += b;
            }
        }
        (ux, uz)
    }
}

struct Direction<T: Real> {
    dx: DVector<T>,
    ds: Vec<DMatrix<T>>,
    dz: Vec<DMatrix<T>>,
    dtau: T,
    dkappa: T,
}

pub(crate) fn solve<T: Real>(p: &ConeProblem<T>, set: &IpmSettings<T>) -> IpmOutcome<T> {
    let d = p.dim;
    let nblocks = p.blocks.len();
    let cone_deg: usize = p.blocks.iter().map(|b| b.size).sum();
    let h: Vec<DMatrix<T>> = p.blocks.iter().map(|b| b.f0.clone()).collect();
    let resx0 = p.c.norm().max(T::one());
    let resz0 = norm_blocks(&h).max(T::one());
    let one = T::one();

    // Starting point with W = I.
    let identity_scalings: Vec<NtScaling<T>> = p
        .blocks
        .iter()
        .map(|b| NtScaling {
            r: DMatrix::identity(b.size, b.size),
            rinv: DMatrix::identity(b.size, b.size),
            lambda: DVector::from_element(b.size, one),
            m: DMatrix::identity(b.size, b.size),
        })
        .collect();
    let Some(kkt0) = build_kkt(p, identity_scalings) else {
        return IpmOutcome {
            status: Status::MaxIter,
            x: DVector::zeros(d),
            z: h.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect(),
            iterations: 0,
            pres: lit(f64::INFINITY),
            dres: lit(f64::INFINITY),
            gap: lit(f64::INFINITY),
        };
    };
    let zero_x = DVector::zeros(d);
    // Primal: least-squares x with s = h − Gx.
    let (mut x, neg_s) = p.f3(&kkt0, &zero_x, &h, 0);
    let mut s: Vec<DMatrix<T>> = neg_s.iter().map(|m| -m).collect();
    // Dual: least-norm z with Gᵀz = −c.
    let (_, mut z) = p.f3(&kkt0, &(-&p.c), &h.iter().map(|m| m * T::zero()).collect::<Vec<_>>(), 0);
    let shift = |v: &mut Vec<DMatrix<T>>| {
        let mut t = lit::<T>(f64::NEG_INFINITY);
        for m in v.iter() {
            t = t.max(-linalg::min_eigenvalue(m));
        }
        let nrm = norm_blocks(v).max(one);
        if t >= -lit::<T>(1e-8) * nrm {
            for m in v.iter_mut() {
                for i in 0..m.nrows() {
                    m[(i, i)] += one + t;
                }
            }
        }
    };
    shift(&mut s);
    shift(&mut z);
    let mut tau = one;
    let mut kappa = one;

    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap_out) = (lit(f64::INFINITY), lit(f64::INFINITY), lit(f64::INFINITY));
    let step_frac = lit::<T>(0.99);
    // Best iterate so far, scored against the requested tolerances.
    let mut best: Option<(T, DVector<T>, Vec<DMatrix<T>>, T, T, T, usize)> = None;

    for iter in 0..=set.max_iter {
        iterations = iter;
        let hrx = -p.apply_gt(&z);
        let rx = &hrx - &p.c * tau;
        let gx = p.apply_g(&x);
        let hrz: Vec<DMatrix<T>> = s.iter().zip(&gx).map(|(sb, g)| sb + g).collect();
        let rz: Vec<DMatrix<T>> = hrz.iter().zip(&h).map(|(a, hb)| a - hb * tau).collect();
        let cx = p.c.dot(&x);
        let hz = p.h_dot(&z);
        let rt = kappa + cx + hz;
        let hresx = hrx.norm();
        let hresz = norm_blocks(&hrz);
        pres = norm_blocks(&rz) / tau / resz0;
        dres = rx.norm() / tau / resx0;
        let gap = dot_blocks(&s, &z) / (tau * tau);
        gap_out = gap;
        let pcost = cx / tau;
        let dcost = -hz / tau;
        let relgap = if pcost < T::zero() {
            gap / -pcost
        } else if dcost > T::zero() {
            gap / dcost
        } else {
            lit(f64::INFINITY)
        };
        log::trace!(
            "ipm {iter}: pcost {pcost:.6e} dcost {dcost:.6e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}"
        );
        let score = (pres / set.feastol)
            .max(dres / set.feastol)
            .max((gap / set.abstol).min(relgap / set.reltol));
        if score.is_finite() && best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, &x / tau, z.iter().map(|m| m / tau).collect(), pres, dres, gap, iter));
        }
        if pres <= set.feastol && dres <= set.feastol && (gap <= set.abstol || relgap <= set.reltol) {
            status = Status::Optimal;
            break;
        }
        if hz < T::zero() && hresx / resx0 / -hz <= set.feastol {
            status = Status::Infeasible;
            break;
        }
        if cx < T::zero() && hresz / resz0 / -cx <= set.feastol {
            status = Status::Unbounded;
            break;
        }
        if iter == set.max_iter {
            break;
        }

        let mut scalings = Vec::with_capacity(nblocks);
        let mut ok = true;
        for (sb, zb) in s.iter().zip(&z) {
            match nt_scaling(sb, zb) {
                Some(sc) => scalings.push(sc),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            log::debug!("ipm: scaling failed at iteration {iter}");
            break;
        }
        let Some(kkt) = build_kkt(p, scalings) else {
            log::debug!("ipm: KKT factorization failed at iteration {iter}");
            break;
        };
        let (x1, uz1) = p.f3(&kkt, &(-&p.c), &h, set.refinement);
        let uz1_sq = norm_blocks(&uz1).powi(2);
        let mu = (dot_blocks(&s, &z) + tau * kappa) / lit::<T>((cone_deg + 1) as f64);
        let lsq: Vec<DMatrix<T>> = kkt
            .scalings
            .iter()
            .map(|sc| DMatrix::from_diagonal(&sc.lambda.map(|l| l * l)))
            .collect();

        let direction = |bx: &DVector<T>, bz: &[DMatrix<T>], bt: T, bs: &[DMatrix<T>], bk: T| {
            let lbs: Vec<DMatrix<T>> = kkt
                .scalings
                .iter()
                .zip(bs)
                .map(|(sc, b)| jordan_div(&sc.lambda, b))
                .collect();
            let pz: Vec<DMatrix<T>> = kkt
                .scalings
                .iter()
                .zip(bz.iter().zip(&lbs))
                .map(|(sc, (b, l))| &sc.r * l * sc.r.transpose() - b)
                .collect();
            let (ux, uz) = p.f3(&kkt, bx, &pz, set.refinement);
            let zeta: Vec<DMatrix<T>> = kkt
                .scalings
                .iter()
                .zip(&uz)
                .map(|(sc, u)| sc.rinv.transpose() * u * &sc.rinv)
                .collect();
            let rhs3 = -bt + bk / tau;
            let num = rhs3 - p.c.dot(&ux) - p.h_dot(&zeta);
            let den = -uz1_sq - kappa / tau;
            let dtau = num / den;
            let dx = &ux + &x1 * dtau;
            let dz: Vec<DMatrix<T>> = uz.iter().zip(&uz1).map(|(a, b)| a + b * dtau).collect();
            let ds: Vec<DMatrix<T>> = lbs.iter().zip(&dz).map(|(l, dzb)| -l - dzb).collect();
            let dkappa = -bk / tau - kappa / tau * dtau;
            Direction {
                dx,
                ds,
                dz,
                dtau,
                dkappa,
            }
        };
        let max_step = |dir: &Direction<T>| {
            let mut t = T::zero();
            for (sc, (dsb, dzb)) in kkt.scalings.iter().zip(dir.ds.iter().zip(&dir.dz)) {
                t = t.max(max_step_measure(&sc.lambda, dsb));
                t = t.max(max_step_measure(&sc.lambda, dzb));
            }
            t = t.max(-dir.dtau / tau).max(-dir.dkappa / kappa);
            t
        };

        // Predictor.
        let aff = direction(&rx, &rz, rt, &lsq, tau * kappa);
        let t_aff = max_step(&aff);
        let step_aff = if t_aff > T::zero() { (one / t_aff).min(one) } else { one };
        let sigma = (one - step_aff).powi(3);

        // Corrector.
        let scale = one - sigma;
        let bx = &rx * scale;
        let bz: Vec<DMatrix<T>> = rz.iter().map(|m| m * scale).collect();
        let bt = rt * scale;
        let bs: Vec<DMatrix<T>> = lsq
            .iter()
            .zip(aff.ds.iter().zip(&aff.dz))
            .map(|(l2, (a, b))| {
                let mut m = l2 + jordan_prod(a, b);
                for i in 0..m.nrows() {
                    m[(i, i)] -= sigma * mu;
                }
                m
            })
            .collect();
        let bk = tau * kappa + aff.dtau * aff.dkappa - sigma * mu;
        let dir = direction(&bx, &bz, bt, &bs, bk);
        let t_full = max_step(&dir);
        let step = if t_full > T::zero() {
            (step_frac / t_full).min(one)
        } else {
            one
        };
        if !(step > lit(1e-12)) || !step.is_finite() {
            log::debug!("ipm: step collapsed at iteration {iter}");
            break;
        }

        x += &dir.dx * step;
        for (k, sc) in kkt.scalings.iter().enumerate() {
            let mut sl = DMatrix::from_diagonal(&sc.lambda) + &dir.ds[k] * step;
            sl = linalg::symmetrize(&sl);
            s[k] = linalg::symmetrize(&(&sc.r * &sl * sc.r.transpose()));
            let mut zl = DMatrix::from_diagonal(&sc.lambda) + &dir.dz[k] * step;
            zl = linalg::symmetrize(&zl);
            z[k] = linalg::symmetrize(&(sc.rinv.transpose() * &zl * &sc.rinv));
        }
        tau += dir.dtau * step;
        kappa += dir.dkappa * step;
    }

    if status == Status::MaxIter {
        if let Some((score, bx, bz, bp, bd, bg, bi)) = best {
            if score <= lit(NEAR_OPTIMAL) {
                log::debug!("ipm: accepting iterate {bi} at reduced accuracy (score {score:.2e})");
                return IpmOutcome {
                    status: Status::Optimal,
                    x: bx,
                    z: bz,
                    iterations,
                    pres: bp,
                    dres: bd,
                    gap: bg,
                };
            }
        }
    }

    let scale = one / tau;
    let z_out = match status {
        Status::Infeasible => {
            let hz = -p.h_dot(&z);
            z.iter().map(|m| m / hz).collect()
        }
        _ => z.iter().map(|m| m * scale).collect(),
    };
    let x_out = match status {
        Status::Unbounded => {
            let cx = -p.c.dot(&x);
            &x / cx
        }
        _ => &x * scale,
    };
    IpmOutcome {
        status,
        x: x_out,
        z: z_out,
        iterations,
        pres,
        dres,
        gap: gap_out,
    }
}
