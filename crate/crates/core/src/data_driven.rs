//! Hankel matrices, persistent excitation and trajectory validation from
//! recorded input/output data.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{lit, Real};

/// Relative singular value threshold used for every rank decision here.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Default relative residual accepted by [`willems_validate`].
pub const TOL_WILLEMS: f64 = 1e-6;

/// Uniform-width sample sequence σ_0..σ_{T_data−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord<T: Real> {
    samples: Vec<DVector<T>>,
    width: usize,
}

impl<T: Real> SignalRecord<T> {
    pub fn new(samples: Vec<DVector<T>>) -> Result<Self> {
        let width = samples.first().map_or(0, |s| s.len());
        if width == 0 {
            return Err(Error::InvalidParameter("signal record needs nonempty samples".into()));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.len() != width {
                return Err(Error::StepShape {
                    what: "sample",
                    step: k,
                    expected: format!("width {width}"),
                    got: format!("width {}", s.len()),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sample"));
            }
        }
        Ok(Self { samples, width })
    }

    /// Scalar signal.
    pub fn scalar(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&v| DVector::from_element(1, v)).collect())
    }

    /// One sample per row of a T_data × w matrix.
    pub fn from_rows(m: &DMatrix<T>) -> Result<Self> {
        Self::new(m.row_iter().map(|r| r.transpose()).collect())
    }

    /// Read one sample per CSV row. A first row that does not parse as
    /// numbers is taken as a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut samples = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => samples.push(DVector::from_iterator(v.len(), v.into_iter().map(lit::<T>))),
                Err(_) if k == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {k}: {e}"))),
            }
        }
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn samples(&self) -> &[DVector<T>] {
        &self.samples
    }

    /// Stacked samples σ_0, …, σ_{T_data−1}.
    pub fn stacked(&self) -> DVector<T> {
        crate::lifted::stack(&self.samples)
    }
}

/// Depth-D block Hankel matrix: block (i, j) = σ_{i+j}, of shape
/// (D·w) × (T_data − D + 1).
pub fn hankel<T: Real>(rec: &SignalRecord<T>, depth: usize) -> Result<DMatrix<T>> {
    let t = rec.len();
    if depth == 0 || depth > t {
        return Err(Error::InvalidParameter(format!(
            "Hankel depth {depth} must lie in 1..={t}"
        )));
    }
    let w = rec.width();
    let cols = t - depth + 1;
    Ok(DMatrix::from_fn(depth * w, cols, |r, j| rec.samples[r / w + j][r % w]))
}

fn rank_tol<T: Real>() -> T {
    lit::<T>(RANK_REL_TOL).max(T::EPS)
}

/// Full row rank of the depth-D Hankel matrix.
pub fn is_persistently_exciting<T: Real>(rec: &SignalRecord<T>, depth: usize) -> bool {
    match hankel(rec, depth) {
        Ok(h) => h.nrows() <= h.ncols() && linalg::rank(&h, rank_tol()) == h.nrows(),
        Err(_) => false,
    }
}

/// Outcome of [`willems_validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct WillemsCheck<T: Real> {
    pub is_valid: bool,
    /// ‖[H(u); H(y)] g − [u; y]‖.
    pub residual: T,
    pub g: DVector<T>,
}

/// Decide whether (u_test, y_test), `depth` samples each, is a trajectory
/// of the LTI plant that produced (u_data, y_data). `order` is the state
/// dimension n; u_data must be persistently exciting of order n + depth.
pub fn willems_validate<T: Real>(
    u_data: &SignalRecord<T>,
    y_data: &SignalRecord<T>,
    depth: usize,
    order: usize,
    u_test: &SignalRecord<T>,
    y_test: &SignalRecord<T>,
) -> Result<WillemsCheck<T>> {
    willems_validate_with(u_data, y_data, depth, order, u_test, y_test, lit(TOL_WILLEMS))
}

pub fn willems_validate_with<T: Real>(
    u_data: &SignalRecord<T>,
    y_data: &SignalRecord<T>,
    depth: usize,
    order: usize,
    u_test: &SignalRecord<T>,
    y_test: &SignalRecord<T>,
    rel_tol: T,
) -> Result<WillemsCheck<T>> {
    if u_data.len() != y_data.len() {
        return Err(Error::Shape {
            what: "y_data",
            expected: format!("{}x{}", u_data.len(), y_data.width()),
            got: format!("{}x{}", y_data.len(), y_data.width()),
        });
    }
    for (what, rec, data) in [("u_test", u_test, u_data), ("y_test", y_test, y_data)] {
        if rec.len() != depth || rec.width() != data.width() {
            return Err(Error::Shape {
                what,
                expected: format!("{}x{}", depth, data.width()),
                got: format!("{}x{}", rec.len(), rec.width()),
            });
        }
    }
    let needed = order + depth;
    if !is_persistently_exciting(u_data, needed) {
        let rank = hankel(u_data, needed.min(u_data.len()))
            .map(|h| linalg::rank(&h, rank_tol()))
            .unwrap_or(0);
        return Err(Error::NotPersistentlyExciting {
            order: needed,
            rank,
            needed: needed * u_data.width(),
        });
    }
    let hu = hankel(u_data, depth)?;
    let hy = hankel(y_data, depth)?;
    let mut a = DMatrix::zeros(hu.nrows() + hy.nrows(), hu.ncols());
    a.rows_mut(0, hu.nrows()).copy_from(&hu);
    a.rows_mut(hu.nrows(), hy.nrows()).copy_from(&hy);
    let mut rhs = DVector::zeros(a.nrows());
    rhs.rows_mut(0, hu.nrows()).copy_from(&u_test.stacked());
    rhs.rows_mut(hu.nrows(), hy.nrows()).copy_from(&y_test.stacked());
    let g = linalg::lstsq(&a, &rhs);
    let residual = (&a * &g - &rhs).norm();
    let is_valid = residual <= rel_tol * rhs.norm().max(T::EPS);
    Ok(WillemsCheck { is_valid, residual, g })
}

/// PBH test: rank [λI − A, B] = n at every eigenvalue λ of A.
pub fn is_controllable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape {
            what: "A",
            expected: format!("{}x{}", n, n),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if b.nrows() != n {
        return Err(Error::Shape {
            what: "B",
            expected: format!("{}x{}", n, b.ncols()),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    if n == 0 {
        return Ok(true);
    }
    let eigs = a.complex_eigenvalues();
    let scale = a.amax().max(b.amax()).max(T::one());
    let tol = lit::<T>(1e-10).max(T::EPS * lit(100.0)) * scale;
    for lam in eigs.iter() {
        // [λI − A, B] = X + iY through its real embedding [X, −Y; Y, X],
        // which has every singular value twice.
        let m = n + b.ncols();
        let x = DMatrix::from_fn(n, m, |i, j| {
            if j < n {
                (if i == j { lam.re } else { T::zero() }) - a[(i, j)]
            } else {
                b[(i, j - n)]
            }
        });
        let y = DMatrix::from_fn(n, m, |i, j| if i == j { lam.im } else { T::zero() });
        let mut e = DMatrix::zeros(2 * n, 2 * m);
        e.view_mut((0, 0), (n, m)).copy_from(&x);
        e.view_mut((0, m), (n, m)).copy_from(&(-&y));
        e.view_mut((n, 0), (n, m)).copy_from(&y);
        e.view_mut((n, m), (n, m)).copy_from(&x);
        let sv = linalg::singular_values(&e);
        if sv.iter().filter(|&&s| s > tol).count() < 2 * n {
            return Ok(false);
        }
    }
    Ok(true)
}
