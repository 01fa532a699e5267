//! JSON documents for plants, controllers, certificates and synthesis
//! results. Matrices are written row-major as arrays of rows, in f64.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{Dims, LiftedSystem, LtvParts, LtvSystem};
use crate::regret::RegretCertificate;
use crate::scalar::{lit, Real};
use crate::sls::{SlsResponse, TopologyMask};
use crate::synthesis::{LambdaEvaluation, SynthesisResult};

/// Row-major matrix.
pub type MatrixDoc = Vec<Vec<f64>>;

pub fn matrix_to_doc<T: Real>(m: &DMatrix<T>) -> MatrixDoc {
    m.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

/// Parse a row-major matrix of the given shape. `[]` stands for any
/// matrix with a zero dimension.
pub fn matrix_from_doc<T: Real>(what: &'static str, d: &MatrixDoc, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if d.is_empty() && rows * cols == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    if d.len() != rows || d.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape {
            what,
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", d.len(), d.first().map_or(0, |r| r.len())),
        });
    }
    if d.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| lit(d[i][j])))
}

pub fn vector_to_doc<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

pub fn vector_from_doc<T: Real>(what: &'static str, v: &[f64], len: usize) -> Result<DVector<T>> {
    if v.len() != len {
        return Err(Error::Shape {
            what,
            expected: format!("{len}"),
            got: format!("{}", v.len()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(DVector::from_iterator(len, v.iter().map(|&x| lit(x))))
}

/// A matrix shared by every step, or one matrix per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeqDoc {
    Constant(MatrixDoc),
    PerStep(Vec<MatrixDoc>),
}

impl SeqDoc {
    fn first_shape(&self) -> Option<(usize, Option<usize>)> {
        let m = match self {
            SeqDoc::Constant(m) => m,
            SeqDoc::PerStep(ms) => ms.first()?,
        };
        Some((m.len(), m.first().map(|r| r.len())))
    }

    fn expand<T: Real>(&self, what: &'static str, len: usize, rows: usize, cols: usize) -> Result<Vec<DMatrix<T>>> {
        match self {
            SeqDoc::Constant(m) => Ok(vec![matrix_from_doc(what, m, rows, cols)?; len]),
            SeqDoc::PerStep(ms) => {
                if ms.len() != len {
                    return Err(Error::Shape {
                        what,
                        expected: format!("{len} matrices"),
                        got: format!("{}", ms.len()),
                    });
                }
                ms.iter().map(|m| matrix_from_doc(what, m, rows, cols)).collect()
            }
        }
    }
}

/// Plant document. `a`, `bu`, `ba` hold T matrices when given per step,
/// the output maps T+1. `dya` and `dzu` default to zero. `dims` is needed
/// only when some matrix has a zero dimension that cannot be inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    pub a: SeqDoc,
    pub bu: SeqDoc,
    pub ba: SeqDoc,
    pub cy: SeqDoc,
    pub cz: SeqDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dya: Option<SeqDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dzu: Option<SeqDoc>,
}

impl SystemDoc {
    pub fn from_system<T: Real>(sys: &LtvSystem<T>) -> Self {
        let p = sys.to_parts();
        let seq = |v: &[DMatrix<T>]| SeqDoc::PerStep(v.iter().map(matrix_to_doc).collect());
        Self {
            horizon: sys.horizon(),
            dims: Some(sys.dims()),
            a: seq(&p.a),
            bu: seq(&p.bu),
            ba: seq(&p.ba),
            cy: seq(&p.cy),
            cz: seq(&p.cz),
            dya: Some(seq(&p.dya)),
            dzu: Some(seq(&p.dzu)),
        }
    }

    fn infer_dims(&self) -> Result<Dims> {
        if let Some(d) = self.dims {
            return Ok(d);
        }
        let missing = |what: &str| Error::InvalidParameter(format!("cannot infer {what}; give dims explicitly"));
        let (n, _) = self.a.first_shape().ok_or_else(|| missing("n"))?;
        let cols = |s: &SeqDoc, what: &str| -> Result<usize> {
            match s.first_shape() {
                Some((_, Some(c))) => Ok(c),
                _ if n == 0 => Err(missing(what)),
                _ => Ok(0),
            }
        };
        Ok(Dims {
            n,
            m_u: cols(&self.bu, "m_u")?,
            m_a: cols(&self.ba, "m_a")?,
            p_y: self.cy.first_shape().map_or(0, |s| s.0),
            p_z: self.cz.first_shape().map_or(0, |s| s.0),
        })
    }

    pub fn to_system<T: Real>(&self) -> Result<LtvSystem<T>> {
        let t = self.horizon;
        if t == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        let Dims { n, m_u, m_a, p_y, p_z } = self.infer_dims()?;
        let zero = |rows: usize, cols: usize| vec![DMatrix::zeros(rows, cols); t + 1];
        let parts = LtvParts {
            a: self.a.expand("A", t, n, n)?,
            bu: self.bu.expand("Bu", t, n, m_u)?,
            ba: self.ba.expand("Ba", t, n, m_a)?,
            cy: self.cy.expand("Cy", t + 1, p_y, n)?,
            cz: self.cz.expand("Cz", t + 1, p_z, n)?,
            dya: match &self.dya {
                Some(s) => s.expand("Dya", t + 1, p_y, m_a)?,
                None => zero(p_y, m_a),
            },
            dzu: match &self.dzu {
                Some(s) => s.expand("Dzu", t + 1, p_z, m_u)?,
                None => zero(p_z, m_u),
            },
        };
        let sys = LtvSystem::new(parts)?;
        if sys.dims() != (Dims { n, m_u, m_a, p_y, p_z }) {
            return Err(Error::InvalidParameter("plant dimensions disagree with dims".into()));
        }
        Ok(sys)
    }
}

/// Controller document: the response Ω and its gain K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub horizon: usize,
    pub dims: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub r: MatrixDoc,
    pub n: MatrixDoc,
    pub m: MatrixDoc,
    pub l: MatrixDoc,
    pub k: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyMask>,
}

impl ControllerDoc {
    pub fn new<T: Real>(omega: &SlsResponse<T>, gain: &DMatrix<T>, strategy: Option<&str>) -> Self {
        Self {
            horizon: omega.horizon,
            dims: omega.dims,
            strategy: strategy.map(str::to_owned),
            r: matrix_to_doc(&omega.r),
            n: matrix_to_doc(&omega.n),
            m: matrix_to_doc(&omega.m),
            l: matrix_to_doc(&omega.l),
            k: matrix_to_doc(gain),
            topology: omega.topology.clone(),
        }
    }

    /// Ω and K, checked against the lifted plant.
    pub fn to_response<T: Real>(&self, lifted: &LiftedSystem<T>) -> Result<(SlsResponse<T>, DMatrix<T>)> {
        if self.horizon != lifted.horizon || self.dims != lifted.dims {
            return Err(Error::Shape {
                what: "controller",
                expected: format!("T={} {:?}", lifted.horizon, lifted.dims),
                got: format!("T={} {:?}", self.horizon, self.dims),
            });
        }
        let (nx, nu, ny) = (lifted.nx(), lifted.nu(), lifted.ny());
        let omega = SlsResponse {
            horizon: self.horizon,
            dims: self.dims,
            r: matrix_from_doc("R", &self.r, nx, nx)?,
            n: matrix_from_doc("N", &self.n, nx, ny)?,
            m: matrix_from_doc("M", &self.m, nu, nx)?,
            l: matrix_from_doc("L", &self.l, nu, ny)?,
            topology: self.topology.clone(),
        };
        let k = matrix_from_doc("K", &self.k, nu, ny)?;
        Ok((omega, k))
    }
}

/// Regret certificate document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub slack_min_eig: f64,
    pub attack: Option<Vec<f64>>,
    pub achieved_regret: f64,
    pub stealth: f64,
    pub solver_iterations: usize,
}

impl CertificateDoc {
    pub fn new<T: Real>(c: &RegretCertificate<T>) -> Self {
        Self {
            alpha: c.alpha.as_f64(),
            lambda: c.lambda.as_f64(),
            mu: c.mu.as_f64(),
            slack_min_eig: c.slack_min_eig.as_f64(),
            attack: c.attack.as_ref().map(vector_to_doc),
            achieved_regret: c.achieved_regret.as_f64(),
            stealth: c.stealth.as_f64(),
            solver_iterations: c.solver_iterations,
        }
    }
}

/// Synthesis outcome without the matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisDoc {
    pub strategy: String,
    pub horizon: usize,
    pub lambda: f64,
    pub mu_bar: f64,
    pub mu: f64,
    pub shor_lower_bound: f64,
    pub rank_one: bool,
    pub irm_log: Vec<f64>,
    pub evaluations: Vec<LambdaEvaluation>,
    pub certificate: CertificateDoc,
}

impl SynthesisDoc {
    pub fn new<T: Real>(r: &SynthesisResult<T>) -> Self {
        Self {
            strategy: r.strategy.name().to_owned(),
            horizon: r.omega.horizon,
            lambda: r.lambda.as_f64(),
            mu_bar: r.mu_bar.as_f64(),
            mu: r.certificate.mu.as_f64(),
            shor_lower_bound: r.shor_lower_bound.as_f64(),
            rank_one: r.rank_one,
            irm_log: r.irm_log.iter().map(|v| v.as_f64()).collect(),
            evaluations: r.evaluations.clone(),
            certificate: CertificateDoc::new(&r.certificate),
        }
    }
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, doc: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
