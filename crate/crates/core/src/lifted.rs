//! Stacked finite-horizon operators, simulation and ZOH discretization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, all_finite};
use crate::scalar::{lit, Real};

/// Per-step signal dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m_u: usize,
    pub m_a: usize,
    pub p_y: usize,
    pub p_z: usize,
}

/// Discrete-time linear time-varying plant over a finite horizon.
///
/// `a`, `bu`, `ba` hold T matrices (k = 0..T-1); `cy`, `cz`, `dya`, `dzu`
/// hold T+1 (k = 0..T). The attack does not act at step T, so `dya[T]` is
/// carried along for shape uniformity only.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem<T: Real> {
    horizon: usize,
    dims: Dims,
    pub(crate) a: Vec<DMatrix<T>>,
    pub(crate) bu: Vec<DMatrix<T>>,
    pub(crate) ba: Vec<DMatrix<T>>,
    pub(crate) cy: Vec<DMatrix<T>>,
    pub(crate) cz: Vec<DMatrix<T>>,
    pub(crate) dya: Vec<DMatrix<T>>,
    pub(crate) dzu: Vec<DMatrix<T>>,
}

/// Raw per-step matrices used to build an [`LtvSystem`].
#[derive(Debug, Clone)]
pub struct LtvParts<T: Real> {
    pub a: Vec<DMatrix<T>>,
    pub bu: Vec<DMatrix<T>>,
    pub ba: Vec<DMatrix<T>>,
    pub cy: Vec<DMatrix<T>>,
    pub cz: Vec<DMatrix<T>>,
    pub dya: Vec<DMatrix<T>>,
    pub dzu: Vec<DMatrix<T>>,
}

fn check_seq<T: Real>(
    what: &'static str,
    seq: &[DMatrix<T>],
    len: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if seq.len() != len {
        return Err(Error::Shape {
            what,
            expected: format!("{len} matrices"),
            got: format!("{}", seq.len()),
        });
    }
    for (k, m) in seq.iter().enumerate() {
        if m.shape() != (rows, cols) {
            return Err(Error::StepShape {
                what,
                step: k,
                expected: format!("{rows}x{cols}"),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if !all_finite(m) {
            return Err(Error::NonFinite(what));
        }
    }
    Ok(())
}

impl<T: Real> LtvSystem<T> {
    pub fn new(parts: LtvParts<T>) -> Result<Self> {
        let horizon = parts.a.len();
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        let n = parts.a[0].nrows();
        let m_u = parts.bu.first().map_or(0, |m| m.ncols());
        let m_a = parts.ba.first().map_or(0, |m| m.ncols());
        let p_y = parts.cy.first().map_or(0, |m| m.nrows());
        let p_z = parts.cz.first().map_or(0, |m| m.nrows());
        check_seq("A", &parts.a, horizon, n, n)?;
        check_seq("Bu", &parts.bu, horizon, n, m_u)?;
        check_seq("Ba", &parts.ba, horizon, n, m_a)?;
        check_seq("Cy", &parts.cy, horizon + 1, p_y, n)?;
        check_seq("Cz", &parts.cz, horizon + 1, p_z, n)?;
        check_seq("Dya", &parts.dya, horizon + 1, p_y, m_a)?;
        check_seq("Dzu", &parts.dzu, horizon + 1, p_z, m_u)?;
        Ok(Self {
            horizon,
            dims: Dims {
                n,
                m_u,
                m_a,
                p_y,
                p_z,
            },
            a: parts.a,
            bu: parts.bu,
            ba: parts.ba,
            cy: parts.cy,
            cz: parts.cz,
            dya: parts.dya,
            dzu: parts.dzu,
        })
    }

    /// Replicate one set of matrices over the horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        a: DMatrix<T>,
        bu: DMatrix<T>,
        ba: DMatrix<T>,
        cy: DMatrix<T>,
        cz: DMatrix<T>,
        dya: DMatrix<T>,
        dzu: DMatrix<T>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Self::new(LtvParts {
            a: vec![a; horizon],
            bu: vec![bu; horizon],
            ba: vec![ba; horizon],
            cy: vec![cy; horizon + 1],
            cz: vec![cz; horizon + 1],
            dya: vec![dya; horizon + 1],
            dzu: vec![dzu; horizon + 1],
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn a(&self, k: usize) -> &DMatrix<T> {
        &self.a[k]
    }
    pub fn bu(&self, k: usize) -> &DMatrix<T> {
        &self.bu[k]
    }
    pub fn ba(&self, k: usize) -> &DMatrix<T> {
        &self.ba[k]
    }
    pub fn cy(&self, k: usize) -> &DMatrix<T> {
        &self.cy[k]
    }
    pub fn cz(&self, k: usize) -> &DMatrix<T> {
        &self.cz[k]
    }
    pub fn dya(&self, k: usize) -> &DMatrix<T> {
        &self.dya[k]
    }
    pub fn dzu(&self, k: usize) -> &DMatrix<T> {
        &self.dzu[k]
    }

    /// Clone into raw parts (for editing and rebuilding).
    pub fn to_parts(&self) -> LtvParts<T> {
        LtvParts {
            a: self.a.clone(),
            bu: self.bu.clone(),
            ba: self.ba.clone(),
            cy: self.cy.clone(),
            cz: self.cz.clone(),
            dya: self.dya.clone(),
            dzu: self.dzu.clone(),
        }
    }

    /// Stack x0 and the per-step attacks into the lifted attack vector.
    pub fn stack_attack(&self, x0: &DVector<T>, a: &[DVector<T>]) -> Result<DVector<T>> {
        let Dims { n, m_a, .. } = self.dims;
        if x0.len() != n {
            return Err(Error::Shape {
                what: "x0",
                expected: format!("{n}"),
                got: format!("{}", x0.len()),
            });
        }
        let a = pad_seq("attack", a, self.horizon, m_a)?;
        let mut v = DVector::zeros(n + self.horizon * m_a);
        v.rows_mut(0, n).copy_from(x0);
        for (k, ak) in a.iter().enumerate() {
            v.rows_mut(n + k * m_a, m_a).copy_from(ak);
        }
        Ok(v)
    }

    /// Inverse of [`LtvSystem::stack_attack`].
    pub fn unstack_attack(&self, v: &DVector<T>) -> (DVector<T>, Vec<DVector<T>>) {
        let Dims { n, m_a, .. } = self.dims;
        let x0 = v.rows(0, n).into_owned();
        let a = (0..self.horizon)
            .map(|k| v.rows(n + k * m_a, m_a).into_owned())
            .collect();
        (x0, a)
    }
}

fn pad_seq<T: Real>(
    what: &'static str,
    seq: &[DVector<T>],
    len: usize,
    width: usize,
) -> Result<Vec<DVector<T>>> {
    if seq.len() > len {
        return Err(Error::Shape {
            what,
            expected: format!("at most {len} samples"),
            got: format!("{}", seq.len()),
        });
    }
    let mut out = Vec::with_capacity(len);
    for (k, s) in seq.iter().enumerate() {
        if s.len() != width {
            return Err(Error::StepShape {
                what,
                step: k,
                expected: format!("{width}"),
                got: format!("{}", s.len()),
            });
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        out.push(s.clone());
    }
    out.resize(len, DVector::zeros(width));
    Ok(out)
}

/// Stacked block operators of an [`LtvSystem`].
#[derive(Debug, Clone)]
pub struct LiftedSystem<T: Real> {
    pub horizon: usize,
    pub dims: Dims,
    pub a: DMatrix<T>,
    pub bu: DMatrix<T>,
    pub ba: DMatrix<T>,
    pub cy: DMatrix<T>,
    pub cz: DMatrix<T>,
    pub dya: DMatrix<T>,
    pub dzu: DMatrix<T>,
    /// Block-downshift on the state stack.
    pub z: DMatrix<T>,
    /// (I − 𝒵𝒜)⁻¹.
    pub resolvent: DMatrix<T>,
}

impl<T: Real> LiftedSystem<T> {
    pub fn nx(&self) -> usize {
        (self.horizon + 1) * self.dims.n
    }
    pub fn nu(&self) -> usize {
        (self.horizon + 1) * self.dims.m_u
    }
    pub fn na(&self) -> usize {
        self.dims.n + self.horizon * self.dims.m_a
    }
    pub fn ny(&self) -> usize {
        (self.horizon + 1) * self.dims.p_y
    }
    pub fn nz(&self) -> usize {
        (self.horizon + 1) * self.dims.p_z
    }

    /// Time step of row `i` of the stacked attack vector (x0 counts as 0).
    pub fn attack_step(&self, i: usize) -> usize {
        if i < self.dims.n {
            0
        } else {
            (i - self.dims.n) / self.dims.m_a.max(1)
        }
    }

    /// I − 𝒵𝒜.
    pub fn i_minus_za(&self) -> DMatrix<T> {
        DMatrix::identity(self.nx(), self.nx()) - &self.z * &self.a
    }
}

/// Build the stacked operators.
pub fn lift<T: Real>(sys: &LtvSystem<T>) -> LiftedSystem<T> {
    let t = sys.horizon;
    let Dims {
        n,
        m_u,
        m_a,
        p_y,
        p_z,
    } = sys.dims;
    let nx = (t + 1) * n;
    let nu = (t + 1) * m_u;
    let na = n + t * m_a;
    let ny = (t + 1) * p_y;
    let nz = (t + 1) * p_z;

    let mut a = DMatrix::zeros(nx, nx);
    let mut bu = DMatrix::zeros(nx, nu);
    let mut ba = DMatrix::zeros(nx, na);
    ba.view_mut((0, 0), (n, n)).fill_with_identity();
    for k in 0..t {
        a.view_mut((k * n, k * n), (n, n)).copy_from(&sys.a[k]);
        bu.view_mut((k * n, k * m_u), (n, m_u)).copy_from(&sys.bu[k]);
        ba.view_mut(((k + 1) * n, n + k * m_a), (n, m_a))
            .copy_from(&sys.ba[k]);
    }
    let mut cy = DMatrix::zeros(ny, nx);
    let mut cz = DMatrix::zeros(nz, nx);
    let mut dzu = DMatrix::zeros(nz, nu);
    let mut dya = DMatrix::zeros(ny, na);
    for k in 0..=t {
        cy.view_mut((k * p_y, k * n), (p_y, n)).copy_from(&sys.cy[k]);
        cz.view_mut((k * p_z, k * n), (p_z, n)).copy_from(&sys.cz[k]);
        dzu.view_mut((k * p_z, k * m_u), (p_z, m_u))
            .copy_from(&sys.dzu[k]);
        if k < t {
            dya.view_mut((k * p_y, n + k * m_a), (p_y, m_a))
                .copy_from(&sys.dya[k]);
        }
    }
    let mut z = DMatrix::zeros(nx, nx);
    for k in 0..t {
        z.view_mut(((k + 1) * n, k * n), (n, n)).fill_with_identity();
    }
    let resolvent = resolvent_of(&a, &z, n);
    LiftedSystem {
        horizon: t,
        dims: sys.dims,
        a,
        bu,
        ba,
        cy,
        cz,
        dya,
        dzu,
        z,
        resolvent,
    }
}

fn resolvent_of<T: Real>(a: &DMatrix<T>, z: &DMatrix<T>, n: usize) -> DMatrix<T> {
    let nx = a.nrows();
    let m = DMatrix::identity(nx, nx) - z * a;
    linalg::left_solve_unit_lower(&m, &DMatrix::identity(nx, nx), n.max(1))
        .expect("I - ZA is unit lower block triangular")
}

/// Sampled trajectory returned by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub y: Vec<DVector<T>>,
    pub z: Vec<DVector<T>>,
    /// Output of the same run with the attack removed.
    pub y_nominal: Vec<DVector<T>>,
}

impl<T: Real> Trajectory<T> {
    /// Cumulative ‖y − y_n‖² after each sample.
    pub fn cumulative_deviation(&self) -> Vec<T> {
        let mut acc = T::zero();
        self.y
            .iter()
            .zip(&self.y_nominal)
            .map(|(y, yn)| {
                acc += (y - yn).norm_squared();
                acc
            })
            .collect()
    }
}

fn run_open_loop<T: Real>(
    sys: &LtvSystem<T>,
    x0: &DVector<T>,
    u: &[DVector<T>],
    a: &[DVector<T>],
) -> (Vec<DVector<T>>, Vec<DVector<T>>, Vec<DVector<T>>) {
    let t = sys.horizon;
    let mut x = Vec::with_capacity(t + 1);
    x.push(x0.clone());
    for k in 0..t {
        let next = &sys.a[k] * &x[k] + &sys.bu[k] * &u[k] + &sys.ba[k] * &a[k];
        x.push(next);
    }
    let y = (0..=t)
        .map(|k| {
            let mut yk = &sys.cy[k] * &x[k];
            if k < t {
                yk += &sys.dya[k] * &a[k];
            }
            yk
        })
        .collect();
    let z = (0..=t)
        .map(|k| &sys.cz[k] * &x[k] + &sys.dzu[k] * &u[k])
        .collect();
    (x, y, z)
}

/// Open-loop simulation. `u` may carry T or T+1 samples (u_T only reaches
/// z_T through D_zu); both `u` and `a` are zero-padded.
pub fn simulate<T: Real>(
    sys: &LtvSystem<T>,
    x0: &DVector<T>,
    u: &[DVector<T>],
    a: &[DVector<T>],
) -> Result<Trajectory<T>> {
    let Dims { n, m_u, m_a, .. } = sys.dims;
    if x0.len() != n {
        return Err(Error::Shape {
            what: "x0",
            expected: format!("{n}"),
            got: format!("{}", x0.len()),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("x0"));
    }
    let u = pad_seq("input", u, sys.horizon + 1, m_u)?;
    let a = pad_seq("attack", a, sys.horizon, m_a)?;
    let (x, y, z) = run_open_loop(sys, x0, &u, &a);
    let zero_a = vec![DVector::zeros(m_a); sys.horizon];
    let (_, y_nominal, _) = run_open_loop(sys, x0, &u, &zero_a);
    Ok(Trajectory {
        x,
        u,
        y,
        z,
        y_nominal,
    })
}

/// Concatenate a sample sequence into one stacked vector.
pub fn stack<T: Real>(seq: &[DVector<T>]) -> DVector<T> {
    let len = seq.iter().map(|s| s.len()).sum();
    let mut v = DVector::zeros(len);
    let mut off = 0;
    for s in seq {
        v.rows_mut(off, s.len()).copy_from(s);
        off += s.len();
    }
    v
}

/// Continuous-time LTI plant sampled with period `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLti<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub ts: T,
}

/// Zero-order-hold discretization through the augmented exponential
/// exp([[A, B], [0, 0]]·Ts) = [[Ad, Bd], [0, I]].
pub fn discretize_zoh<T: Real>(c: &ContinuousLti<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = c.a.nrows();
    let m = c.b.ncols();
    if c.a.ncols() != n || c.b.nrows() != n {
        return Err(Error::Shape {
            what: "continuous plant",
            expected: format!("A {n}x{n}, B {n}x{m}"),
            got: format!(
                "A {}x{}, B {}x{}",
                c.a.nrows(),
                c.a.ncols(),
                c.b.nrows(),
                c.b.ncols()
            ),
        });
    }
    if !(c.ts > T::zero()) || !c.ts.is_finite() {
        return Err(Error::InvalidParameter("sampling period must be positive".into()));
    }
    if !all_finite(&c.a) || !all_finite(&c.b) {
        return Err(Error::NonFinite("continuous plant"));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&c.a * c.ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(&c.b * c.ts));
    let e = linalg::expm(&aug);
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Parameters of the two-mass spring-damper chain.
///
/// States are ordered (p1, p2, v1, v2); mass 1 hangs on the wall through
/// (k1, b1), mass 2 on mass 1 through (k2, b2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoPlantParams {
    pub masses: [f64; 2],
    pub stiffness: [f64; 2],
    pub damping: [f64; 2],
    pub ts: f64,
    pub horizon: usize,
    /// Mass driven by the control force.
    pub input_mass: usize,
    /// Mass hit by the actuator attack, if any.
    pub attack_mass: Option<usize>,
    /// Measured states.
    pub sensors: Vec<usize>,
    /// Sensors (indices into `sensors`) carrying an additive attack channel.
    pub sensor_attacks: Vec<usize>,
    /// Regulated states.
    pub regulated: Vec<usize>,
}

impl Default for DemoPlantParams {
    fn default() -> Self {
        Self {
            masses: [1.0, 1.0],
            stiffness: [1.0, 1.0],
            damping: [0.1, 0.1],
            ts: 0.5,
            horizon: 2,
            input_mass: 0,
            attack_mass: Some(1),
            sensors: vec![0, 1, 3],
            sensor_attacks: Vec::new(),
            regulated: vec![0, 1],
        }
    }
}

impl DemoPlantParams {
    /// Continuous dynamics with one force column per mass.
    pub fn continuous<T: Real>(&self) -> Result<ContinuousLti<T>> {
        let phys = self
            .masses
            .iter()
            .chain(&self.stiffness)
            .chain(&self.damping)
            .chain(std::iter::once(&self.ts));
        for &v in phys {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "physical parameters must be positive, got {v}"
                )));
            }
        }
        let [m1, m2] = self.masses;
        let [k1, k2] = self.stiffness;
        let [b1, b2] = self.damping;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            -(k1 + k2) / m1, k2 / m1, -(b1 + b2) / m1, b2 / m1,
            k2 / m2, -k2 / m2, b2 / m2, -b2 / m2,
        ]);
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(4, 2, &[
            0.0, 0.0,
            0.0, 0.0,
            1.0 / m1, 0.0,
            0.0, 1.0 / m2,
        ]);
        Ok(ContinuousLti {
            a: a.map(lit),
            b: b.map(lit),
            ts: lit(self.ts),
        })
    }
}

/// Two-mass spring-damper chain discretized with ZOH and replicated over the
/// horizon.
pub fn spring_damper_demo_plant<T: Real>(params: &DemoPlantParams) -> Result<LtvSystem<T>> {
    if params.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let check_state = |what: &str, idx: usize| {
        if idx >= 4 {
            Err(Error::InvalidParameter(format!("{what} index {idx} out of range 0..4")))
        } else {
            Ok(())
        }
    };
    if params.input_mass > 1 {
        return Err(Error::InvalidParameter("input_mass must be 0 or 1".into()));
    }
    if params.attack_mass.is_some_and(|m| m > 1) {
        return Err(Error::InvalidParameter("attack_mass must be 0 or 1".into()));
    }
    for &s in &params.sensors {
        check_state("sensor", s)?;
    }
    for &s in &params.regulated {
        check_state("regulated", s)?;
    }
    for &s in &params.sensor_attacks {
        if s >= params.sensors.len() {
            return Err(Error::InvalidParameter(format!(
                "sensor attack index {s} out of range"
            )));
        }
    }
    let cont = params.continuous::<T>()?;
    let (ad, bd) = discretize_zoh(&cont)?;
    let bu = bd.column(params.input_mass).into_owned();
    let act = usize::from(params.attack_mass.is_some());
    let m_a = act + params.sensor_attacks.len();
    let p_y = params.sensors.len();
    let mut ba = DMatrix::zeros(4, m_a);
    if let Some(m) = params.attack_mass {
        ba.set_column(0, &bd.column(m));
    }
    let mut cy = DMatrix::zeros(p_y, 4);
    for (r, &s) in params.sensors.iter().enumerate() {
        cy[(r, s)] = T::one();
    }
    let mut dya = DMatrix::zeros(p_y, m_a);
    for (c, &s) in params.sensor_attacks.iter().enumerate() {
        dya[(s, act + c)] = T::one();
    }
    let p_z = params.regulated.len();
    let mut cz = DMatrix::zeros(p_z, 4);
    for (r, &s) in params.regulated.iter().enumerate() {
        cz[(r, s)] = T::one();
    }
    let dzu = DMatrix::zeros(p_z, 1);
    LtvSystem::time_invariant(params.horizon, ad, DMatrix::from_column_slice(4, 1, bu.as_slice()), ba, cy, cz, dya, dzu)
}
