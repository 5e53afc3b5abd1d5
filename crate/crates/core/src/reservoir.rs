//! Reservoir construction and iteration.
//!
//! A reservoir is the map `x ↦ σ(Ax + Cz + b)`. This module generates the
//! random matrices, builds the two-layer shift construction used for
//! universality arguments, drives reservoirs with inputs or with their own
//! readout, and checks contraction, embedding and isomorphism properties.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dynsys::{wrap_angle, ObservationFn, DIVERGENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::rng::{stream, stream_rng, LabRng};
use crate::series::TimeSeries;
use crate::training::Readout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Tanh => v.tanh(),
            Self::Identity => v,
            Self::Relu => v.max(0.0),
        }
    }

    /// Derivative at pre-activation `v`.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Self::Identity => 1.0,
            Self::Relu => {
                if v > 0.0 { 1.0 } else { 0.0 }
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "identity" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// A reservoir `x ↦ σ(Ax + Cz + b)` with `n` states and `d` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDoc", into = "SpecDoc")]
pub struct ReservoirSpec {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    pub activation: Activation,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SpecDoc {
    n: usize,
    d: usize,
    activation: Activation,
    seed: u64,
    a: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl From<ReservoirSpec> for SpecDoc {
    fn from(s: ReservoirSpec) -> Self {
        SpecDoc {
            n: s.n(),
            d: s.d(),
            activation: s.activation,
            seed: s.seed,
            a: row_major(&s.a),
            c: row_major(&s.c),
            b: s.b.as_slice().to_vec(),
        }
    }
}

impl TryFrom<SpecDoc> for ReservoirSpec {
    type Error = Error;

    fn try_from(doc: SpecDoc) -> Result<Self> {
        if doc.a.len() != doc.n * doc.n {
            return Err(Error::Dimension { context: "reservoir JSON a", expected: doc.n * doc.n, found: doc.a.len() });
        }
        if doc.c.len() != doc.n * doc.d {
            return Err(Error::Dimension { context: "reservoir JSON c", expected: doc.n * doc.d, found: doc.c.len() });
        }
        ReservoirSpec::new(
            DMatrix::from_row_slice(doc.n, doc.n, &doc.a),
            DMatrix::from_row_slice(doc.n, doc.d, &doc.c),
            DVector::from_vec(doc.b),
            doc.activation,
            doc.seed,
        )
    }
}

impl ReservoirSpec {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, b: DVector<f64>, activation: Activation, seed: u64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("reservoir needs at least one state".into()));
        }
        if a.ncols() != n {
            return Err(Error::Dimension { context: "reservoir matrix A columns", expected: n, found: a.ncols() });
        }
        if c.nrows() != n {
            return Err(Error::Dimension { context: "input matrix C rows", expected: n, found: c.nrows() });
        }
        if b.len() != n {
            return Err(Error::Dimension { context: "bias b", expected: n, found: b.len() });
        }
        if a.iter().chain(c.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("reservoir entries must be finite".into()));
        }
        Ok(Self { a, c, b, activation, seed })
    }

    /// Linear reservoir `x ↦ Ax + Cz`.
    pub fn linear(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, c, DVector::zeros(n), Activation::Identity, 0)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.c.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn preactivation(&self, x: &DVector<f64>, z: &[f64]) -> DVector<f64> {
        &self.a * x + &self.c * DVector::from_column_slice(z) + &self.b
    }

    /// One reservoir update.
    pub fn step(&self, x: &DVector<f64>, z: &[f64]) -> DVector<f64> {
        self.preactivation(x, z).map(|v| self.activation.apply(v))
    }

    /// Feedback matrix `A + C Wᵀ` of the autonomous system.
    pub fn closed_loop_matrix(&self, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_feedback(w)?;
        Ok(&self.a + &self.c * w.transpose())
    }

    /// Pre-activation `Ax + C(Wᵀx) + b` of the autonomous system.
    pub fn autonomous_preactivation(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + self.c.column(0) * w.dot(x) + &self.b
    }

    /// `ψ(x) = σ(Ax + C(Wᵀx) + b)`.
    pub fn autonomous_step(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.autonomous_preactivation(w, x).map(|v| self.activation.apply(v))
    }

    fn check_feedback(&self, w: &DVector<f64>) -> Result<()> {
        if self.d() != 1 {
            return Err(Error::Dimension { context: "autonomous feedback input dimension", expected: 1, found: self.d() });
        }
        if w.len() != self.n() {
            return Err(Error::Dimension { context: "readout length", expected: self.n(), found: w.len() });
        }
        Ok(())
    }

    fn check_state(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.n() {
            return Err(Error::Dimension { context: "initial reservoir state", expected: self.n(), found: x0.len() });
        }
        Ok(())
    }
}

/// How the reservoir matrix is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixScheme {
    /// i.i.d. `U[−1,1]` entries scaled so that `‖A‖₂ = target`.
    UniformRescaled2Norm { target: f64 },
    /// Each entry nonzero with probability `mean_degree / n`, standard
    /// Gaussian weights, scaled to the given spectral radius.
    GaussianErdosRenyi { mean_degree: f64, spectral_radius: f64 },
    LowerShift,
    Explicit { rows: Vec<Vec<f64>> },
}

/// How `C` or `b` is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorScheme {
    Uniform { lo: f64, hi: f64 },
    Gaussian { sd: f64 },
    /// First unit vector (for `C` with `d > 1`, the first `d` unit vectors).
    UnitE1,
    Zero,
    /// Row-major values.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirGenConfig {
    pub n: usize,
    pub d: usize,
    pub a_scheme: MatrixScheme,
    pub c_scheme: VectorScheme,
    pub b_scheme: VectorScheme,
    pub activation: Activation,
    pub seed: u64,
}

impl ReservoirGenConfig {
    /// Uniform `‖A‖₂ = 1` reservoir with `U[−0.05, 0.05]` input and bias.
    pub fn uniform_esn(n: usize, seed: u64) -> Self {
        Self {
            n,
            d: 1,
            a_scheme: MatrixScheme::UniformRescaled2Norm { target: 1.0 },
            c_scheme: VectorScheme::Uniform { lo: -0.05, hi: 0.05 },
            b_scheme: VectorScheme::Uniform { lo: -0.05, hi: 0.05 },
            activation: Activation::Tanh,
            seed,
        }
    }

    /// Sparse Gaussian reservoir (mean degree 6, radius 1) with `N(0, 0.1²)`
    /// input and bias.
    pub fn sparse_esn(n: usize, seed: u64) -> Self {
        Self {
            n,
            d: 1,
            a_scheme: MatrixScheme::GaussianErdosRenyi { mean_degree: 6.0, spectral_radius: 1.0 },
            c_scheme: VectorScheme::Gaussian { sd: 0.1 },
            b_scheme: VectorScheme::Gaussian { sd: 0.1 },
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n and d must be positive".into()));
        }
        match &self.a_scheme {
            MatrixScheme::UniformRescaled2Norm { target } if !(*target > 0.0) => {
                Err(Error::InvalidArgument(format!("target 2-norm must be positive, got {target}")))
            }
            MatrixScheme::GaussianErdosRenyi { mean_degree, spectral_radius } => {
                if !(*spectral_radius > 0.0) {
                    Err(Error::InvalidArgument(format!("spectral radius must be positive, got {spectral_radius}")))
                } else if !(*mean_degree > 0.0) || *mean_degree >= self.n as f64 {
                    Err(Error::InvalidArgument(format!("mean degree must lie in (0, n), got {mean_degree}")))
                } else {
                    Ok(())
                }
            }
            MatrixScheme::Explicit { rows } => {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    Err(Error::Dimension { context: "explicit A", expected: self.n, found: rows.len() })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

fn draw_vector(scheme: &VectorScheme, rows: usize, cols: usize, rng: &mut LabRng, what: &'static str) -> Result<DMatrix<f64>> {
    match scheme {
        VectorScheme::Uniform { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("{what}: uniform range needs lo < hi")));
            }
            let u = Uniform::new(*lo, *hi).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(DMatrix::from_fn(rows, cols, |_, _| u.sample(rng)))
        }
        VectorScheme::Gaussian { sd } => {
            let g = Normal::new(0.0, *sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(DMatrix::from_fn(rows, cols, |_, _| g.sample(rng)))
        }
        VectorScheme::UnitE1 => Ok(DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })),
        VectorScheme::Zero => Ok(DMatrix::zeros(rows, cols)),
        VectorScheme::Explicit { values } => {
            if values.len() != rows * cols {
                return Err(Error::Dimension { context: what, expected: rows * cols, found: values.len() });
            }
            Ok(DMatrix::from_row_slice(rows, cols, values))
        }
    }
}

/// `n × n` matrix with ones on the subdiagonal.
pub fn lower_shift(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

/// Draws a reservoir. Each of `A`, `C`, `b` reads its own random stream.
pub fn generate(config: &ReservoirGenConfig) -> Result<ReservoirSpec> {
    config.validate()?;
    let n = config.n;
    let mut ra = stream_rng(config.seed, stream::RESERVOIR);
    let a = match &config.a_scheme {
        MatrixScheme::UniformRescaled2Norm { target } => {
            let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            let raw = DMatrix::from_fn(n, n, |_, _| u.sample(&mut ra));
            let norm = linalg::norm2(&raw);
            if norm == 0.0 {
                return Err(Error::DegenerateMatrix("drawn A is zero and cannot be rescaled".into()));
            }
            raw * (*target / norm)
        }
        MatrixScheme::GaussianErdosRenyi { mean_degree, spectral_radius } => {
            let p = mean_degree / n as f64;
            let mut raw = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    if ra.random::<f64>() < p {
                        raw[(i, j)] = StandardNormal.sample(&mut ra);
                    }
                }
            }
            let rho = linalg::spectral_radius(&raw);
            if !(rho > 1e-300) {
                return Err(Error::DegenerateMatrix("drawn A has zero spectral radius".into()));
            }
            raw * (*spectral_radius / rho)
        }
        MatrixScheme::LowerShift => lower_shift(n),
        MatrixScheme::Explicit { rows } => linalg::from_rows(rows),
    };
    let c = draw_vector(&config.c_scheme, n, config.d, &mut stream_rng(config.seed, stream::INPUT), "C")?;
    let b = draw_vector(&config.b_scheme, n, 1, &mut stream_rng(config.seed, stream::BIAS), "b")?;
    ReservoirSpec::new(a, c, DVector::from_column_slice(b.as_slice()), config.activation, config.seed)
}

/// Parameters of the two-layer shift construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GononConfig {
    /// Hidden units.
    pub n: usize,
    /// Delay horizon; the shift holds `T0 + 1` inputs.
    pub t0: usize,
    /// Radius of the ball the hidden weights are drawn from.
    pub r: f64,
    pub d: usize,
    /// Bound on the input magnitude.
    pub m_t0: f64,
    pub seed: u64,
}

impl GononConfig {
    pub fn state_dim(&self) -> usize {
        2 * (self.d * (self.t0 + 1) + self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t0 == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n, T0 and d must be at least 1".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::InvalidArgument(format!("R must be positive, got {}", self.r)));
        }
        if !(self.m_t0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("input bound must be nonnegative, got {}", self.m_t0)));
        }
        Ok(())
    }
}

/// Shift block `S` of size `d(T0+1)`: ones on the `d`-th subdiagonal.
pub fn delay_shift(d: usize, t0: usize) -> DMatrix<f64> {
    let m = d * (t0 + 1);
    DMatrix::from_fn(m, m, |i, j| if i == j + d { 1.0 } else { 0.0 })
}

/// Builds the doubled shift/hidden-layer reservoir.
///
/// The state is `(u, l)` and the activation is ReLU, so `u − l` follows the
/// linear recursion `w' = Āw + C̄z + b̄` exactly: its first `d(T0+1)`
/// coordinates hold the last `T0+1` inputs and the remaining `n` hold the
/// hidden pre-activations `a·delay + b`.
pub fn build_gonon(config: &GononConfig) -> Result<ReservoirSpec> {
    config.validate()?;
    let d = config.d;
    let m = d * (config.t0 + 1);
    let n = config.n;
    let mut ra = stream_rng(config.seed, stream::RESERVOIR);
    let mut hidden = DMatrix::zeros(n, m);
    for i in 0..n {
        // Uniform in the ball: Gaussian direction, radius R·u^(1/m).
        let dir: DVector<f64> = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut ra));
        let norm = dir.norm().max(f64::MIN_POSITIVE);
        let radius = config.r * ra.random::<f64>().powf(1.0 / m as f64);
        hidden.row_mut(i).copy_from(&(dir * (radius / norm)).transpose());
    }
    let bound = (config.m_t0 * config.r).max(1.0);
    let ub = Uniform::new_inclusive(-bound, bound).expect("valid range");
    let mut rb = stream_rng(config.seed, stream::BIAS);
    let bias = DVector::from_fn(n, |_, _| ub.sample(&mut rb));

    let s = delay_shift(d, config.t0);
    let c_small = DMatrix::from_fn(m, d, |i, j| if i == j { 1.0 } else { 0.0 });
    let half = m + n;
    let mut a_bar = DMatrix::zeros(half, half);
    a_bar.view_mut((0, 0), (m, m)).copy_from(&s);
    a_bar.view_mut((m, 0), (n, m)).copy_from(&(&hidden * &s));
    let mut c_bar = DMatrix::zeros(half, d);
    c_bar.view_mut((0, 0), (m, d)).copy_from(&c_small);
    c_bar.view_mut((m, 0), (n, d)).copy_from(&(&hidden * &c_small));
    let mut b_bar = DVector::zeros(half);
    b_bar.rows_mut(m, n).copy_from(&bias);

    let mut a = DMatrix::zeros(2 * half, 2 * half);
    a.view_mut((0, 0), (half, half)).copy_from(&a_bar);
    a.view_mut((0, half), (half, half)).copy_from(&(-&a_bar));
    a.view_mut((half, 0), (half, half)).copy_from(&(-&a_bar));
    a.view_mut((half, half), (half, half)).copy_from(&a_bar);
    let mut c = DMatrix::zeros(2 * half, d);
    c.view_mut((0, 0), (half, d)).copy_from(&c_bar);
    c.view_mut((half, 0), (half, d)).copy_from(&(-&c_bar));
    let mut b = DVector::zeros(2 * half);
    b.rows_mut(0, half).copy_from(&b_bar);
    b.rows_mut(half, half).copy_from(&(-&b_bar));
    ReservoirSpec::new(a, c, b, Activation::Relu, config.seed)
}

/// Drives the reservoir with `input`, returning `len(input) + 1` states
/// starting with `x0`.
pub fn drive(spec: &ReservoirSpec, input: &TimeSeries, x0: &[f64]) -> Result<TimeSeries> {
    spec.check_state(x0)?;
    if input.dim() != spec.d() {
        return Err(Error::Dimension { context: "reservoir input", expected: spec.d(), found: input.dim() });
    }
    let n = spec.n();
    let mut data = Vec::with_capacity(n * (input.len() + 1));
    let mut x = DVector::from_column_slice(x0);
    data.extend_from_slice(x.as_slice());
    for (k, z) in input.samples().enumerate() {
        x = spec.step(&x, z);
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { step: k + 1, norm });
        }
        data.extend_from_slice(x.as_slice());
    }
    Ok(TimeSeries::from_raw(n, input.step(), input.origin_index(), data))
}

/// Runs the closed loop `x ↦ σ(Ax + C(Wᵀx) + b)` for `n_steps`, returning
/// `n_steps + 1` states.
pub fn autonomous_drive(spec: &ReservoirSpec, readout: &Readout, x0: &[f64], n_steps: usize) -> Result<TimeSeries> {
    spec.check_state(x0)?;
    spec.check_feedback(&readout.w)?;
    let n = spec.n();
    let mut data = Vec::with_capacity(n * (n_steps + 1));
    let mut x = DVector::from_column_slice(x0);
    data.extend_from_slice(x.as_slice());
    for step in 1..=n_steps {
        x = spec.autonomous_step(&readout.w, &x);
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { step, norm });
        }
        data.extend_from_slice(x.as_slice());
    }
    Ok(TimeSeries::from_raw(n, 1.0, 0, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalContraction {
    pub is_contracting: bool,
    pub c: f64,
}

/// Lipschitz bound `‖A‖₂` of `x ↦ σ(Ax + Cz + b)` for 1-Lipschitz `σ`.
pub fn check_global_contraction(spec: &ReservoirSpec) -> GlobalContraction {
    let c = linalg::norm2(&spec.a);
    GlobalContraction { is_contracting: c < 1.0, c }
}

/// Axis-aligned box `∏ [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension { context: "box bounds", expected: lo.len(), found: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box needs lo <= hi in every coordinate".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalContraction {
    /// No probe image left the box.
    pub invariant: bool,
    /// Largest observed ratio `‖F(x,z) − F(y,z)‖ / ‖x − y‖`.
    pub c_est: f64,
    pub escapes: usize,
    pub n_probes: usize,
}

impl LocalContraction {
    pub fn is_contracting(&self) -> bool {
        self.invariant && self.c_est < 1.0
    }
}

pub const DEFAULT_PROBES: usize = 10_000;

/// Monte-Carlo check that `F(·, z)` maps `region` into itself and contracts
/// it, for `z` drawn from the union of `inputs` (closed intervals).
pub fn check_local_contraction<F>(
    map: F,
    region: &StateBox,
    inputs: &[(f64, f64)],
    n_probes: usize,
    seed: u64,
) -> Result<LocalContraction>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    if inputs.is_empty() || inputs.iter().any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidArgument("input set needs at least one interval lo <= hi".into()));
    }
    let total: f64 = inputs.iter().map(|(a, b)| b - a).sum();
    let mut rng = stream_rng(seed, stream::PROBES);
    let mut escapes = 0;
    let mut c_est: f64 = 0.0;
    for _ in 0..n_probes {
        let z = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut z = inputs[inputs.len() - 1].1;
            for (a, b) in inputs {
                if t <= b - a {
                    z = a + t;
                    break;
                }
                t -= b - a;
            }
            z
        } else {
            inputs[rng.random_range(0..inputs.len())].0
        };
        let x = region.sample(&mut rng);
        let y = region.sample(&mut rng);
        let fx = map(&x, z);
        let fy = map(&y, z);
        if !region.contains(&fx) || !region.contains(&fy) {
            escapes += 1;
        }
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dx > 0.0 {
            let df: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            c_est = c_est.max(df / dx);
        }
    }
    Ok(LocalContraction { invariant: escapes == 0, c_est, escapes, n_probes })
}

/// Value of the linear generalised synchronisation at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct GsValue {
    pub value: DVector<f64>,
    /// `‖A‖₂^{K+1}·sup|ω|·‖C‖₂/(1 − ‖A‖₂)`; infinite when `‖A‖₂ ≥ 1`.
    pub tail_bound: f64,
}

/// Truncated series `Σ_{k=0}^{K} A^k C ω(φ^{−k}(m))`.
///
/// `past(k)` must return the observation `ω(φ^{−k}(m))` as a `d`-vector and
/// `omega_bound` bounds `|ω|` for the tail estimate. Driving the reservoir
/// with `z_k = ω(φ^k m₀)` gives `x_{k+1} → f(φ^k m₀)`.
pub fn linear_gs_series<P>(spec: &ReservoirSpec, past: P, truncation: usize, omega_bound: f64) -> Result<GsValue>
where
    P: Fn(usize) -> Vec<f64>,
{
    if spec.activation != Activation::Identity || spec.b.iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidArgument("linear GS series needs identity activation and zero bias".into()));
    }
    let rho = linalg::spectral_radius(&spec.a);
    if rho >= 1.0 {
        return Err(Error::SeriesDivergent { spectral_radius: rho });
    }
    let mut value = DVector::zeros(spec.n());
    let mut power_c = spec.c.clone();
    for k in 0..=truncation {
        let w = past(k);
        if w.len() != spec.d() {
            return Err(Error::Dimension { context: "observation", expected: spec.d(), found: w.len() });
        }
        value += &power_c * DVector::from_vec(w);
        power_c = &spec.a * power_c;
    }
    let na = linalg::norm2(&spec.a);
    let tail_bound = if na < 1.0 {
        na.powi(truncation as i32 + 1) * omega_bound * linalg::norm2(&spec.c) / (1.0 - na)
    } else {
        f64::INFINITY
    };
    Ok(GsValue { value, tail_bound })
}

/// Linear GS for a circle rotation by `epsilon`, observed through `obs`.
pub fn circle_gs(spec: &ReservoirSpec, epsilon: f64, obs: &ObservationFn, m: f64, truncation: usize) -> Result<GsValue> {
    obs.check_dim(1)?;
    let bound = match obs {
        ObservationFn::ScaledSin { amplitude } => amplitude.abs(),
        ObservationFn::Coord { .. } => std::f64::consts::TAU,
        ObservationFn::Linear { weights } => weights[0].abs() * std::f64::consts::TAU,
    };
    linear_gs_series(spec, |k| vec![obs.apply(&[wrap_angle(m - k as f64 * epsilon)])], truncation, bound)
}

/// Linear GS evaluated along a stored scalar observation record, treating
/// sample `index` as the present and earlier samples as the past.
pub fn trajectory_gs(spec: &ReservoirSpec, observations: &TimeSeries, index: usize, truncation: usize) -> Result<GsValue> {
    if index < truncation || index >= observations.len() {
        return Err(Error::OutOfRange(format!(
            "index {index} with truncation {truncation} in a record of length {}",
            observations.len()
        )));
    }
    let bound = observations.samples().flat_map(|s| s.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    linear_gs_series(spec, |k| observations.sample(index - k).to_vec(), truncation, bound)
}

/// `[C, AC, …, A^{N−1}C]`.
pub fn krylov_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let d = c.ncols();
    let mut k = DMatrix::zeros(n, n * d);
    let mut block = c.clone();
    for j in 0..n {
        k.view_mut((0, j * d), (n, d)).copy_from(&block);
        block = a * block;
    }
    k
}

/// Controllability: `{A^j C}` spans ℝᴺ.
pub fn check_condition_d(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<bool> {
    if a.nrows() != a.ncols() || c.nrows() != a.nrows() {
        return Err(Error::Dimension { context: "condition D shapes", expected: a.nrows(), found: c.nrows() });
    }
    if c.ncols() != 1 {
        return Err(Error::Dimension { context: "condition D input columns", expected: 1, found: c.ncols() });
    }
    Ok(linalg::numerical_rank(&krylov_matrix(a, c), RANK_TOL) == a.nrows())
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn checked_solve(m: DMatrix<Complex64>, rhs: DMatrix<Complex64>, what: &str) -> Result<DMatrix<Complex64>> {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax) {
        return Err(Error::SpectrumCollision(what.to_string()));
    }
    m.lu().solve(&rhs).ok_or_else(|| Error::SpectrumCollision(what.to_string()))
}

/// Independence of `(I − λ_j Aⁿ)⁻¹(I − A)⁻¹(I − Aⁿ)C` over the supplied
/// eigenvalues of the drive's period-`n` linearisation.
pub fn check_condition_c(a: &DMatrix<f64>, c: &DMatrix<f64>, lambdas: &[Complex64], period: usize) -> Result<bool> {
    let n = a.nrows();
    if a.ncols() != n || c.nrows() != n {
        return Err(Error::Dimension { context: "condition C shapes", expected: n, found: c.nrows() });
    }
    if c.ncols() != 1 {
        return Err(Error::Dimension { context: "condition C input columns", expected: 1, found: c.ncols() });
    }
    if period == 0 || lambdas.is_empty() {
        return Err(Error::InvalidArgument("condition C needs a positive period and at least one eigenvalue".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let an = a.pow(period as u32);
    let base = complexify(&((&id - &an) * c));
    let v = checked_solve(complexify(&(&id - a)), base, "1 is an eigenvalue of A")?;
    let an_c = complexify(&an);
    let id_c = complexify(&id);
    let mut cols = DMatrix::<Complex64>::zeros(n, lambdas.len());
    for (j, lam) in lambdas.iter().enumerate() {
        let m = &id_c - &an_c * *lam;
        let col = checked_solve(m, v.clone(), &format!("1/λ_{j} is an eigenvalue of A^{period}"))?;
        cols.set_column(j, &col.column(0));
    }
    Ok(linalg::numerical_rank(&cols, RANK_TOL) == lambdas.len())
}

/// Reservoir `(P⁻¹AP, P⁻¹C)` similar to `spec` through `P`.
pub fn similar_spec(spec: &ReservoirSpec, p: &DMatrix<f64>) -> Result<ReservoirSpec> {
    let pinv = p.clone().try_inverse().ok_or_else(|| Error::Singular("similarity P".into()))?;
    ReservoirSpec::new(&pinv * &spec.a * p, &pinv * &spec.c, &pinv * &spec.b, spec.activation, spec.seed)
}

/// Drives `spec_a` from `P x̄₀` and `spec_b` from `x̄₀` and returns
/// `max_k |hᵀx_k − (Pᵀh)ᵀx̄_k|`. When `A = PĀP⁻¹` and `C = PC̄` the two
/// output streams coincide.
pub fn check_system_isomorphism(
    spec_a: &ReservoirSpec,
    spec_b: &ReservoirSpec,
    p: &DMatrix<f64>,
    h: &DVector<f64>,
    input: &TimeSeries,
    x0_bar: &[f64],
) -> Result<f64> {
    for s in [spec_a, spec_b] {
        if s.activation != Activation::Identity || s.b.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidArgument("isomorphism check needs linear reservoirs".into()));
        }
    }
    let n = spec_a.n();
    if p.nrows() != n || p.ncols() != n || spec_b.n() != n || h.len() != n {
        return Err(Error::Dimension { context: "isomorphism shapes", expected: n, found: p.nrows() });
    }
    if linalg::numerical_rank(p, 1e-12) < n {
        return Err(Error::Singular("similarity P".into()));
    }
    let x0 = p * DVector::from_column_slice(x0_bar);
    let xa = drive(spec_a, input, x0.as_slice())?;
    let xb = drive(spec_b, input, x0_bar)?;
    let h_bar = p.transpose() * h;
    let mut dev: f64 = 0.0;
    for (sa, sb) in xa.samples().zip(xb.samples()) {
        let ya: f64 = h.iter().zip(sa).map(|(u, v)| u * v).sum();
        let yb: f64 = h_bar.iter().zip(sb).map(|(u, v)| u * v).sum();
        dev = dev.max((ya - yb).abs());
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{circle_rotation, observe, ExampleMap};
    use nalgebra::dmatrix;
    use rand::SeedableRng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = LabRng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn lower_shift_display() {
        assert_eq!(lower_shift(3), dmatrix![0.0, 0.0, 0.0; 1.0, 0.0, 0.0; 0.0, 1.0, 0.0]);
    }

    #[test]
    fn uniform_rescaled_norm() {
        for seed in 0..3 {
            let spec = generate(&ReservoirGenConfig::uniform_esn(50, seed)).unwrap();
            assert!((linalg::norm2(&spec.a) - 1.0).abs() < 1e-10);
            assert!(spec.c.iter().chain(spec.b.iter()).all(|v| v.abs() <= 0.05));
        }
    }

    #[test]
    fn erdos_renyi_degree_and_radius() {
        let spec = generate(&ReservoirGenConfig::sparse_esn(300, 11)).unwrap();
        let nnz = spec.a.iter().filter(|v| **v != 0.0).count() as f64 / 300.0;
        assert!((4.5..=7.5).contains(&nnz), "mean degree {nnz}");
        assert!((linalg::spectral_radius(&spec.a) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ReservoirGenConfig::uniform_esn(20, 99);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = ReservoirGenConfig { seed: 100, ..cfg };
        assert_ne!(generate(&other).unwrap().a, generate(&ReservoirGenConfig::uniform_esn(20, 99)).unwrap().a);
    }

    #[test]
    fn zero_matrix_cannot_be_rescaled() {
        let cfg = ReservoirGenConfig {
            a_scheme: MatrixScheme::GaussianErdosRenyi { mean_degree: 1e-9, spectral_radius: 1.0 },
            ..ReservoirGenConfig::sparse_esn(5, 1)
        };
        assert!(matches!(generate(&cfg), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn json_round_trip_reproduces_drive() {
        let spec = generate(&ReservoirGenConfig::uniform_esn(10, 3)).unwrap();
        let text = spec.to_json().unwrap();
        let back = ReservoirSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        let input = TimeSeries::from_scalars(1.0, &[0.3, -0.1, 0.7]).unwrap();
        assert_eq!(drive(&spec, &input, &[0.0; 10]).unwrap(), drive(&back, &input, &[0.0; 10]).unwrap());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"][1].as_f64().unwrap(), spec.a[(0, 1)]);
    }

    #[test]
    fn gonon_structure() {
        let cfg = GononConfig { n: 4, t0: 2, r: 1.5, d: 1, m_t0: 2.0, seed: 5 };
        let spec = build_gonon(&cfg).unwrap();
        assert_eq!(spec.n(), 14);
        let half = 7;
        for i in 0..half {
            for j in 0..half {
                let v = spec.a[(i, j)];
                assert_eq!(spec.a[(i, j + half)], -v);
                assert_eq!(spec.a[(i + half, j)], -v);
                assert_eq!(spec.a[(i + half, j + half)], v);
            }
            assert_eq!(spec.c[(i + half, 0)], -spec.c[(i, 0)]);
        }
        let s = delay_shift(1, 2);
        assert_eq!(s.pow(3), DMatrix::zeros(3, 3));
        assert!(spec.b.iter().all(|v| v.abs() <= 3.0));
    }

    #[test]
    fn gonon_difference_tracks_delay_and_hidden_layer() {
        let cfg = GononConfig { n: 3, t0: 2, r: 1.0, d: 1, m_t0: 1.0, seed: 8 };
        let spec = build_gonon(&cfg).unwrap();
        let zs = [0.4, -0.7, 0.2, 0.9, -0.3];
        let input = TimeSeries::from_scalars(1.0, &zs).unwrap();
        let states = drive(&spec, &input, &[0.0; 12]).unwrap();
        let last = states.sample(5);
        let w: Vec<f64> = (0..6).map(|i| last[i] - last[i + 6]).collect();
        assert!((w[0] + 0.3).abs() < 1e-12);
        assert!((w[1] - 0.9).abs() < 1e-12);
        assert!((w[2] - 0.2).abs() < 1e-12);
        // Hidden block: aS·(z3, z2, z1) + a·c·z4 + b.
        let pre = spec.a.view((3, 0), (3, 3)) * DVector::from_vec(vec![0.9, 0.2, -0.7]) + spec.c.view((3, 0), (3, 1)) * -0.3
            + spec.b.rows(3, 3);
        for i in 0..3 {
            assert!((w[3 + i] - pre[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn relay_and_takens_delay() {
        let relay = ReservoirSpec::linear(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let input = TimeSeries::from_samples(2, 1.0, &[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let out = drive(&relay, &input, &[0.0, 0.0]).unwrap();
        assert_eq!(out.sample(1), &[1.0, 2.0]);
        assert_eq!(out.sample(2), &[3.0, 4.0]);

        let takens = ReservoirSpec::linear(lower_shift(3), DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let zs = TimeSeries::from_scalars(1.0, &[0.5, -1.5, 2.25]).unwrap();
        let out = drive(&takens, &zs, &[0.0; 3]).unwrap();
        assert_eq!(out.sample(3), &[2.25, -1.5, 0.5]);
    }

    #[test]
    fn drive_checks_dimensions() {
        let spec = generate(&ReservoirGenConfig::uniform_esn(4, 1)).unwrap();
        let bad = TimeSeries::from_samples(2, 1.0, &[[0.0, 0.0]]).unwrap();
        assert!(matches!(drive(&spec, &bad, &[0.0; 4]), Err(Error::Dimension { .. })));
        let ok = TimeSeries::from_scalars(1.0, &[0.0]).unwrap();
        assert!(drive(&spec, &ok, &[0.0; 3]).is_err());
    }

    #[test]
    fn autonomous_examples() {
        let spec = ReservoirSpec::new(
            DMatrix::zeros(3, 3),
            DMatrix::from_column_slice(3, 1, &[0.3, 0.2, 0.1]),
            DVector::zeros(3),
            Activation::Tanh,
            0,
        )
        .unwrap();
        let w0 = Readout::from_weights(DVector::zeros(3));
        let ts = autonomous_drive(&spec, &w0, &[0.5, -0.2, 0.9], 5).unwrap();
        assert!(ts.samples().skip(1).all(|s| s.iter().all(|v| *v == 0.0)));

        let lin = ReservoirSpec::linear(DMatrix::zeros(2, 2), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let e1 = Readout::from_weights(DVector::from_vec(vec![1.0, 0.0]));
        let ts = autonomous_drive(&lin, &e1, &[0.7, 3.0], 3).unwrap();
        assert_eq!(ts.sample(1), &[0.7, 0.0]);
        assert_eq!(ts.sample(3), &[0.7, 0.0]);

        let grow = Readout::from_weights(DVector::from_vec(vec![10.0, 0.0]));
        assert!(matches!(autonomous_drive(&lin, &grow, &[1.0, 0.0], 100), Err(Error::Diverged { .. })));
    }

    #[test]
    fn global_contraction_examples() {
        let spec = ReservoirSpec::linear(DMatrix::identity(3, 3) * 0.9, DMatrix::zeros(3, 1)).unwrap();
        let g = check_global_contraction(&spec);
        assert!(g.is_contracting && (g.c - 0.9).abs() < 1e-12);
        let shift = ReservoirSpec::linear(lower_shift(4), DMatrix::zeros(4, 1)).unwrap();
        let g = check_global_contraction(&shift);
        assert!(!g.is_contracting && (g.c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_contraction_examples() {
        let map = ExampleMap::SignedPower { alpha: 0.9, lambda: 0.009, k: 0.1 };
        let lorenz = crate::dynsys::integrate_lorenz(&Default::default(), 20_000).unwrap();
        let xi = lorenz.column(0);
        let range = (xi.iter().cloned().fold(f64::INFINITY, f64::min), xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let region = StateBox::cube(3, 0.9, 1.1).unwrap();
        let r = check_local_contraction(|x, z| map.apply(x, z), &region, &[range], DEFAULT_PROBES, 1).unwrap();
        assert!(r.invariant && r.c_est < 1.0, "{r:?}");

        let region = StateBox::cube(2, 0.5, 1.0).unwrap();
        let r = check_local_contraction(|x, _| x.iter().map(|v| 2.0 * v).collect(), &region, &[(0.0, 1.0)], 1000, 2).unwrap();
        assert!(!r.invariant && (r.c_est - 2.0).abs() < 1e-9);

        let zero = |x: &[f64], _: f64| vec![0.0; x.len()];
        let with0 = check_local_contraction(zero, &StateBox::cube(2, -1.0, 1.0).unwrap(), &[(0.0, 0.0)], 100, 3).unwrap();
        assert!(with0.invariant && with0.c_est == 0.0);
        let without0 = check_local_contraction(zero, &StateBox::cube(2, 1.0, 2.0).unwrap(), &[(0.0, 0.0)], 100, 3).unwrap();
        assert!(!without0.invariant);
    }

    #[test]
    fn gs_series_with_zero_matrix() {
        let c = DMatrix::from_column_slice(2, 1, &[1.0, -2.0]);
        let spec = ReservoirSpec::linear(DMatrix::zeros(2, 2), c).unwrap();
        let obs = ObservationFn::scaled_sin(0.5);
        let f = circle_gs(&spec, 0.1, &obs, 1.0, 10).unwrap();
        let w = 0.5 * 1.0f64.sin();
        assert!((f.value[0] - w).abs() < 1e-15 && (f.value[1] + 2.0 * w).abs() < 1e-15);
        assert_eq!(f.tail_bound, 0.0);
    }

    #[test]
    fn gs_series_with_damped_shift_is_weighted_delay() {
        let spec = ReservoirSpec::linear(lower_shift(3) * 0.99, DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let obs = [0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        let f = linear_gs_series(&spec, |k| vec![obs[k]], 5, 1.0).unwrap();
        // Unrolled by hand: A^k e1 = 0.99^k e_{k+1} for k < 3, zero after.
        assert!((f.value[0] - 0.3).abs() < 1e-15);
        assert!((f.value[1] - 0.99 * -0.2).abs() < 1e-15);
        assert!((f.value[2] - 0.99 * 0.99 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn gs_series_rejects_unit_radius() {
        let spec = ReservoirSpec::linear(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(linear_gs_series(&spec, |_| vec![0.0], 3, 1.0), Err(Error::SeriesDivergent { .. })));
    }

    #[test]
    fn drive_converges_to_gs_on_circle() {
        let a = random_matrix(6, 6, 4);
        let a = &a * (0.5 / linalg::spectral_radius(&a));
        let spec = ReservoirSpec::linear(a, random_matrix(6, 1, 5)).unwrap();
        let eps = 0.37;
        let m0 = 0.2;
        let obs = ObservationFn::scaled_sin(0.5);
        let angles = circle_rotation(eps, m0, 400);
        let zs = observe(&angles, &obs).unwrap();
        let states = drive(&spec, &zs, &[3.0, -1.0, 2.0, 0.0, 5.0, -4.0]).unwrap();
        for k in [200, 300, 400] {
            let f = circle_gs(&spec, eps, &obs, angles.sample(k)[0], 200).unwrap();
            assert!(f.tail_bound < 1e-10 || linalg::norm2(&spec.a) >= 1.0);
            let x = states.sample_vector(k + 1);
            assert!((x - &f.value).norm() < 1e-8);
            // GS relation f(m) = A f(φ⁻¹ m) + C ω(m).
            let prev = circle_gs(&spec, eps, &obs, angles.sample(k)[0] - eps, 200).unwrap();
            let rhs = &spec.a * prev.value + &spec.c * obs.apply(angles.sample(k));
            assert!((rhs - f.value).norm() < 1e-10);
        }
    }

    #[test]
    fn condition_d_examples() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(check_condition_d(&lower_shift(3), &e1).unwrap());
        assert!(!check_condition_d(&DMatrix::identity(3, 3), &random_matrix(3, 1, 1)).unwrap());
        for seed in 0..100 {
            assert!(check_condition_d(&random_matrix(8, 8, seed), &random_matrix(8, 1, seed + 1000)).unwrap());
        }
    }

    #[test]
    fn condition_c_examples() {
        let a = random_matrix(5, 5, 7);
        let a = &a * (0.6 / linalg::spectral_radius(&a));
        let c = random_matrix(5, 1, 8);
        let lam = [Complex64::new(0.3, 0.4)];
        assert!(check_condition_c(&a, &c, &lam, 2).unwrap());
        let dup = [Complex64::new(0.3, 0.4), Complex64::new(0.3, 0.4)];
        assert!(!check_condition_c(&a, &c, &dup, 2).unwrap());
        assert!(matches!(
            check_condition_c(&DMatrix::identity(2, 2), &random_matrix(2, 1, 1), &lam, 1),
            Err(Error::SpectrumCollision(_))
        ));
        let mut r = LabRng::seed_from_u64(77);
        for seed in 0..100 {
            let a = random_matrix(6, 6, seed);
            let a = &a * (0.8 / linalg::spectral_radius(&a));
            let c = random_matrix(6, 1, seed + 500);
            let lams: Vec<Complex64> =
                (0..3).map(|_| Complex64::from_polar(r.random_range(0.1..1.0), r.random_range(0.0..6.28))).collect();
            assert!(check_condition_c(&a, &c, &lams, 3).unwrap());
        }
    }

    #[test]
    fn isomorphism_examples() {
        let a = random_matrix(4, 4, 21);
        let a = &a * (0.7 / linalg::spectral_radius(&a));
        let spec = ReservoirSpec::linear(a, random_matrix(4, 1, 22)).unwrap();
        let h = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
        let input = observe(&circle_rotation(0.3, 0.0, 300), &ObservationFn::scaled_sin(0.5)).unwrap();
        let x0 = [0.1, 0.2, -0.3, 0.4];

        let id = DMatrix::identity(4, 4);
        assert_eq!(check_system_isomorphism(&spec, &spec, &id, &h, &input, &x0).unwrap(), 0.0);

        let two = &id * 2.0;
        let bar = similar_spec(&spec, &two).unwrap();
        assert!(check_system_isomorphism(&spec, &bar, &two, &h, &input, &x0).unwrap() < 1e-10);

        // Well-conditioned: identity plus a small perturbation.
        let p = &id + random_matrix(4, 4, 23) * 0.2;
        let s = p.clone().svd(false, false).singular_values;
        assert!(s.max() / s.min() < 10.0);
        let bar = similar_spec(&spec, &p).unwrap();
        assert!(check_system_isomorphism(&spec, &bar, &p, &h, &input, &x0).unwrap() < 1e-8);

        assert!(matches!(
            check_system_isomorphism(&spec, &spec, &DMatrix::zeros(4, 4), &h, &input, &x0),
            Err(Error::Singular(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn tanh_states_stay_in_open_cube(seed in 0u64..1000, zs in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let spec = generate(&ReservoirGenConfig::uniform_esn(8, seed)).unwrap();
            let input = TimeSeries::from_scalars(1.0, &zs).unwrap();
            let out = drive(&spec, &input, &[100.0; 8]).unwrap();
            proptest::prop_assert!(out.samples().skip(1).all(|s| s.iter().all(|v| v.abs() <= 1.0)));
        }

        #[test]
        fn esp_decay(seed in 0u64..1000, x0 in proptest::collection::vec(-1.0f64..1.0, 5), y0 in proptest::collection::vec(-1.0f64..1.0, 5)) {
            let cfg = ReservoirGenConfig {
                a_scheme: MatrixScheme::UniformRescaled2Norm { target: 0.5 },
                ..ReservoirGenConfig::uniform_esn(5, seed)
            };
            let spec = generate(&cfg).unwrap();
            let g = check_global_contraction(&spec);
            proptest::prop_assert!(g.is_contracting);
            let zs: Vec<f64> = (0..50).map(|k| (k as f64 * 0.3).sin()).collect();
            let input = TimeSeries::from_scalars(1.0, &zs).unwrap();
            let xs = drive(&spec, &input, &x0).unwrap();
            let ys = drive(&spec, &input, &y0).unwrap();
            let d0 = xs.sample_vector(0) - ys.sample_vector(0);
            for k in [1usize, 5, 10, 50] {
                let dk = xs.sample_vector(k) - ys.sample_vector(k);
                proptest::prop_assert!(dk.norm() <= g.c.powi(k as i32) * d0.norm() * (1.0 + 1e-9) + 1e-15);
            }
        }

        #[test]
        fn takens_window(zs in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let n = zs.len();
            let mut c = DMatrix::zeros(n, 1);
            c[(0, 0)] = 1.0;
            let spec = ReservoirSpec::linear(lower_shift(n), c).unwrap();
            let input = TimeSeries::from_scalars(1.0, &zs).unwrap();
            let out = drive(&spec, &input, &vec![0.0; n]).unwrap();
            let rev: Vec<f64> = zs.iter().rev().cloned().collect();
            proptest::prop_assert_eq!(out.sample(n), rev.as_slice());
        }

        #[test]
        fn condition_d_similarity_invariant(seed in 0u64..500) {
            let a = random_matrix(5, 5, seed);
            let c = random_matrix(5, 1, seed + 1);
            let p = DMatrix::<f64>::identity(5, 5) + random_matrix(5, 5, seed + 2) * 0.2;
            let pinv = p.clone().try_inverse().unwrap();
            let lhs = check_condition_d(&a, &c).unwrap();
            let rhs = check_condition_d(&(&p * &a * &pinv), &(&p * &c)).unwrap();
            proptest::prop_assert_eq!(lhs, rhs);
            // Rank-deficient input is detected in both frames.
            let ad = DMatrix::<f64>::identity(5, 5) * 0.5;
            proptest::prop_assert_eq!(check_condition_d(&ad, &c).unwrap(), check_condition_d(&(&p * &ad * &pinv), &(&p * &c)).unwrap());
        }
    }
}
