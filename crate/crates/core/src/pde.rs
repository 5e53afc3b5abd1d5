//! Random-feature solver for the Dirichlet problem `Δφ = 0` on the unit
//! disc with boundary data `h`.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::series::fmt_f64;
use crate::training::{solve_offline_min_norm, Readout, RegressionProblem, Schedule};

/// Features `f_i(z) = tanh(C_iᵀz + b_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureModel {
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Multiply the feature Laplacian by `‖C_i‖²` (the chain-rule factor).
    pub include_norm_factor: bool,
}

impl RandomFeatureModel {
    pub fn new(c: DMatrix<f64>, b: DVector<f64>, include_norm_factor: bool) -> Result<Self> {
        if c.nrows() != b.len() {
            return Err(Error::Dimension { context: "feature bias", expected: c.nrows(), found: b.len() });
        }
        if c.ncols() == 0 {
            return Err(Error::InvalidArgument("domain dimension must be positive".into()));
        }
        Ok(Self { c, b, include_norm_factor })
    }

    /// `C` and `b` i.i.d. uniform on `[−half_width, half_width]`.
    pub fn uniform(n: usize, d: usize, half_width: f64, seed: u64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
        }
        let mut rc = stream_rng(seed, stream::INPUT);
        let mut rb = stream_rng(seed, stream::BIAS);
        let c = DMatrix::from_fn(n, d, |_, _| rc.random_range(-half_width..=half_width));
        let b = DVector::from_fn(n, |_, _| rb.random_range(-half_width..=half_width));
        Self::new(c, b, true)
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn d(&self) -> usize {
        self.c.ncols()
    }

    fn affine(&self, z: &[f64]) -> DVector<f64> {
        assert_eq!(z.len(), self.d(), "point dimension");
        &self.c * DVector::from_column_slice(z) + &self.b
    }

    pub fn eval_features(&self, z: &[f64]) -> DVector<f64> {
        self.affine(z).map(f64::tanh)
    }

    /// `(Δf)_i = ‖C_i‖² · (−2 tanh(a_i) sech²(a_i))`, or without the norm
    /// factor when the flag is off.
    pub fn eval_feature_laplacian(&self, z: &[f64]) -> DVector<f64> {
        let a = self.affine(z);
        DVector::from_fn(self.n(), |i, _| {
            let t = a[i].tanh();
            let base = -2.0 * t * (1.0 - t * t);
            if self.include_norm_factor {
                self.c.row(i).norm_squared() * base
            } else {
                base
            }
        })
    }

    pub fn eval(&self, w: &DVector<f64>, z: &[f64]) -> f64 {
        w.dot(&self.eval_features(z))
    }
}

/// Boundary data on the unit circle as a function of the angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    Zero,
    /// `cos(k θ)`, whose harmonic extension is `r^k cos(k θ)`.
    CosK { k: u32 },
}

impl BoundaryData {
    pub fn at_angle(&self, theta: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::CosK { k } => (*k as f64 * theta).cos(),
        }
    }

    pub fn at_point(&self, z: &[f64]) -> f64 {
        self.at_angle(z[1].atan2(z[0]))
    }

    /// Harmonic extension into the disc.
    pub fn exact(&self, r: f64, theta: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::CosK { k } => r.powi(*k as i32) * (*k as f64 * theta).cos(),
        }
    }
}

/// `r⁴ cos 4θ`.
pub fn analytic_disc_solution(r: f64, theta: f64) -> f64 {
    BoundaryData::CosK { k: 4 }.exact(r, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSample {
    pub interior: Vec<[f64; 2]>,
    pub boundary: Vec<[f64; 2]>,
    pub boundary_values: Vec<f64>,
}

/// Area-uniform interior points (`r = √u`) and angle-uniform boundary
/// points, on separate streams of `seed`.
pub fn sample_disc(ell: usize, ell_prime: usize, h: &BoundaryData, seed: u64) -> Result<DirichletSample> {
    if ell == 0 || ell_prime == 0 {
        return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
    }
    let mut ri = stream_rng(seed, stream::SAMPLES);
    let interior = (0..ell)
        .map(|_| {
            // u in [0, 1) keeps r < 1.
            let r = ri.random::<f64>().sqrt();
            let t = ri.random::<f64>() * TAU;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let mut rb = stream_rng(seed, stream::BOUNDARY);
    let mut boundary = Vec::with_capacity(ell_prime);
    let mut boundary_values = Vec::with_capacity(ell_prime);
    for _ in 0..ell_prime {
        let t = rb.random::<f64>() * TAU;
        boundary.push([t.cos(), t.sin()]);
        boundary_values.push(h.at_angle(t));
    }
    Ok(DirichletSample { interior, boundary, boundary_values })
}

/// Row weighting of the stacked least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stacking {
    /// `Σ_int ‖WᵀΔf‖² + Σ_bnd (Wᵀf − h)² + λ‖W‖²`.
    #[default]
    Plain,
    /// Interior and boundary blocks scaled by `1/√ℓ` and `1/√ℓ'`, so each
    /// block contributes its sample mean.
    Normalized,
}

/// Stacked design: `ℓ` interior rows `Δf(Z_k)` with target 0 followed by
/// `ℓ'` boundary rows `f(Z'_k)` with target `h(Z'_k)`.
pub fn stacked_problem(model: &RandomFeatureModel, sample: &DirichletSample, stacking: Stacking) -> Result<RegressionProblem> {
    let (l, lp) = (sample.interior.len(), sample.boundary.len());
    if sample.boundary_values.len() != lp {
        return Err(Error::Dimension { context: "boundary values", expected: lp, found: sample.boundary_values.len() });
    }
    let (si, sb) = match stacking {
        Stacking::Plain => (1.0, 1.0),
        Stacking::Normalized => (1.0 / (l as f64).sqrt(), 1.0 / (lp as f64).sqrt()),
    };
    let n = model.n();
    let mut x = DMatrix::zeros(l + lp, n);
    let mut y = DVector::zeros(l + lp);
    for (k, z) in sample.interior.iter().enumerate() {
        x.row_mut(k).copy_from(&(model.eval_feature_laplacian(z) * si).transpose());
    }
    for (k, z) in sample.boundary.iter().enumerate() {
        x.row_mut(l + k).copy_from(&(model.eval_features(z) * sb).transpose());
        y[l + k] = sample.boundary_values[k] * sb;
    }
    RegressionProblem::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletReport {
    pub interior_rms: f64,
    pub boundary_rms: f64,
    pub grid_rms: f64,
    pub config: serde_json::Value,
}

/// RMS of `WᵀΔf` over the interior sample and of `Wᵀf − h` over the
/// boundary sample.
pub fn sample_residuals(model: &RandomFeatureModel, w: &DVector<f64>, sample: &DirichletSample) -> (f64, f64) {
    let rms = |v: Vec<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let int = rms(sample.interior.iter().map(|z| w.dot(&model.eval_feature_laplacian(z))).collect());
    let bnd = rms(sample
        .boundary
        .iter()
        .zip(&sample.boundary_values)
        .map(|(z, h)| model.eval(w, z) - h)
        .collect());
    (int, bnd)
}

/// Ridge solve of the stacked problem; at `λ = 0` the minimum-norm least
/// squares solution.
pub fn solve_dirichlet_offline(
    model: &RandomFeatureModel,
    sample: &DirichletSample,
    lambda: f64,
    stacking: Stacking,
) -> Result<Readout> {
    solve_offline_min_norm(&stacked_problem(model, sample, stacking)?, lambda)
}

pub const ONLINE_DIVERGENCE: f64 = 1e9;

/// Stochastic iteration on interior/boundary pairs cycled from the sample:
///
/// `W ← (I − α_k ΛΛᵀ)W − α_k[Δf(Z_k)·WᵀΔf(Z_k) + f(Z'_k)(Wᵀf(Z'_k) − h_k)]`.
///
/// Its fixed point is the [`Stacking::Normalized`] ridge solution with
/// regulariser `ΛΛᵀ`.
pub fn solve_dirichlet_online(
    model: &RandomFeatureModel,
    sample: &DirichletSample,
    schedule: Schedule,
    reg: &DMatrix<f64>,
    steps: usize,
) -> Result<Readout> {
    let n = model.n();
    if reg.nrows() != n {
        return Err(Error::Dimension { context: "regulariser rows", expected: n, found: reg.nrows() });
    }
    let lap: Vec<DVector<f64>> = sample.interior.iter().map(|z| model.eval_feature_laplacian(z)).collect();
    let feat: Vec<DVector<f64>> = sample.boundary.iter().map(|z| model.eval_features(z)).collect();
    let rr = reg * reg.transpose();
    let mut w = DVector::zeros(n);
    for k in 1..=steps {
        let a = schedule.alpha(k);
        let g = &lap[(k - 1) % lap.len()];
        let f = &feat[(k - 1) % feat.len()];
        let h = sample.boundary_values[(k - 1) % feat.len()];
        let grad = &rr * &w + g * g.dot(&w) + f * (f.dot(&w) - h);
        w -= grad * a;
        if w.amax() > ONLINE_DIVERGENCE || !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: k, norm: w.norm() });
        }
    }
    let mut r = Readout::from_weights(w);
    r.provenance = match schedule {
        Schedule::Const { .. } => crate::training::Provenance::OnlineConst,
        _ => crate::training::Provenance::Online1k,
    };
    Ok(r)
}

pub const GRID_RADII: usize = 50;
pub const GRID_ANGLES: usize = 200;

/// Polar evaluation grid: radii `i/(GRID_RADII − 1)` and angles
/// `2πj/GRID_ANGLES`.
pub fn polar_grid() -> Vec<(f64, f64)> {
    let mut g = Vec::with_capacity(GRID_RADII * GRID_ANGLES);
    for i in 0..GRID_RADII {
        let r = i as f64 / (GRID_RADII - 1) as f64;
        for j in 0..GRID_ANGLES {
            g.push((r, TAU * j as f64 / GRID_ANGLES as f64));
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub r: f64,
    pub theta: f64,
    pub phi_hat: f64,
    pub phi_exact: f64,
}

pub fn solution_field(model: &RandomFeatureModel, w: &DVector<f64>, h: &BoundaryData) -> Vec<FieldPoint> {
    polar_grid()
        .into_iter()
        .map(|(r, theta)| FieldPoint {
            r,
            theta,
            phi_hat: model.eval(w, &[r * theta.cos(), r * theta.sin()]),
            phi_exact: h.exact(r, theta),
        })
        .collect()
}

pub fn grid_rms(field: &[FieldPoint]) -> f64 {
    (field.iter().map(|p| (p.phi_hat - p.phi_exact).powi(2)).sum::<f64>() / field.len() as f64).sqrt()
}

/// CSV `r,theta,phi_hat,phi_exact,abs_err`.
pub fn write_field_csv<W: Write>(field: &[FieldPoint], mut out: W) -> Result<()> {
    writeln!(out, "r,theta,phi_hat,phi_exact,abs_err")?;
    for p in field {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(p.r),
            fmt_f64(p.theta),
            fmt_f64(p.phi_hat),
            fmt_f64(p.phi_exact),
            fmt_f64((p.phi_hat - p.phi_exact).abs())
        )?;
    }
    Ok(())
}

/// Parameters of one offline disc run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscRunConfig {
    pub n: usize,
    pub ell: usize,
    pub ell_prime: usize,
    pub lambda: f64,
    pub half_width: f64,
    pub boundary: BoundaryData,
    pub stacking: Stacking,
    pub include_norm_factor: bool,
    pub seed: u64,
}

impl DiscRunConfig {
    /// Small configuration: 50 features, 50 + 50 samples, `λ = 1e-6`.
    pub fn small(seed: u64) -> Self {
        Self {
            n: 50,
            ell: 50,
            ell_prime: 50,
            lambda: 1e-6,
            half_width: 0.05,
            boundary: BoundaryData::CosK { k: 4 },
            stacking: Stacking::Plain,
            include_norm_factor: true,
            seed,
        }
    }

    /// Large configuration: 500 features, 500 + 500 samples, `λ = 0`.
    pub fn large(seed: u64) -> Self {
        Self { n: 500, ell: 500, ell_prime: 500, lambda: 0.0, ..Self::small(seed) }
    }
}

pub struct DiscRun {
    pub model: RandomFeatureModel,
    pub sample: DirichletSample,
    pub readout: Readout,
    pub field: Vec<FieldPoint>,
    pub report: DirichletReport,
}

/// Builds the model and sample from `config.seed`, solves offline and
/// evaluates on the polar grid.
pub fn run_disc(config: &DiscRunConfig) -> Result<DiscRun> {
    let mut model = RandomFeatureModel::uniform(config.n, 2, config.half_width, config.seed)?;
    model.include_norm_factor = config.include_norm_factor;
    let sample = sample_disc(config.ell, config.ell_prime, &config.boundary, config.seed)?;
    let readout = solve_dirichlet_offline(&model, &sample, config.lambda, config.stacking)?;
    let field = solution_field(&model, &readout.w, &config.boundary);
    let (interior_rms, boundary_rms) = sample_residuals(&model, &readout.w, &sample);
    let report = DirichletReport {
        interior_rms,
        boundary_rms,
        grid_rms: grid_rms(&field),
        config: serde_json::to_value(config)?,
    };
    Ok(DiscRun { model, sample, readout, field, report })
}
