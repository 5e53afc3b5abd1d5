//! Dynamical diagnostics for autonomous reservoirs: Newton fixed points,
//! Jacobians, linearisation eigenvalues, QR Lyapunov spectra and PCA.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::LorenzParams;
use crate::error::{Error, Result};
use crate::linalg;
use crate::reservoir::ReservoirSpec;
use crate::rng::{stream, stream_rng};
use crate::series::{fmt_f64, TimeSeries};
use crate::training::Readout;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_RETRIES: usize = 3;
pub const NEWTON_PERTURBATION: f64 = 0.01;

/// Serde adapter writing complex numbers as `[re, im]`.
pub mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub x_star: Vec<f64>,
    /// `‖ψ(x*) − x*‖`.
    pub residual: f64,
    pub iterations: usize,
    /// Residual before each Newton update and at the end.
    pub residual_history: Vec<f64>,
    /// Eigenvalues of the Jacobian at `x*` as `[re, im]`.
    #[serde(with = "complex_pairs")]
    pub jacobian_eigs: Vec<Complex64>,
    /// Which start converged: 0 is the given one, later ones are perturbed.
    pub start: usize,
}

/// Newton's method on `ψ(x) − x` using the linear-solve form
/// `(J − I)(x_{k+1} − x_k) = −(ψ(x_k) − x_k)`.
pub fn newton_fixed_point<P, J>(psi: P, jac: J, x0: &DVector<f64>, tol: f64, max_iter: usize) -> Result<FixedPointResult>
where
    P: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n = x0.len();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = x0.clone();
    let mut history = Vec::new();
    for iteration in 0..=max_iter {
        let r = psi(&x) - &x;
        let res = r.norm();
        history.push(res);
        if !res.is_finite() {
            return Err(Error::Diverged { step: iteration, norm: x.norm() });
        }
        if res < tol {
            let eigs = linalg::eigenvalues(&jac(&x));
            return Ok(FixedPointResult {
                x_star: x.as_slice().to_vec(),
                residual: res,
                iterations: iteration,
                residual_history: history,
                jacobian_eigs: eigs,
                start: 0,
            });
        }
        if iteration == max_iter {
            return Err(Error::MaxIterations { iterations: max_iter, residual: res });
        }
        let lu = (jac(&x) - &id).lu();
        let u = lu.u();
        let diag_max = u.diagonal().abs().max();
        let diag_min = u.diagonal().abs().min();
        if !(diag_min > 1e-14 * diag_max.max(1.0)) {
            return Err(Error::NeutralFixedPoint { iteration });
        }
        let delta = lu.solve(&(-r)).ok_or(Error::NeutralFixedPoint { iteration })?;
        x += delta;
    }
    unreachable!("loop returns on its last iteration")
}

/// Newton from `x0`, then from up to three starts perturbed entrywise by
/// `U[−0.01, 0.01]`. Returns the first success or the last failure.
pub fn newton_with_retries<P, J>(
    psi: P,
    jac: J,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<FixedPointResult>
where
    P: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut rng = stream_rng(seed, stream::PERTURB);
    let mut last = newton_fixed_point(&psi, &jac, x0, tol, max_iter);
    for attempt in 1..=NEWTON_RETRIES {
        if last.is_ok() {
            break;
        }
        let start = x0.map(|v| v + rng.random_range(-NEWTON_PERTURBATION..=NEWTON_PERTURBATION));
        last = newton_fixed_point(&psi, &jac, &start, tol, max_iter).map(|mut r| {
            r.start = attempt;
            r
        });
    }
    last
}

/// `J = diag(σ'(Ax + C(Wᵀx) + b))·(A + CWᵀ)`.
pub fn esn_jacobian(spec: &ReservoirSpec, readout: &Readout, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = spec.closed_loop_matrix(&readout.w)?;
    let pre = spec.autonomous_preactivation(&readout.w, x);
    let d = pre.map(|v| spec.activation.derivative(v));
    Ok(DMatrix::from_diagonal(&d) * m)
}

/// Fixed point of the autonomous ESN with perturbed retries.
pub fn esn_fixed_point(
    spec: &ReservoirSpec,
    readout: &Readout,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<FixedPointResult> {
    let m = spec.closed_loop_matrix(&readout.w)?;
    if x0.len() != spec.n() {
        return Err(Error::Dimension { context: "Newton start", expected: spec.n(), found: x0.len() });
    }
    let psi = |x: &DVector<f64>| spec.autonomous_step(&readout.w, x);
    let jac = |x: &DVector<f64>| {
        let pre = spec.autonomous_preactivation(&readout.w, x);
        DMatrix::from_diagonal(&pre.map(|v| spec.activation.derivative(v))) * &m
    };
    newton_with_retries(psi, jac, &DVector::from_column_slice(x0), tol, max_iter, seed)
}

/// Central finite-difference Jacobian of `f`.
pub fn finite_difference_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}

/// The Lorenz Jacobian at the positive wing equilibrium for σ=10, ρ=28,
/// β=8/3, entered as the literal matrix.
pub fn wing_jacobian() -> DMatrix<f64> {
    let s = 6.0 * 2f64.sqrt();
    DMatrix::from_row_slice(3, 3, &[-10.0, 10.0, 0.0, 1.0, -1.0, -s, s, s, -8.0 / 3.0])
}

/// Lorenz Jacobian at an arbitrary point.
pub fn lorenz_jacobian(params: &LorenzParams, m: &[f64; 3]) -> DMatrix<f64> {
    let j = params.jacobian(m);
    DMatrix::from_fn(3, 3, |r, c| j[(r, c)])
}

/// Eigenvalues of `exp(Jτ)`, the linearisation of the time-τ map.
pub fn lorenz_linearization_eigs(jacobian: &DMatrix<f64>, tau: f64) -> Vec<Complex64> {
    linalg::eigenvalues(&linalg::expm(&(jacobian * tau), 1e-12))
}

/// Comparison of a Jacobian spectrum against target eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenMatch {
    pub radius: f64,
    /// Distance from each target to its nearest eigenvalue (greedy, each
    /// eigenvalue used once).
    pub target_distances: Vec<f64>,
    /// Eigenvalues lying within `radius` of some target.
    pub n_within: usize,
    /// Largest modulus among eigenvalues not matched to a target.
    pub max_other_modulus: f64,
}

impl EigenMatch {
    /// Exactly one eigenvalue near each target and all others inside the
    /// unit circle.
    pub fn passes(&self) -> bool {
        self.n_within == self.target_distances.len()
            && self.target_distances.iter().all(|d| *d <= self.radius)
            && self.max_other_modulus < 1.0
    }
}

pub fn match_eigenvalues(eigs: &[Complex64], targets: &[Complex64], radius: f64) -> EigenMatch {
    let mut used = vec![false; eigs.len()];
    let mut target_distances = Vec::with_capacity(targets.len());
    for t in targets {
        let best = eigs
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, e)| (i, (e - t).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, d)) => {
                used[i] = true;
                target_distances.push(d);
            }
            None => target_distances.push(f64::INFINITY),
        }
    }
    let n_within = eigs.iter().filter(|e| targets.iter().any(|t| (*e - t).norm() <= radius)).count();
    let max_other_modulus = eigs
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(e, _)| e.norm())
        .fold(0.0, f64::max);
    EigenMatch { radius, target_distances, n_within, max_other_modulus }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Per unit time, descending.
    pub exponents: Vec<f64>,
    pub n_iterations: usize,
    /// Rows `(iteration, running mean of each exponent)`.
    pub running_means: Vec<(usize, Vec<f64>)>,
}

impl LyapunovResult {
    /// CSV `iter,lambda_1..lambda_k`.
    pub fn write_running_means_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let k = self.exponents.len();
        let header: Vec<String> = std::iter::once("iter".to_string()).chain((1..=k).map(|i| format!("lambda_{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for (it, means) in &self.running_means {
            let row: Vec<String> = means.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{it},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Discrete QR iteration for the leading `k` Lyapunov exponents.
///
/// `jacobian(j)` returns the Jacobian of the map at the `j`-th point of the
/// orbit (advancing the orbit as a side effect). Each step factors
/// `J_j Q_j = Q_{j+1} R_{j+1}` with positive `R` diagonal and accumulates
/// `log R_ii`; the averages are divided by `tau`.
pub fn lyapunov_qr<F>(mut jacobian: F, dim: usize, k: usize, n_iter: usize, tau: f64, record_every: usize) -> Result<LyapunovResult>
where
    F: FnMut(usize) -> Result<DMatrix<f64>>,
{
    if n_iter < 100 {
        return Err(Error::InvalidArgument(format!("Lyapunov QR needs at least 100 iterations, got {n_iter}")));
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("number of exponents must lie in 1..={dim}, got {k}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let mut q = DMatrix::<f64>::identity(dim, k);
    let mut sums = vec![0.0; k];
    let mut running_means = Vec::new();
    for j in 0..n_iter {
        let jac = jacobian(j)?;
        if jac.nrows() != dim || jac.ncols() != dim {
            return Err(Error::Dimension { context: "Lyapunov Jacobian", expected: dim, found: jac.nrows() });
        }
        let qr = (jac * &q).qr();
        let mut new_q = qr.q();
        let r = qr.r();
        for i in 0..k {
            let rii = r[(i, i)];
            if rii == 0.0 || !rii.is_finite() {
                return Err(Error::DegenerateJacobian { step: j });
            }
            if rii < 0.0 {
                new_q.column_mut(i).neg_mut();
            }
            sums[i] += rii.abs().ln();
        }
        q = new_q;
        let done = j + 1;
        if record_every > 0 && done % record_every == 0 {
            running_means.push((done, sums.iter().map(|s| s / done as f64 / tau).collect()));
        }
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / n_iter as f64 / tau).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovResult { exponents, n_iterations: n_iter, running_means })
}

/// Lyapunov spectrum of the RK4 Lorenz map, using the exact tangent of each
/// step, after `transient` unrecorded steps.
pub fn lorenz_lyapunov(params: &LorenzParams, n_iter: usize, transient: usize) -> Result<LyapunovResult> {
    let mut m = params.initial;
    for _ in 0..transient {
        m = params.rk4_step(&m, params.tau);
    }
    lyapunov_qr(
        |_| {
            let (next, jac) = params.rk4_step_tangent(&m, params.tau);
            m = next;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationDiverged { step: 0 });
            }
            Ok(DMatrix::from_fn(3, 3, |r, c| jac[(r, c)]))
        },
        3,
        3,
        n_iter,
        params.tau,
        100,
    )
}

/// Leading `k` exponents of the autonomous ESN along its own orbit from
/// `x0`, in units of `tau` per step.
pub fn esn_lyapunov(spec: &ReservoirSpec, readout: &Readout, x0: &[f64], k: usize, n_iter: usize, tau: f64) -> Result<LyapunovResult> {
    let m = spec.closed_loop_matrix(&readout.w)?;
    let mut x = DVector::from_column_slice(x0);
    lyapunov_qr(
        |j| {
            let pre = spec.autonomous_preactivation(&readout.w, &x);
            let jac = DMatrix::from_diagonal(&pre.map(|v| spec.activation.derivative(v))) * &m;
            x = pre.map(|v| spec.activation.apply(v));
            if !x.norm().is_finite() {
                return Err(Error::Diverged { step: j, norm: f64::INFINITY });
            }
            Ok(jac)
        },
        spec.n(),
        k,
        n_iter,
        tau,
        100,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub projected: TimeSeries,
    /// `n × k`, orthonormal columns (zero columns beyond the rank).
    pub components: DMatrix<f64>,
    /// Variance along each component.
    pub explained_variance: Vec<f64>,
    pub mean: DVector<f64>,
    /// Set when `k` exceeds the numerical rank of the centred data.
    pub rank_deficient: bool,
}

impl PcaResult {
    /// Projects further states onto the stored mean and components.
    pub fn project(&self, states: &TimeSeries) -> Result<TimeSeries> {
        let n = self.mean.len();
        if states.dim() != n {
            return Err(Error::Dimension { context: "PCA projection", expected: n, found: states.dim() });
        }
        let centred = DMatrix::from_fn(states.len(), n, |i, j| states.sample(i)[j] - self.mean[j]);
        let proj = centred * &self.components;
        Ok(TimeSeries::from_raw(self.components.ncols(), states.step(), states.origin_index(), proj.transpose().as_slice().to_vec()))
    }

    /// Divides each projected coordinate by the standard deviation along its
    /// component; zero-variance coordinates are left as they are.
    pub fn whiten(&self, projected: &TimeSeries) -> Result<TimeSeries> {
        let k = self.explained_variance.len();
        if projected.dim() != k {
            return Err(Error::Dimension { context: "PCA whitening", expected: k, found: projected.dim() });
        }
        let scale: Vec<f64> = self.explained_variance.iter().map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let data = projected.samples().flat_map(|s| s.iter().zip(&scale).map(|(x, c)| x * c).collect::<Vec<_>>()).collect();
        Ok(TimeSeries::from_raw(k, projected.step(), projected.origin_index(), data))
    }
}

/// Projects centred states onto their top `k` principal directions.
pub fn pca_project(states: &TimeSeries, k: usize) -> Result<PcaResult> {
    let n = states.dim();
    let ell = states.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("PCA dimension must lie in 1..={n}, got {k}")));
    }
    if ell < k.max(2) {
        return Err(Error::InvalidArgument(format!("PCA needs at least {} samples, got {ell}", k.max(2))));
    }
    let x = states.to_matrix();
    let mean = DVector::from_fn(n, |j, _| x.column(j).mean());
    let centred = DMatrix::from_fn(ell, n, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (ell - 1) as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-20 * top.max(f64::MIN_POSITIVE)).count();
    let rank = if top == 0.0 { 0 } else { rank };
    let mut components = DMatrix::zeros(n, k);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        if c < rank {
            components.set_column(c, &eig.eigenvectors.column(i));
            explained_variance.push(eig.eigenvalues[i].max(0.0));
        } else {
            explained_variance.push(0.0);
        }
    }
    let proj = &centred * &components;
    let projected = TimeSeries::from_raw(k, states.step(), states.origin_index(), proj.transpose().as_slice().to_vec());
    Ok(PcaResult { projected, components, explained_variance, mean, rank_deficient: k > rank })
}
