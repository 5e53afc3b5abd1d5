//! Readout training: Tikhonov least squares through the SVD, stochastic
//! online iterations, and the feature transform for value learning.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{fmt_f64, TimeSeries};

/// Singular values below this fraction of the largest are dropped when
/// `λ = 0`.
pub const SVD_CUTOFF: f64 = 1e-12;

/// Default number of leading reservoir states excluded from regression.
pub const DEFAULT_BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OfflineSvd,
    /// Dense solve with a general regulariser matrix.
    OfflineDense,
    OnlineConst,
    #[serde(rename = "online_1k")]
    Online1k,
    Manual,
}

/// Linear readout `x ↦ Wᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    #[serde(with = "dvec")]
    pub w: DVector<f64>,
    pub lambda: f64,
    pub provenance: Provenance,
    pub burn_in: usize,
    /// General regulariser `Λ` (penalty `‖ΛᵀW‖²`); `None` means `√λ·I`.
    #[serde(skip)]
    pub regularizer: Option<DMatrix<f64>>,
}

mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

impl Readout {
    pub fn from_weights(w: DVector<f64>) -> Self {
        Self { w, lambda: 0.0, provenance: Provenance::Manual, burn_in: 0, regularizer: None }
    }

    pub fn zeros(p: usize, lambda: f64, provenance: Provenance) -> Self {
        Self { w: DVector::zeros(p), lambda, provenance, burn_in: 0, regularizer: None }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `Wᵀx_k` for every sample.
    pub fn predict_series(&self, states: &TimeSeries) -> Result<TimeSeries> {
        if states.dim() != self.dim() {
            return Err(Error::Dimension { context: "readout input", expected: self.dim(), found: states.dim() });
        }
        let values: Vec<f64> = states.samples().map(|s| self.predict(s)).collect();
        let mut out = TimeSeries::with_origin(1, states.step(), states.origin_index())?;
        for v in values {
            out.push(&[v])?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Least-squares data: feature rows `X` (ℓ×P) and targets `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub burn_in: usize,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension { context: "regression rows", expected: x.nrows(), found: y.len() });
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("regression problem needs at least one row and column".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("regression data must be finite".into()));
        }
        Ok(Self { x, y, burn_in: 0 })
    }

    /// Pairs state `k` with scalar target `k`, skipping the first `burn_in`.
    pub fn from_series(states: &TimeSeries, targets: &TimeSeries, burn_in: usize) -> Result<Self> {
        if targets.dim() != 1 {
            return Err(Error::Dimension { context: "regression targets", expected: 1, found: targets.dim() });
        }
        if states.len() != targets.len() {
            return Err(Error::Dimension { context: "regression sample count", expected: states.len(), found: targets.len() });
        }
        if burn_in >= states.len() {
            return Err(Error::OutOfRange(format!("burn-in {burn_in} leaves no samples out of {}", states.len())));
        }
        let ell = states.len() - burn_in;
        let x = DMatrix::from_fn(ell, states.dim(), |i, j| states.sample(i + burn_in)[j]);
        let y = DVector::from_fn(ell, |i, _| targets.sample(i + burn_in)[0]);
        let mut p = Self::new(x, y)?;
        p.burn_in = burn_in;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Norm of `(XᵀX + λI)W − XᵀY`.
    pub fn normal_residual(&self, w: &DVector<f64>, lambda: f64) -> f64 {
        let xt = self.x.transpose();
        (&xt * (&self.x * w) + w * lambda - &xt * &self.y).norm()
    }

    /// CSV with columns `x0..x{P-1},y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.n_features()).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.x.row(i).iter().chain([self.y[i]].iter()).map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 2 {
            return Err(Error::InvalidArgument("regression CSV needs feature and target columns".into()));
        }
        let mut rows = Vec::new();
        for line in lines {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != cols {
                return Err(Error::Dimension { context: "regression CSV row", expected: cols, found: vals.len() });
            }
            rows.push(vals);
        }
        let x = DMatrix::from_fn(rows.len(), cols - 1, |i, j| rows[i][j]);
        let y = DVector::from_fn(rows.len(), |i, _| rows[i][cols - 1]);
        Self::new(x, y)
    }
}

/// How the data term is weighted against `λ‖W‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Σ‖Wᵀx_k − u_k‖² + λ‖W‖²`.
    Sum,
    /// `(1/ℓ)Σ‖Wᵀx_k − u_k‖² + λ‖W‖²`, the population form matched by the
    /// online iterations; equivalent to `Sum` with `ℓλ`.
    Mean,
}

impl Objective {
    pub fn effective_lambda(self, lambda: f64, ell: usize) -> f64 {
        match self {
            Self::Sum => lambda,
            Self::Mean => lambda * ell as f64,
        }
    }
}

/// `W* = Σ σ_k (U_kᵀY)/(σ_k² + λ) V_k` from the thin SVD of `X`.
pub fn solve_offline(problem: &RegressionProblem, lambda: f64) -> Result<Readout> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let p = problem.n_features();
    let svd = problem.x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let sv = &svd.singular_values;
    let smax = sv.max();
    if lambda == 0.0 {
        let rank = sv.iter().filter(|&&s| s > SVD_CUTOFF * smax).count();
        if rank < p {
            return Err(Error::SingularProblem { rank, cols: p });
        }
    }
    let mut w = DVector::zeros(p);
    for (k, &s) in sv.iter().enumerate() {
        if lambda == 0.0 && s <= SVD_CUTOFF * smax {
            continue;
        }
        let denom = s * s + lambda;
        if denom == 0.0 {
            continue;
        }
        let coef = s * u.column(k).dot(&problem.y) / denom;
        w += v_t.row(k).transpose() * coef;
    }
    Ok(Readout { w, lambda, provenance: Provenance::OfflineSvd, burn_in: problem.burn_in, regularizer: None })
}

/// Like [`solve_offline`] but at `λ = 0` returns the minimum-norm least
/// squares solution, dropping singular values below `SVD_CUTOFF · σ_max`,
/// instead of rejecting a rank-deficient design.
pub fn solve_offline_min_norm(problem: &RegressionProblem, lambda: f64) -> Result<Readout> {
    match solve_offline(problem, lambda) {
        Err(Error::SingularProblem { .. }) => {
            let svd = problem.x.clone().svd(true, true);
            let w = svd
                .solve(&problem.y, SVD_CUTOFF * svd.singular_values.max())
                .map_err(|e| Error::Singular(e.into()))?;
            Ok(Readout { w, lambda, provenance: Provenance::OfflineSvd, burn_in: problem.burn_in, regularizer: None })
        }
        other => other,
    }
}

/// [`solve_offline`] under the chosen data-term weighting. The returned
/// readout records the `λ` as given.
pub fn solve_offline_with(problem: &RegressionProblem, lambda: f64, objective: Objective) -> Result<Readout> {
    let mut r = solve_offline(problem, objective.effective_lambda(lambda, problem.len()))?;
    r.lambda = lambda;
    Ok(r)
}

/// Minimiser of `Σ‖Wᵀx_k − u_k‖² + ‖ΛᵀW‖²` by a dense solve of
/// `(XᵀX + ΛΛᵀ)W = XᵀY`.
pub fn solve_offline_general(problem: &RegressionProblem, reg: &DMatrix<f64>) -> Result<Readout> {
    let p = problem.n_features();
    if reg.nrows() != p {
        return Err(Error::Dimension { context: "regulariser rows", expected: p, found: reg.nrows() });
    }
    let xt = problem.x.transpose();
    let lhs = &xt * &problem.x + reg * reg.transpose();
    let rhs = &xt * &problem.y;
    let w = lhs
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| lhs.lu().solve(&rhs))
        .ok_or(Error::SingularProblem { rank: crate::linalg::numerical_rank(&problem.x, SVD_CUTOFF), cols: p })?;
    Ok(Readout {
        w,
        lambda: f64::NAN,
        provenance: Provenance::OfflineDense,
        burn_in: problem.burn_in,
        regularizer: Some(reg.clone()),
    })
}

/// `W ← (1 − αλ)W − α g (Wᵀg − u)`.
pub fn online_step(readout: &Readout, g: &DVector<f64>, u: f64, alpha: f64) -> Readout {
    let err = readout.w.dot(g) - u;
    let w = &readout.w * (1.0 - alpha * readout.lambda) - g * (alpha * err);
    Readout { w, ..readout.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Const { alpha: f64 },
    /// `α_k = 1/k` starting from `k = 1`.
    OneOverK,
    /// `α_k = a/(k0 + k)`, the same decay with a gain and a delayed start.
    Harmonic { a: f64, k0: f64 },
}

impl Schedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            Self::Const { alpha } => *alpha,
            Self::OneOverK => 1.0 / k as f64,
            Self::Harmonic { a, k0 } => a / (k0 + k as f64),
        }
    }
}

/// Largest admissible constant step `1/(λ + sup‖g‖²)` (exclusive).
pub fn contraction_bound(lambda: f64, sup_g_sq: f64) -> f64 {
    1.0 / (lambda + sup_g_sq)
}

/// Rejects a constant step that violates `α < 1/(λ + sup‖g‖²)`.
pub fn check_step_size(alpha: f64, lambda: f64, sup_g_sq: f64) -> Result<()> {
    let bound = contraction_bound(lambda, sup_g_sq);
    if !(alpha > 0.0) || alpha >= bound {
        return Err(Error::ContractionBound { alpha, bound });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub readout: Readout,
    /// `(k, ‖W_k − W_ref‖)` every `trace_every` steps when a reference was
    /// supplied.
    pub trace: Vec<(usize, f64)>,
    /// Running mean of the iterates.
    pub mean_w: DVector<f64>,
    pub steps: usize,
}

/// Runs the online recursion over a feature stream.
///
/// For a constant step the bound is checked against every incoming `g_k`;
/// the first violation aborts the run.
pub fn run_online<I>(
    stream: I,
    schedule: Schedule,
    lambda: f64,
    w0: DVector<f64>,
    reference: Option<&DVector<f64>>,
    trace_every: usize,
) -> Result<OnlineRun>
where
    I: IntoIterator<Item = (DVector<f64>, f64)>,
{
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let provenance = match schedule {
        Schedule::Const { .. } => Provenance::OnlineConst,
        Schedule::OneOverK | Schedule::Harmonic { .. } => Provenance::Online1k,
    };
    let mut readout = Readout { w: w0, lambda, provenance, burn_in: 0, regularizer: None };
    let mut mean_w = DVector::zeros(readout.dim());
    let mut trace = Vec::new();
    let mut k = 0usize;
    for (g, u) in stream {
        k += 1;
        if g.len() != readout.dim() {
            return Err(Error::Dimension { context: "online feature", expected: readout.dim(), found: g.len() });
        }
        let alpha = schedule.alpha(k);
        if let Schedule::Const { .. } = schedule {
            check_step_size(alpha, lambda, g.norm_squared())?;
        }
        readout = online_step(&readout, &g, u, alpha);
        mean_w += (&readout.w - &mean_w) / k as f64;
        if let Some(r) = reference {
            if trace_every > 0 && k % trace_every == 0 {
                trace.push((k, (&readout.w - r).norm()));
            }
        }
    }
    Ok(OnlineRun { readout, trace, mean_w, steps: k })
}

/// Rows `g_k = f_k − γ f_{k+1}` paired with rewards `u_k`.
///
/// Reward `k` is collected in state `k` before the transition to `k+1`; the
/// last feature sample only serves as a successor.
pub fn value_targets(features: &TimeSeries, rewards: &[f64], gamma: f64) -> Result<RegressionProblem> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument("value targets need at least two feature samples".into()));
    }
    let next = features.slice(1, features.len())?;
    let current = features.slice(0, features.len() - 1)?;
    value_targets_with_next(&current, &next, rewards, gamma)
}

/// Rows `g_k = f_k − γ n_k` for explicit successor features `n_k` (a
/// sampled next state or a conditional expectation).
pub fn value_targets_with_next(current: &TimeSeries, next: &TimeSeries, rewards: &[f64], gamma: f64) -> Result<RegressionProblem> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!("discount must lie in [0, 1), got {gamma}")));
    }
    if current.is_empty() {
        return Err(Error::InvalidArgument("empty feature series".into()));
    }
    if current.len() != next.len() || current.dim() != next.dim() {
        return Err(Error::Dimension { context: "successor features", expected: current.len(), found: next.len() });
    }
    if rewards.len() < current.len() {
        return Err(Error::Dimension { context: "rewards", expected: current.len(), found: rewards.len() });
    }
    let x = DMatrix::from_fn(current.len(), current.dim(), |i, j| current.sample(i)[j] - gamma * next.sample(i)[j]);
    let y = DVector::from_column_slice(&rewards[..current.len()]);
    RegressionProblem::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rows: usize, cols: usize, seed: u64) -> RegressionProblem {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0));
        let y = DVector::from_fn(rows, |_, _| r.random_range(-1.0..1.0));
        RegressionProblem::new(x, y).unwrap()
    }

    #[test]
    fn identity_design() {
        let y = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let p = RegressionProblem::new(DMatrix::identity(3, 3), y.clone()).unwrap();
        assert!((solve_offline(&p, 0.0).unwrap().w - &y).norm() < 1e-14);
        assert!((solve_offline(&p, 1.0).unwrap().w - &y / 2.0).norm() < 1e-14);
    }

    #[test]
    fn matches_dense_normal_equations() {
        let p = random_problem(100, 10, 3);
        let lambda = 1e-3;
        let w = solve_offline(&p, lambda).unwrap().w;
        let xt = p.x.transpose();
        let direct = (&xt * &p.x + DMatrix::identity(10, 10) * lambda).lu().solve(&(&xt * &p.y)).unwrap();
        assert!((&w - &direct).norm() <= 1e-8 * direct.norm());
        assert!(p.normal_residual(&w, lambda) < 1e-8 * (&xt * &p.y).norm());
    }

    #[test]
    fn rank_deficient_without_ridge_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = RegressionProblem::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(solve_offline(&p, 0.0), Err(Error::SingularProblem { rank: 1, cols: 2 })));
        assert!(solve_offline(&p, 1e-6).is_ok());
        let w = solve_offline_min_norm(&p, 0.0).unwrap().w;
        assert!((w - DVector::from_vec(vec![0.2, 0.4])).amax() < 1e-14);
    }

    #[test]
    fn general_regularizer_matches_scalar_case() {
        let p = random_problem(40, 5, 9);
        let lambda: f64 = 0.3;
        let reg = DMatrix::identity(5, 5) * lambda.sqrt();
        let a = solve_offline_general(&p, &reg).unwrap().w;
        let b = solve_offline(&p, lambda).unwrap().w;
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn mean_objective_scales_lambda() {
        let p = random_problem(50, 4, 2);
        let a = solve_offline_with(&p, 0.01, Objective::Mean).unwrap();
        let b = solve_offline(&p, 0.5).unwrap();
        assert!((a.w - b.w).norm() < 1e-12);
        assert_eq!(a.lambda, 0.01);
    }

    #[test]
    fn readout_json() {
        let r = solve_offline(&random_problem(10, 3, 1), 0.1).unwrap();
        let text = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["provenance"], "offline_svd");
        assert_eq!(v["w"].as_array().unwrap().len(), 3);
        assert_eq!(Readout::from_json(&text).unwrap(), r);
        let online = Readout::zeros(2, 0.0, Provenance::Online1k);
        assert!(online.to_json().unwrap().contains("online_1k"));
    }

    #[test]
    fn regression_csv_round_trip() {
        let p = random_problem(4, 2, 5);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = RegressionProblem::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn online_step_examples() {
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let fixed = Readout::from_weights(DVector::from_vec(vec![1.0, 0.5]));
        let u = fixed.w.dot(&g);
        assert_eq!(online_step(&fixed, &g, u, 0.3).w, fixed.w);
        let w0 = Readout::zeros(3, 0.0, Provenance::OnlineConst);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(online_step(&w0, &e1, 1.0, 0.5).w, DVector::from_vec(vec![0.5, 0.0, 0.0]));
    }

    fn rank_one_solution(g: &DVector<f64>, u: f64, lambda: f64) -> DVector<f64> {
        let p = g.len();
        (g * g.transpose() + DMatrix::identity(p, p) * lambda).lu().solve(&(g * u)).unwrap()
    }

    #[test]
    fn one_over_k_on_constant_features() {
        let g = DVector::from_vec(vec![0.6, -0.3, 0.2]);
        let u = 0.7;
        let lambda = 0.5;
        let want = rank_one_solution(&g, u, lambda);
        let run = run_online(std::iter::repeat((g.clone(), u)).take(100_000), Schedule::OneOverK, lambda, DVector::zeros(3), Some(&want), 10_000)
            .unwrap();
        assert!((run.readout.w - &want).norm() < 1e-4);
        assert!(run.trace.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn const_step_on_constant_features() {
        let g = DVector::from_vec(vec![0.6, -0.3, 0.2]);
        let u = 0.7;
        let lambda = 0.5;
        let want = rank_one_solution(&g, u, lambda);
        let alpha = 0.9 * contraction_bound(lambda, g.norm_squared());
        let run = run_online(std::iter::repeat((g.clone(), u)).take(2000), Schedule::Const { alpha }, lambda, DVector::zeros(3), Some(&want), 1)
            .unwrap();
        assert!((run.readout.w - &want).norm() < 1e-10);
        // Geometric decay no slower than the 1 − αλ contraction.
        let rate = 1.0 - alpha * lambda;
        let e1 = run.trace[0].1;
        for &(k, e) in &run.trace[..200] {
            assert!(e <= rate.powi(k as i32 - 1) * e1 * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn const_step_above_bound_is_rejected() {
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let r = run_online(vec![(g, 1.0)], Schedule::Const { alpha: 0.5 }, 0.1, DVector::zeros(2), None, 0);
        assert!(matches!(r, Err(Error::ContractionBound { .. })));
    }

    fn finite_support() -> (Vec<(DVector<f64>, f64)>, DVector<f64>) {
        let support = vec![
            (DVector::from_vec(vec![1.0, 0.2]), 0.5),
            (DVector::from_vec(vec![-0.4, 0.9]), -0.3),
            (DVector::from_vec(vec![0.3, -0.8]), 0.8),
        ];
        let lambda = 0.1;
        let mut b = DMatrix::identity(2, 2) * lambda;
        let mut v = DVector::zeros(2);
        for (g, u) in &support {
            b += g * g.transpose() / 3.0;
            v += g * (*u / 3.0);
        }
        let w = b.lu().solve(&v).unwrap();
        (support, w)
    }

    #[test]
    fn one_over_k_on_iid_finite_support() {
        let (support, want) = finite_support();
        let mut r = ChaCha8Rng::seed_from_u64(12);
        let stream = (0..1_000_000).map(|_| support[r.random_range(0..3)].clone());
        let run = run_online(stream, Schedule::OneOverK, 0.1, DVector::zeros(2), Some(&want), 10_000).unwrap();
        let final_err = (run.readout.w - &want).norm();
        assert!(final_err < 1e-2, "{final_err}");
        let at_1e4 = run.trace[0].1;
        assert!(final_err < 10.0 * at_1e4);
    }

    #[test]
    fn const_step_ergodic_mean_and_bound() {
        let (support, want) = finite_support();
        let lambda = 0.1;
        let sup = support.iter().map(|(g, _)| g.norm_squared()).fold(0.0, f64::max);
        let alpha = 0.05;
        check_step_size(alpha, lambda, sup).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let stream = (0..200_000).map(|_| support[r.random_range(0..3)].clone());
        let run = run_online(stream, Schedule::Const { alpha }, lambda, DVector::zeros(2), Some(&want), 1).unwrap();
        assert!((run.mean_w - &want).norm() < 2e-2);
        // L² residual ‖[ggᵀ+λI]W* − gu‖ over the support.
        let l2 = (support
            .iter()
            .map(|(g, u)| ((g * g.transpose() + DMatrix::identity(2, 2) * lambda) * &want - g * *u).norm_squared())
            .sum::<f64>()
            / 3.0)
            .sqrt();
        let sup_err = run.trace.iter().skip(1000).map(|t| t.1).fold(0.0, f64::max);
        assert!(sup_err <= l2 / lambda, "{sup_err} vs {}", l2 / lambda);
    }

    #[test]
    fn value_target_examples() {
        let f = TimeSeries::from_samples(2, 1.0, &[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let p0 = value_targets(&f, &[1.0, 0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(p0.x.row(1)[1], 1.0);
        let p = value_targets(&f, &[1.0, 0.0, 1.0, 0.0], 0.5).unwrap();
        let w = solve_offline(&p, 0.0).unwrap().w;
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-6 && (w[1] - 2.0 / 3.0).abs() < 1e-6);
        // Bellman self-consistency V = u + γV∘φ at each visited state.
        for k in 0..4 {
            let v = w.dot(&f.sample_vector(k));
            let v_next = w.dot(&f.sample_vector(k + 1));
            let u = if k % 2 == 0 { 1.0 } else { 0.0 };
            assert!((v - u - 0.5 * v_next).abs() < 1e-8);
        }
        let constant = TimeSeries::from_scalars(1.0, &[2.0; 6]).unwrap();
        let p = value_targets(&constant, &[3.0; 5], 0.9).unwrap();
        let w = solve_offline(&p, 0.0).unwrap().w;
        assert!((w[0] * 2.0 - 3.0 / 0.1).abs() < 1e-9);
        assert!(value_targets(&constant, &[3.0; 5], 1.0).is_err());
        assert!(value_targets(&TimeSeries::from_scalars(1.0, &[1.0]).unwrap(), &[1.0], 0.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn stationarity_identity(seed in 0u64..10_000, lambda in 1e-6f64..10.0) {
            let p = random_problem(30, 6, seed);
            let w = solve_offline(&p, lambda).unwrap().w;
            let xty = (p.x.transpose() * &p.y).norm();
            proptest::prop_assert!(p.normal_residual(&w, lambda) < 1e-8 * xty.max(1.0));
        }

        #[test]
        fn ridge_shrinks_monotonically(seed in 0u64..10_000, l1 in 1e-6f64..1.0, factor in 1.01f64..100.0) {
            let p = random_problem(20, 8, seed);
            let a = solve_offline(&p, l1).unwrap().w.norm();
            let b = solve_offline(&p, l1 * factor).unwrap().w.norm();
            proptest::prop_assert!(a >= b * (1.0 - 1e-12));
        }
    }
}
