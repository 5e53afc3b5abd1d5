//! Seeded experiment pipelines and their configuration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    esn_fixed_point, lorenz_linearization_eigs, match_eigenvalues, pca_project, wing_jacobian, EigenMatch, FixedPointResult,
};
use crate::dynsys::{circle_rotation, example_drive, half_sine_rotation_input, integrate_lorenz, ExampleMap, LorenzParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::reservoir::{
    check_condition_c, check_condition_d, check_local_contraction, check_system_isomorphism, drive, generate, similar_spec,
    LocalContraction, ReservoirGenConfig, ReservoirSpec, StateBox,
};
use crate::rng::{stream, stream_rng, LabRng};
use crate::series::TimeSeries;
use crate::stochastic::{
    bellman_contraction_check, sample_path, tabular_features, tabular_value, value_mc, Path, ProcessSpec, RewardFunctional,
    ValueEstimate,
};
use crate::topology::{attractor_h1_experiment, covering_radius, H1Report, PointCloud};
use crate::training::{
    run_online, solve_offline, solve_offline_with, value_targets_with_next, Objective, Readout, RegressionProblem, Schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsnScheme {
    /// Dense `U[−1, 1]` reservoir rescaled to unit 2-norm, `U[−0.05, 0.05]`
    /// input and bias.
    Uniform,
    /// Sparse Gaussian reservoir with unit spectral radius, `N(0, 0.1²)`
    /// input and bias.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LorenzTask {
    /// Next `ξ` sample, for closed-loop forecasting.
    NextXi,
    /// Concurrent `ζ` from the `ξ` history.
    ZetaFromXi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzEsnConfig {
    pub n: usize,
    pub scheme: EsnScheme,
    pub lambda: f64,
    pub objective: Objective,
    /// Training pairs after burn-in.
    pub length: usize,
    pub burn_in: usize,
    pub lorenz: LorenzParams,
    pub task: LorenzTask,
    pub seed: u64,
}

impl LorenzEsnConfig {
    pub fn uniform(seed: u64) -> Self {
        Self {
            n: 300,
            scheme: EsnScheme::Uniform,
            lambda: 1e-9,
            objective: Objective::Sum,
            length: 20_000,
            burn_in: 100,
            lorenz: LorenzParams::default(),
            task: LorenzTask::NextXi,
            seed,
        }
    }

    pub fn sparse(seed: u64) -> Self {
        Self { scheme: EsnScheme::Sparse, lambda: 1e-6, ..Self::uniform(seed) }
    }

    pub fn reservoir(&self) -> ReservoirGenConfig {
        match self.scheme {
            EsnScheme::Uniform => ReservoirGenConfig::uniform_esn(self.n, self.seed),
            EsnScheme::Sparse => ReservoirGenConfig::sparse_esn(self.n, self.seed),
        }
    }
}

/// A reservoir driven by the `ξ` record of a Lorenz trajectory.
#[derive(Debug, Clone)]
pub struct LorenzEsn {
    pub spec: ReservoirSpec,
    /// Lorenz samples `m_0 ..= m_T` with `T = burn_in + length`.
    pub trajectory: TimeSeries,
    /// States `x_0 ..= x_T`; `x_k` has seen `ξ_0 .. ξ_{k−1}`.
    pub states: TimeSeries,
    pub problem: RegressionProblem,
    pub readout: Readout,
}

impl LorenzEsn {
    /// Root-mean-square training error.
    pub fn train_rmse(&self) -> f64 {
        let r = &self.problem.x * &self.readout.w - &self.problem.y;
        (r.norm_squared() / self.problem.len() as f64).sqrt()
    }

    /// Prediction for every state `x_1 ..= x_T`.
    pub fn predictions(&self) -> Vec<f64> {
        (1..self.states.len()).map(|k| self.readout.predict(self.states.sample(k))).collect()
    }

    /// Target paired with state `x_k`, `k ≥ 1`.
    pub fn target(&self, task: LorenzTask, k: usize) -> f64 {
        match task {
            LorenzTask::NextXi => self.trajectory.sample(k)[0],
            LorenzTask::ZetaFromXi => self.trajectory.sample(k - 1)[2],
        }
    }
}

/// Integrates the Lorenz system, drives a freshly generated reservoir with
/// `ξ`, and solves the readout for the configured task.
pub fn train_lorenz_esn(config: &LorenzEsnConfig) -> Result<LorenzEsn> {
    let total = config.burn_in + config.length;
    if config.length == 0 {
        return Err(Error::InvalidArgument("training length must be positive".into()));
    }
    let spec = generate(&config.reservoir())?;
    let trajectory = integrate_lorenz(&config.lorenz, total)?;
    let xi = TimeSeries::from_scalars(config.lorenz.tau, &trajectory.column(0)[..total])?;
    let states = drive(&spec, &xi, &vec![0.0; spec.n()])?;
    let feats = states.slice(1, total + 1)?;
    let targets: Vec<f64> = (1..=total)
        .map(|k| match config.task {
            LorenzTask::NextXi => trajectory.sample(k)[0],
            LorenzTask::ZetaFromXi => trajectory.sample(k - 1)[2],
        })
        .collect();
    let problem = RegressionProblem::from_series(&feats, &TimeSeries::from_scalars(config.lorenz.tau, &targets)?, config.burn_in)?;
    let readout = solve_offline_with(&problem, config.lambda, config.objective)?;
    Ok(LorenzEsn { spec, trajectory, states, problem, readout })
}

/// Closed-loop run from the last driven state, returning the autonomous
/// states and the `ξ` predictions `Wᵀx_k` fed back at each step.
pub fn autonomous_forecast(esn: &LorenzEsn, steps: usize) -> Result<(TimeSeries, Vec<f64>)> {
    let x0 = esn.states.last().expect("driven states").to_vec();
    let states = crate::reservoir::autonomous_drive(&esn.spec, &esn.readout, &x0, steps)?;
    let preds = (0..steps).map(|k| esn.readout.predict(states.sample(k))).collect();
    Ok((states, preds))
}

/// Index `k ≥ skip` whose preceding Lorenz sample `m_{k−1}` lies closest to
/// wing equilibrium `wing` (0 positive, 1 negative), with that distance.
pub fn wing_start(esn: &LorenzEsn, lorenz: &LorenzParams, wing: usize, skip: usize) -> (usize, f64) {
    let c = lorenz.wing_fixed_points()[wing.min(1)];
    let mut best = (skip.max(1), f64::INFINITY);
    for k in skip.max(1)..esn.states.len() {
        let m = esn.trajectory.sample(k - 1);
        let d = ((m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2) + (m[2] - c[2]).powi(2)).sqrt();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub start_index: usize,
    pub start_distance: f64,
    pub fixed_point: FixedPointResult,
    /// Readout at the fixed point, the learned `ξ*`.
    pub output: f64,
    #[serde(with = "crate::diagnostics::complex_pairs")]
    pub targets: Vec<Complex64>,
    pub eigen_match: EigenMatch,
}

/// Newton from the driven state nearest the chosen wing, then compares the
/// closed-loop Jacobian spectrum with `exp(J|_{m*}τ)`.
pub fn fixed_point_experiment(
    esn: &LorenzEsn,
    lorenz: &LorenzParams,
    wing: usize,
    tol: f64,
    max_iter: usize,
    radius: f64,
    seed: u64,
) -> Result<FixedPointReport> {
    let (start_index, start_distance) = wing_start(esn, lorenz, wing, esn.problem.burn_in);
    let fixed_point = esn_fixed_point(&esn.spec, &esn.readout, esn.states.sample(start_index), tol, max_iter, seed)?;
    let targets = lorenz_linearization_eigs(&wing_jacobian(), lorenz.tau);
    let eigen_match = match_eigenvalues(&fixed_point.jacobian_eigs, &targets, radius);
    let output = esn.readout.predict(&fixed_point.x_star);
    Ok(FixedPointReport { start_index, start_distance, fixed_point, output, targets, eigen_match })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomologySource {
    Lorenz,
    Driven,
    Autonomous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomologySettings {
    pub landmarks: usize,
    /// `max_eps` as a multiple of the landmark covering radius.
    pub max_eps_factor: f64,
    /// Leading driven samples dropped before taking the point set.
    pub transient: usize,
    pub autonomous_steps: usize,
    pub autonomous_transient: usize,
}

impl Default for HomologySettings {
    fn default() -> Self {
        Self { landmarks: 400, max_eps_factor: 5.0, transient: 1000, autonomous_steps: 20_000, autonomous_transient: 2000 }
    }
}

/// Point set for the H1 experiment. Reservoir states are projected on the
/// first three principal directions of the driven states and scaled to unit
/// variance along each; the autonomous run reuses the driven projection.
pub fn homology_points(esn: &LorenzEsn, source: HomologySource, s: &HomologySettings) -> Result<TimeSeries> {
    let skip = |ts: &TimeSeries, k: usize| {
        if k >= ts.len() {
            return Err(Error::InvalidArgument(format!("transient {k} leaves no samples out of {}", ts.len())));
        }
        ts.slice(k, ts.len())
    };
    if source == HomologySource::Lorenz {
        return skip(&esn.trajectory, s.transient);
    }
    let pca = pca_project(&skip(&esn.states, s.transient)?, 3)?;
    match source {
        HomologySource::Driven => pca.whiten(&pca.projected),
        _ => {
            let (auto, _) = autonomous_forecast(esn, s.autonomous_steps)?;
            pca.whiten(&pca.project(&skip(&auto, s.autonomous_transient)?)?)
        }
    }
}

/// H1 summary with `max_eps` tied to the landmark covering radius.
pub fn landmark_h1(points: &TimeSeries, s: &HomologySettings) -> Result<H1Report> {
    let r = covering_radius(&PointCloud::from_series(points), s.landmarks);
    attractor_h1_experiment(points, s.landmarks, s.max_eps_factor * r)
}

/// Two runs of `x ↦ tanh(2x + z)` under the `½ sin` rotation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGsReport {
    /// Rotation angle `φ^k m₀` for each retained step.
    pub angles: Vec<f64>,
    pub inputs: Vec<f64>,
    /// States `x_{k+1}` after burn-in, read as graphs over the angle.
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub min_gap: f64,
    /// Both retained runs satisfy `x_{k+1} = tanh(2x_k + z_k)` bit for bit.
    pub self_consistent: bool,
}

pub fn two_gs_experiment(epsilon: f64, m0: f64, steps: usize, burn_in: usize, starts: [f64; 2]) -> Result<TwoGsReport> {
    if burn_in >= steps {
        return Err(Error::InvalidArgument("burn-in must be shorter than the run".into()));
    }
    let angles = circle_rotation(epsilon, m0, steps);
    let input = half_sine_rotation_input(epsilon, m0, steps);
    let map = ExampleMap::Tanh2x;
    let a = example_drive(&map, &input, &[starts[0]])?;
    let b = example_drive(&map, &input, &[starts[1]])?;
    let keep = burn_in..steps;
    let z: Vec<f64> = keep.clone().map(|k| input.sample(k)[0]).collect();
    let upper: Vec<f64> = keep.clone().map(|k| a.sample(k + 1)[0]).collect();
    let lower: Vec<f64> = keep.clone().map(|k| b.sample(k + 1)[0]).collect();
    let consistent = |run: &TimeSeries| keep.clone().all(|k| run.sample(k + 1)[0] == (2.0 * run.sample(k)[0] + input.sample(k)[0]).tanh());
    let min_gap = upper.iter().zip(&lower).map(|(u, l)| (u - l).abs()).fold(f64::INFINITY, f64::min);
    let self_consistent = consistent(&a) && consistent(&b);
    Ok(TwoGsReport {
        angles: keep.map(|k| angles.sample(k)[0]).collect(),
        inputs: z,
        self_consistent,
        upper,
        lower,
        min_gap,
    })
}

/// `[min ξ, max ξ]` over a Lorenz run.
pub fn lorenz_xi_range(lorenz: &LorenzParams, steps: usize) -> Result<(f64, f64)> {
    let xi = integrate_lorenz(lorenz, steps)?.column(0);
    Ok(xi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))))
}

/// The eight boxes `∏ ±[0.9, 1.1]`, ordered by sign pattern.
pub fn eight_boxes() -> Vec<StateBox> {
    (0..8)
        .map(|mask: u32| {
            let (lo, hi): (Vec<f64>, Vec<f64>) =
                (0..3).map(|i| if mask >> i & 1 == 1 { (-1.1, -0.9) } else { (0.9, 1.1) }).unzip();
            StateBox::new(lo, hi).expect("ordered bounds")
        })
        .collect()
}

/// Local contraction of an example map on each of the eight boxes.
pub fn eight_box_contraction(map: &ExampleMap, inputs: (f64, f64), probes: usize, seed: u64) -> Result<Vec<(StateBox, LocalContraction)>> {
    if map.state_dim() != 3 {
        return Err(Error::Dimension { context: "eight-box map", expected: 3, found: map.state_dim() });
    }
    eight_boxes()
        .into_iter()
        .map(|b| {
            let lc = check_local_contraction(|x, z| map.apply(x, z), &b, &[inputs], probes, seed)?;
            Ok((b, lc))
        })
        .collect()
}

/// Random `U[−1, 1]` matrix from a trial stream.
fn uniform_matrix(r: &mut LabRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingTrial {
    pub condition_d: bool,
    pub condition_c: bool,
}

/// Draws `A` with `U[−1, 1]` entries rescaled to spectral radius 0.9, `C`
/// with `U[−1, 1]` entries, and `q` eigenvalues uniform in modulus
/// `(0.1, 1)` and angle, then checks conditions D and C.
pub fn embedding_trial(n: usize, q: usize, period: usize, seed: u64) -> Result<EmbeddingTrial> {
    let mut r = stream_rng(seed, stream::TRIALS);
    let a = uniform_matrix(&mut r, n, n);
    let a = &a * (0.9 / linalg::spectral_radius(&a));
    let c = uniform_matrix(&mut r, n, 1);
    let lambdas: Vec<Complex64> = (0..q)
        .map(|_| Complex64::from_polar(r.random_range(0.1..1.0), r.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    Ok(EmbeddingTrial { condition_d: check_condition_d(&a, &c)?, condition_c: check_condition_c(&a, &c, &lambdas, period)? })
}

/// Output deviation between a random linear reservoir with spectral radius
/// 0.8 and its image under a random similarity `P = I + E`, `‖E‖₂ = 0.5`
/// (condition number at most 3), over 200 random inputs.
pub fn isomorphism_trial(n: usize, seed: u64) -> Result<f64> {
    let mut r = stream_rng(seed, stream::TRIALS);
    let a = uniform_matrix(&mut r, n, n);
    let a = &a * (0.8 / linalg::spectral_radius(&a));
    let spec = ReservoirSpec::linear(a, uniform_matrix(&mut r, n, 1))?;
    let e = uniform_matrix(&mut r, n, n);
    let p = DMatrix::identity(n, n) + &e * (0.5 / linalg::norm2(&e));
    let bar = similar_spec(&spec, &p)?;
    let h = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
    let z: Vec<f64> = (0..200).map(|_| r.random_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    check_system_isomorphism(&spec, &bar, &p, &h, &TimeSeries::from_scalars(1.0, &z)?, &x0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub lambda: f64,
    pub ells: Vec<usize>,
    /// `‖W_ℓ − W_{2ℓ}‖ / ‖W_{2ℓ}‖` for each `ℓ`.
    pub offline_drift: Vec<f64>,
    /// Relative distance of the `1/k` iterate to the offline `W` at the
    /// largest `ℓ`.
    pub online_rel_error: f64,
    pub epochs: usize,
    pub online_steps: usize,
}

impl ConvergenceReport {
    /// Decreasing drift with at most `inversions` increases.
    pub fn drift_inversions(&self) -> usize {
        self.offline_drift.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

/// Offline readouts on growing prefixes of the training pairs (mean
/// objective, fixed `lambda`), and the `α_k = 1/k` recursion run over the
/// first `max ℓ` pairs `epochs` times with `k` running on.
pub fn training_convergence(esn: &LorenzEsn, lambda: f64, ells: &[usize], epochs: usize) -> Result<ConvergenceReport> {
    let p = &esn.problem;
    let top = ells.iter().copied().max().unwrap_or(0);
    if ells.is_empty() || 2 * top > p.len() || epochs == 0 {
        return Err(Error::InvalidArgument(format!("need nonempty ells with 2·max ℓ ≤ {} and epochs ≥ 1", p.len())));
    }
    let prefix = |ell: usize| -> Result<DVector<f64>> {
        let sub = RegressionProblem::new(p.x.rows(0, ell).into_owned(), p.y.rows(0, ell).into_owned())?;
        Ok(solve_offline_with(&sub, lambda, Objective::Mean)?.w)
    };
    let mut offline_drift = Vec::with_capacity(ells.len());
    let mut reference = None;
    for &ell in ells {
        let w = prefix(ell)?;
        let w2 = prefix(2 * ell)?;
        offline_drift.push((&w - &w2).norm() / w2.norm());
        if ell == top {
            reference = Some(w);
        }
    }
    let reference = reference.expect("top ell is listed");
    let stream = (0..top * epochs).map(|j| (p.x.row(j % top).transpose(), p.y[j % top]));
    let run = run_online(stream, Schedule::OneOverK, lambda, DVector::zeros(p.n_features()), None, 0)?;
    Ok(ConvergenceReport {
        lambda,
        ells: ells.to_vec(),
        offline_drift,
        online_rel_error: (&run.readout.w - &reference).norm() / reference.norm(),
        epochs,
        online_steps: run.steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueLearnReport {
    pub gamma: f64,
    /// `(I − γP)⁻¹r`.
    pub exact: Vec<f64>,
    /// Monte-Carlo value started from each state.
    pub monte_carlo: Vec<ValueEstimate>,
    /// Readout trained on the Bellman residual with one-hot features.
    pub offline: Vec<f64>,
    pub contraction_ratio: f64,
}

impl ValueLearnReport {
    pub fn max_offline_error(&self) -> f64 {
        self.exact.iter().zip(&self.offline).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest `|MC − exact|` in units of the Monte-Carlo standard error.
    pub fn max_mc_z(&self) -> f64 {
        self.exact
            .iter()
            .zip(&self.monte_carlo)
            .map(|(v, e)| if e.stderr > 0.0 { (e.value - v).abs() / e.stderr } else if e.value == *v { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueLearnConfig {
    pub transition: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub gamma: f64,
    pub path_length: usize,
    pub rollouts: usize,
    pub horizon: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl ValueLearnConfig {
    /// Two-state chain `[[0.7, 0.3], [0.4, 0.6]]` with rewards `(−1, 1)`.
    pub fn two_state(seed: u64) -> Self {
        Self {
            transition: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            rewards: vec![-1.0, 1.0],
            gamma: 0.9,
            path_length: 20_000,
            rollouts: 2000,
            horizon: 200,
            pairs: 1000,
            seed,
        }
    }
}

/// Value of a finite reward chain three ways: linear solve, Monte Carlo and
/// the offline Bellman-residual readout on one-hot features.
pub fn value_learning(c: &ValueLearnConfig) -> Result<ValueLearnReport> {
    let n = c.transition.len();
    if c.rewards.len() != n {
        return Err(Error::Dimension { context: "reward table", expected: n, found: c.rewards.len() });
    }
    let emissions: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let spec = ProcessSpec::markov(c.transition.clone(), emissions.clone(), c.seed)?;
    let p = spec.transition_matrix().expect("finite chain");
    let reward = RewardFunctional::table(c.rewards.clone());
    let exact = tabular_value(&p, &DVector::from_column_slice(&c.rewards), c.gamma)?;
    let monte_carlo = (0..n)
        .map(|s| {
            let history = Path { inputs: TimeSeries::from_samples(1, 1.0, &[emissions[s].as_slice()])?, states: Some(vec![s]) };
            value_mc(&spec, &reward, c.gamma, &history, c.rollouts, c.horizon)
        })
        .collect::<Result<Vec<_>>>()?;
    let path = sample_path(&spec, c.path_length)?;
    let states = path.states.as_ref().expect("finite chain");
    let (current, next) = tabular_features(&spec, states)?;
    let rewards = reward.along(&path)?;
    let problem = value_targets_with_next(&current, &next, &rewards, c.gamma)?;
    let offline = solve_offline(&problem, 0.0)?;
    let contraction_ratio = bellman_contraction_check(&current, &next, c.gamma, c.pairs, c.seed)?;
    Ok(ValueLearnReport {
        gamma: c.gamma,
        exact: exact.iter().copied().collect(),
        monte_carlo,
        offline: offline.w.iter().copied().collect(),
        contraction_ratio,
    })
}
