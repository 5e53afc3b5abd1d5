//! Stationary input processes, reward functionals and the Bellman operator.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynsys::{circle_rotation, integrate_lorenz, wrap_angle, LorenzParams};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng, LabRng};
use crate::series::TimeSeries;
use crate::training::Readout;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WrappedSystem {
    CircleRotation { epsilon: f64, m0: f64 },
    Lorenz { params: LorenzParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    IidFinite { support: Vec<Vec<f64>>, probabilities: Vec<f64> },
    /// Row-stochastic `transition[i][j] = P(j | i)`; state `i` emits
    /// `emissions[i]`.
    MarkovChain { transition: Vec<Vec<f64>>, emissions: Vec<Vec<f64>> },
    DeterministicWrap { system: WrappedSystem },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    pub seed: u64,
}

/// A sampled path: emitted inputs plus the hidden state index for finite
/// processes.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub inputs: TimeSeries,
    pub states: Option<Vec<usize>>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidArgument(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn check_vectors(v: &[Vec<f64>], what: &str) -> Result<usize> {
    let d = v.first().map_or(0, |x| x.len());
    if d == 0 || v.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidArgument(format!("{what} must be nonempty vectors of one dimension")));
    }
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Admissibility(format!("{what} must be bounded")));
    }
    Ok(d)
}

impl ProcessSpec {
    pub fn iid(support: Vec<Vec<f64>>, probabilities: Vec<f64>, seed: u64) -> Result<Self> {
        let s = Self { kind: ProcessKind::IidFinite { support, probabilities }, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn markov(transition: Vec<Vec<f64>>, emissions: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let s = Self { kind: ProcessKind::MarkovChain { transition, emissions }, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn wrap(system: WrappedSystem, seed: u64) -> Self {
        Self { kind: ProcessKind::DeterministicWrap { system }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ProcessKind::IidFinite { support, probabilities } => {
                check_vectors(support, "support")?;
                if support.len() != probabilities.len() {
                    return Err(Error::Dimension { context: "probabilities", expected: support.len(), found: probabilities.len() });
                }
                check_distribution(probabilities, "probabilities")
            }
            ProcessKind::MarkovChain { transition, emissions } => {
                check_vectors(emissions, "emissions")?;
                if transition.len() != emissions.len() {
                    return Err(Error::Dimension { context: "transition rows", expected: emissions.len(), found: transition.len() });
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != emissions.len() {
                        return Err(Error::Dimension { context: "transition columns", expected: emissions.len(), found: row.len() });
                    }
                    check_distribution(row, &format!("transition row {i}"))?;
                }
                Ok(())
            }
            ProcessKind::DeterministicWrap { system } => match system {
                WrappedSystem::CircleRotation { epsilon, m0 } if epsilon.is_finite() && m0.is_finite() => Ok(()),
                WrappedSystem::CircleRotation { .. } => Err(Error::InvalidArgument("rotation parameters must be finite".into())),
                WrappedSystem::Lorenz { params } if params.tau > 0.0 => Ok(()),
                WrappedSystem::Lorenz { .. } => Err(Error::InvalidArgument("Lorenz step must be positive".into())),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProcessKind::IidFinite { support, .. } => support[0].len(),
            ProcessKind::MarkovChain { emissions, .. } => emissions[0].len(),
            ProcessKind::DeterministicWrap { system: WrappedSystem::CircleRotation { .. } } => 1,
            ProcessKind::DeterministicWrap { system: WrappedSystem::Lorenz { .. } } => 3,
        }
    }

    /// Transition matrix of the finite kinds; an i.i.d. process is the chain
    /// whose rows all equal the probabilities.
    pub fn transition_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            ProcessKind::IidFinite { probabilities, .. } => {
                let n = probabilities.len();
                Some(DMatrix::from_fn(n, n, |_, j| probabilities[j]))
            }
            ProcessKind::MarkovChain { transition, .. } => {
                let n = transition.len();
                Some(DMatrix::from_fn(n, n, |i, j| transition[i][j]))
            }
            ProcessKind::DeterministicWrap { .. } => None,
        }
    }

    /// Emitted vector of each finite state.
    pub fn emissions(&self) -> Option<&[Vec<f64>]> {
        match &self.kind {
            ProcessKind::IidFinite { support, .. } => Some(support),
            ProcessKind::MarkovChain { emissions, .. } => Some(emissions),
            ProcessKind::DeterministicWrap { .. } => None,
        }
    }

    /// Unique stationary distribution of a finite process.
    pub fn stationary_distribution(&self) -> Result<DVector<f64>> {
        self.validate()?;
        let p = self
            .transition_matrix()
            .ok_or_else(|| Error::InvalidArgument("deterministic processes have no finite stationary law".into()))?;
        stationary_distribution(&p)
    }

    /// `⌈1/(1 − |λ₂|)⌉` from the second largest transition eigenvalue.
    pub fn mixing_time(&self) -> Result<usize> {
        let p = self
            .transition_matrix()
            .ok_or_else(|| Error::InvalidArgument("deterministic processes have no mixing time".into()))?;
        let mut mods: Vec<f64> = crate::linalg::eigenvalues(&p).iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.total_cmp(a));
        let l2 = mods.get(1).copied().unwrap_or(0.0);
        if l2 >= 1.0 - 1e-12 {
            return Err(Error::NonErgodic(format!("second eigenvalue modulus {l2} has no spectral gap")));
        }
        Ok((1.0 / (1.0 - l2) - 1e-9).ceil() as usize)
    }

    fn initial_state(&self, r: &mut LabRng) -> Result<usize> {
        let pi = self.stationary_distribution()?;
        draw(pi.as_slice(), r)
    }

    fn step_state(&self, s: usize, r: &mut LabRng) -> Result<usize> {
        match &self.kind {
            ProcessKind::IidFinite { probabilities, .. } => draw(probabilities, r),
            ProcessKind::MarkovChain { transition, .. } => draw(&transition[s], r),
            ProcessKind::DeterministicWrap { .. } => unreachable!("finite kinds only"),
        }
    }
}

fn draw(p: &[f64], r: &mut LabRng) -> Result<usize> {
    let w = WeightedIndex::new(p).map_err(|e| Error::InvalidArgument(format!("bad weights: {e}")))?;
    Ok(w.sample(r))
}

/// Left null vector of `P − I`, normalised to a probability vector.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let m = p.transpose() - DMatrix::identity(n, n);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] < 1e-10).collect();
    if null.len() != 1 {
        return Err(Error::NonErgodic(format!("{} stationary directions", null.len())));
    }
    let v: DVector<f64> = v_t.row(null[0]).transpose();
    let pi = &v / v.sum();
    if pi.iter().any(|x| *x < -1e-12) {
        return Err(Error::NonErgodic("stationary vector has mixed signs".into()));
    }
    Ok(pi.map(|x| x.max(0.0)))
}

/// Seeded sample of `length` consecutive inputs; finite chains start from
/// their stationary law.
pub fn sample_path(spec: &ProcessSpec, length: usize) -> Result<Path> {
    sample_path_with(spec, length, &mut stream_rng(spec.seed, stream::SAMPLES))
}

fn sample_path_with(spec: &ProcessSpec, length: usize, r: &mut LabRng) -> Result<Path> {
    if length == 0 {
        return Err(Error::InvalidArgument("path length must be at least 1".into()));
    }
    spec.validate()?;
    match &spec.kind {
        ProcessKind::DeterministicWrap { system } => {
            let inputs = match system {
                WrappedSystem::CircleRotation { epsilon, m0 } => circle_rotation(*epsilon, *m0, length - 1),
                WrappedSystem::Lorenz { params } => integrate_lorenz(params, length - 1)?,
            };
            Ok(Path { inputs, states: None })
        }
        _ => {
            let em = spec.emissions().expect("finite");
            let mut s = spec.initial_state(r)?;
            let mut states = Vec::with_capacity(length);
            let mut inputs = TimeSeries::new(spec.dim(), 1.0)?;
            for k in 0..length {
                if k > 0 {
                    s = spec.step_state(s, r)?;
                }
                states.push(s);
                inputs.push(&em[s])?;
            }
            Ok(Path { inputs, states: Some(states) })
        }
    }
}

/// Index shift `T^k`: sample `j` of the result is sample `j + k` of the
/// input. Data outside the window is kept so shifts compose.
pub fn shift(series: &TimeSeries, k: i64) -> Result<TimeSeries> {
    let origin = series.origin_index() - k;
    // Relative index 0 of the view must be stored.
    let pos = -origin;
    if pos < 0 || pos >= series.len() as i64 {
        return Err(Error::OutOfRange(format!("shift {k} leaves the stored window of length {}", series.len())));
    }
    let mut out = TimeSeries::with_origin(series.dim(), series.step(), origin)?;
    for s in series.samples() {
        out.push(s)?;
    }
    Ok(out)
}

/// Sample at relative index `j`, if stored.
pub fn at(series: &TimeSeries, j: i64) -> Result<&[f64]> {
    let pos = j - series.origin_index();
    if pos < 0 || pos >= series.len() as i64 {
        return Err(Error::OutOfRange(format!("index {j} outside the stored window")));
    }
    Ok(series.sample(pos as usize))
}

/// Evaluation rule of a causal reward functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardRule {
    Constant { value: f64 },
    /// Reward by current hidden state of a finite process.
    StateTable { values: Vec<f64> },
    /// `Σ_j weights[j] · z_{−j}` over the last `weights.len()` inputs, each
    /// weight a vector matched against the input.
    WindowLinear { weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFunctional {
    pub rule: RewardRule,
}

impl RewardFunctional {
    pub fn constant(value: f64) -> Self {
        Self { rule: RewardRule::Constant { value } }
    }

    pub fn table(values: Vec<f64>) -> Self {
        Self { rule: RewardRule::StateTable { values } }
    }

    /// Number of trailing inputs the reward reads.
    pub fn window(&self) -> usize {
        match &self.rule {
            RewardRule::WindowLinear { weights } => weights.len(),
            _ => 1,
        }
    }

    /// Reward at position `k` of the path, reading only positions `≤ k`.
    pub fn evaluate(&self, path: &Path, k: usize) -> Result<f64> {
        let v = match &self.rule {
            RewardRule::Constant { value } => *value,
            RewardRule::StateTable { values } => {
                let s = path
                    .states
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("state rewards need a finite process".into()))?[k];
                *values.get(s).ok_or_else(|| Error::OutOfRange(format!("no reward for state {s}")))?
            }
            RewardRule::WindowLinear { weights } => {
                if k + 1 < weights.len() {
                    return Err(Error::OutOfRange(format!("reward window {} needs {} past inputs", weights.len(), weights.len() - 1)));
                }
                let mut acc = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    let z = path.inputs.sample(k - j);
                    if w.len() != z.len() {
                        return Err(Error::Dimension { context: "reward weights", expected: z.len(), found: w.len() });
                    }
                    acc += w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
                }
                acc
            }
        };
        if !v.is_finite() {
            return Err(Error::Admissibility(format!("reward {v} at step {k} is unbounded")));
        }
        Ok(v)
    }

    pub fn along(&self, path: &Path) -> Result<Vec<f64>> {
        let start = self.window() - 1;
        (start..path.len()).map(|k| self.evaluate(path, k)).collect()
    }
}

/// `(I − γP)^{-1} r` for a finite chain with state rewards.
pub fn tabular_value(transition: &DMatrix<f64>, rewards: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    check_gamma(gamma)?;
    let n = transition.nrows();
    (DMatrix::identity(n, n) - transition * gamma)
        .lu()
        .solve(rewards)
        .ok_or_else(|| Error::Singular("I − γP".into()))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!("discount must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Bound on the truncated tail `γ^h sup|R| / (1 − γ)`.
    pub tail_bound: f64,
}

/// Monte-Carlo value of the history's final position: rolls the process
/// forward `horizon` steps `n_rollouts` times and averages
/// `Σ_{k<horizon} γ^k R(T^k z)`.
///
/// Finite chains condition on the last hidden state, i.i.d. processes on
/// nothing beyond the reward window, and deterministic systems continue the
/// stored trajectory.
pub fn value_mc(
    spec: &ProcessSpec,
    reward: &RewardFunctional,
    gamma: f64,
    history: &Path,
    n_rollouts: usize,
    horizon: usize,
) -> Result<ValueEstimate> {
    check_gamma(gamma)?;
    if history.len() < reward.window() {
        return Err(Error::OutOfRange(format!("history of {} is shorter than the reward window {}", history.len(), reward.window())));
    }
    if n_rollouts == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("need at least one rollout of one step".into()));
    }
    let mut r = stream_rng(spec.seed, stream::ROLLOUT);
    let mut totals = Vec::with_capacity(n_rollouts);
    let mut sup = 0.0f64;
    for _ in 0..n_rollouts {
        let path = extend(spec, history, horizon - 1, &mut r)?;
        let mut g = 1.0;
        let mut total = 0.0;
        for k in 0..horizon {
            let v = reward.evaluate(&path, history.len() - 1 + k)?;
            sup = sup.max(v.abs());
            total += g * v;
            g *= gamma;
        }
        if !total.is_finite() {
            return Err(Error::Admissibility("rollout return is unbounded".into()));
        }
        totals.push(total);
        if matches!(spec.kind, ProcessKind::DeterministicWrap { .. }) {
            // Every rollout coincides.
            break;
        }
    }
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let stderr = if totals.len() > 1 {
        (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let tail_bound = gamma.powi(horizon as i32) * sup / (1.0 - gamma);
    Ok(ValueEstimate { value: mean, stderr, tail_bound })
}

fn extend(spec: &ProcessSpec, history: &Path, steps: usize, r: &mut LabRng) -> Result<Path> {
    let mut inputs = history.inputs.clone();
    let mut states = history.states.clone();
    match &spec.kind {
        ProcessKind::DeterministicWrap { system } => {
            let last = history.inputs.last().expect("nonempty history").to_vec();
            let mut cur = last;
            for _ in 0..steps {
                cur = match system {
                    WrappedSystem::CircleRotation { epsilon, .. } => vec![wrap_angle(cur[0] + epsilon)],
                    WrappedSystem::Lorenz { params } => {
                        params.rk4_step(&[cur[0], cur[1], cur[2]], params.tau).to_vec()
                    }
                };
                inputs.push(&cur)?;
            }
        }
        _ => {
            let st = states.as_mut().ok_or_else(|| Error::InvalidArgument("history lacks hidden states".into()))?;
            let em = spec.emissions().expect("finite");
            let mut s = *st.last().expect("nonempty history");
            for _ in 0..steps {
                s = spec.step_state(s, r)?;
                st.push(s);
                inputs.push(&em[s])?;
            }
        }
    }
    Ok(Path { inputs, states })
}

/// Mean of `(wᵀ(H_k − γN_k) − R_k)²` where `N_k` are successor features,
/// sampled or conditional expectations.
pub fn bellman_residual_with_next(
    current: &TimeSeries,
    next: &TimeSeries,
    readout: &Readout,
    rewards: &[f64],
    gamma: f64,
) -> Result<f64> {
    let prob = crate::training::value_targets_with_next(current, next, rewards, gamma)?;
    if readout.dim() != prob.n_features() {
        return Err(Error::Dimension { context: "readout", expected: prob.n_features(), found: readout.dim() });
    }
    let resid = &prob.x * &readout.w - &prob.y;
    Ok(resid.norm_squared() / prob.len() as f64)
}

/// Bellman residual along a path with the sampled successor `H_{k+1}`.
pub fn bellman_residual(features: &TimeSeries, readout: &Readout, rewards: &[f64], gamma: f64) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument("residual needs at least two feature samples".into()));
    }
    let current = features.slice(0, features.len() - 1)?;
    let next = features.slice(1, features.len())?;
    bellman_residual_with_next(&current, &next, readout, rewards, gamma)
}

/// One-hot features of a finite path and their exact one-step conditional
/// expectations `E[e_{s'} | s] = P_s`.
pub fn tabular_features(spec: &ProcessSpec, states: &[usize]) -> Result<(TimeSeries, TimeSeries)> {
    let p = spec
        .transition_matrix()
        .ok_or_else(|| Error::InvalidArgument("tabular features need a finite process".into()))?;
    let n = p.nrows();
    let mut cur = TimeSeries::new(n, 1.0)?;
    let mut next = TimeSeries::new(n, 1.0)?;
    for &s in states {
        let mut e = vec![0.0; n];
        e[s] = 1.0;
        cur.push(&e)?;
        next.push(p.row(s).transpose().as_slice())?;
    }
    Ok((cur, next))
}

/// Largest empirical ratio `‖ΦH₁ − ΦH₂‖_μ / ‖H₁ − H₂‖_μ` over random pairs
/// `H_i = w_iᵀf` with Gaussian `w_i`; `next` carries the successor features
/// used for `E[H∘T]`. Coincident pairs are skipped.
pub fn bellman_contraction_check(
    current: &TimeSeries,
    next: &TimeSeries,
    gamma: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    check_gamma(gamma)?;
    if current.len() != next.len() || current.dim() != next.dim() || current.is_empty() {
        return Err(Error::Dimension { context: "successor features", expected: current.len(), found: next.len() });
    }
    let f = current.to_matrix();
    let g = next.to_matrix();
    let mut r = stream_rng(seed, stream::PROBES);
    let mut worst = 0.0f64;
    for _ in 0..n_pairs {
        let w1 = DVector::from_fn(f.ncols(), |_, _| r.sample::<f64, _>(StandardNormal));
        let w2 = DVector::from_fn(f.ncols(), |_, _| r.sample::<f64, _>(StandardNormal));
        let d = w1 - w2;
        let den = (&f * &d).norm();
        if den < 1e-12 {
            continue;
        }
        let num = gamma * (&g * &d).norm();
        worst = worst.max(num / den);
    }
    Ok(worst)
}
