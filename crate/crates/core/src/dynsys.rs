//! Drive systems: the Lorenz flow, circle rotations, observation functions
//! and the small example reservoir maps used to illustrate generalised
//! synchronisation.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Any state coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub tau: f64,
    pub initial: [f64; 3],
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, tau: 0.01, initial: [0.0, 1.0, 1.05] }
    }
}

impl LorenzParams {
    pub fn with_initial(mut self, initial: [f64; 3]) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Vector field of the flow.
    pub fn rhs(&self, m: &[f64; 3]) -> [f64; 3] {
        let [x, y, z] = *m;
        [self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z]
    }

    /// Jacobian of the vector field.
    pub fn jacobian(&self, m: &[f64; 3]) -> Matrix3<f64> {
        let [x, y, z] = *m;
        Matrix3::new(
            -self.sigma, self.sigma, 0.0,
            self.rho - z, -1.0, -x,
            y, x, -self.beta,
        )
    }

    /// One classical RK4 step of length `h`.
    pub fn rk4_step(&self, m: &[f64; 3], h: f64) -> [f64; 3] {
        let add = |a: &[f64; 3], b: &[f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        let k1 = self.rhs(m);
        let k2 = self.rhs(&add(m, &k1, h / 2.0));
        let k3 = self.rhs(&add(m, &k2, h / 2.0));
        let k4 = self.rhs(&add(m, &k3, h));
        let mut out = *m;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// One RK4 step together with the exact Jacobian of the step map.
    ///
    /// The tangent matrix is pushed through the same four stages, so the
    /// returned matrix is the derivative of [`LorenzParams::rk4_step`] rather
    /// than an approximation of the flow's variational equation.
    pub fn rk4_step_tangent(&self, m: &[f64; 3], h: f64) -> ([f64; 3], Matrix3<f64>) {
        let add = |a: &[f64; 3], b: &[f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        let id = Matrix3::identity();
        let k1 = self.rhs(m);
        let dk1 = self.jacobian(m);
        let m2 = add(m, &k1, h / 2.0);
        let k2 = self.rhs(&m2);
        let dk2 = self.jacobian(&m2) * (id + dk1 * (h / 2.0));
        let m3 = add(m, &k2, h / 2.0);
        let k3 = self.rhs(&m3);
        let dk3 = self.jacobian(&m3) * (id + dk2 * (h / 2.0));
        let m4 = add(m, &k3, h);
        let k4 = self.rhs(&m4);
        let dk4 = self.jacobian(&m4) * (id + dk3 * h);
        let mut out = *m;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let jac = id + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (h / 6.0);
        (out, jac)
    }

    /// Non-trivial equilibria `(±√(β(ρ−1)), ±√(β(ρ−1)), ρ−1)`.
    pub fn wing_fixed_points(&self) -> [[f64; 3]; 2] {
        let c = (self.beta * (self.rho - 1.0)).sqrt();
        [[c, c, self.rho - 1.0], [-c, -c, self.rho - 1.0]]
    }
}

/// Integrates the Lorenz system with one RK4 step per `tau`.
///
/// Returns `n_steps + 1` samples, the first being `params.initial`.
pub fn integrate_lorenz(params: &LorenzParams, n_steps: usize) -> Result<TimeSeries> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if !(params.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {}", params.tau)));
    }
    let mut data = Vec::with_capacity(3 * (n_steps + 1));
    let mut m = params.initial;
    data.extend_from_slice(&m);
    for step in 1..=n_steps {
        m = params.rk4_step(&m, params.tau);
        if m.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(Error::IntegrationDiverged { step });
        }
        data.extend_from_slice(&m);
    }
    Ok(TimeSeries::from_raw(3, params.tau, 0, data))
}

/// Angles `m0 + kε` reduced to `[0, 2π)`, for `k = 0..=n_steps`.
pub fn circle_rotation(epsilon: f64, m0: f64, n_steps: usize) -> TimeSeries {
    let data = (0..=n_steps).map(|k| wrap_angle(m0 + k as f64 * epsilon)).collect();
    TimeSeries::from_raw(1, 1.0, 0, data)
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU { 0.0 } else { r }
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Scalar observation of a drive state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationFn {
    /// `m ↦ m[i]`.
    Coord { index: usize },
    /// `m ↦ a·sin(m)` on a scalar (circle) state.
    ScaledSin { amplitude: f64 },
    /// `m ↦ Σ wᵢ mᵢ`.
    Linear { weights: Vec<f64> },
}

impl ObservationFn {
    pub fn coord(index: usize) -> Self {
        Self::Coord { index }
    }

    pub fn scaled_sin(amplitude: f64) -> Self {
        Self::ScaledSin { amplitude }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Self::Coord { index } if *index >= dim => {
                Err(Error::Dimension { context: "coordinate observation", expected: index + 1, found: dim })
            }
            Self::ScaledSin { .. } if dim != 1 => {
                Err(Error::Dimension { context: "scaled-sine observation", expected: 1, found: dim })
            }
            Self::Linear { weights } if weights.len() != dim => {
                Err(Error::Dimension { context: "linear observation", expected: weights.len(), found: dim })
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, m: &[f64]) -> f64 {
        match self {
            Self::Coord { index } => m[*index],
            Self::ScaledSin { amplitude } => amplitude * m[0].sin(),
            Self::Linear { weights } => weights.iter().zip(m).map(|(w, x)| w * x).sum(),
        }
    }
}

/// Applies `f` pointwise; step and origin are preserved.
pub fn observe(series: &TimeSeries, f: &ObservationFn) -> Result<TimeSeries> {
    f.check_dim(series.dim())?;
    let data = series.samples().map(|s| f.apply(s)).collect();
    Ok(TimeSeries::from_raw(1, series.step(), series.origin_index(), data))
}

/// The small example reservoir maps `F(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExampleMap {
    /// `x ↦ tanh(2x + z)` on ℝ.
    Tanh2x,
    /// `(u,v,w) ↦ (sgn(u)|u|^α, sgn(v)|v|^α, sgn(w)|w|^α) + λ(sin kz, cos kz, sin² kz)`.
    SignedPower { alpha: f64, lambda: f64, k: f64 },
    /// Polar `(ρ, θ) ↦ (√ρ + z, θ + δ)`.
    PolarSqrt { delta: f64 },
    /// Polar `(ρ, θ) ↦ (ρ² + z, θ + δ)`.
    PolarSquare { delta: f64 },
}

impl ExampleMap {
    /// Parses `tanh2x`, `signed_power`, `polar_sqrt`, `polar_square` with
    /// the given parameters (missing values fall back to the illustrative
    /// defaults α=0.9, λ=0.009, k=0.1, δ=0.1).
    pub fn from_name(name: &str, alpha: Option<f64>, lambda: Option<f64>, k: Option<f64>, delta: Option<f64>) -> Result<Self> {
        match name {
            "tanh2x" => Ok(Self::Tanh2x),
            "signed_power" => Ok(Self::SignedPower {
                alpha: alpha.unwrap_or(0.9),
                lambda: lambda.unwrap_or(0.009),
                k: k.unwrap_or(0.1),
            }),
            "polar_sqrt" => Ok(Self::PolarSqrt { delta: delta.unwrap_or(0.1) }),
            "polar_square" => Ok(Self::PolarSquare { delta: delta.unwrap_or(0.1) }),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Tanh2x => 1,
            Self::SignedPower { .. } => 3,
            Self::PolarSqrt { .. } | Self::PolarSquare { .. } => 2,
        }
    }

    /// One application of the map. Polar states are `(ρ, θ)` with θ
    /// reduced to `[0, 2π)`.
    pub fn apply(&self, x: &[f64], z: f64) -> Vec<f64> {
        match *self {
            Self::Tanh2x => vec![(2.0 * x[0] + z).tanh()],
            Self::SignedPower { alpha, lambda, k } => {
                let p = |u: f64| u.signum() * u.abs().powf(alpha);
                let s = (k * z).sin();
                vec![p(x[0]) + lambda * s, p(x[1]) + lambda * (k * z).cos(), p(x[2]) + lambda * s * s]
            }
            Self::PolarSqrt { delta } => vec![x[0].sqrt() + z, wrap_angle(x[1] + delta)],
            Self::PolarSquare { delta } => vec![x[0] * x[0] + z, wrap_angle(x[1] + delta)],
        }
    }
}

/// Iterates an example map over a scalar input series.
///
/// Returns `len(input) + 1` states starting with `x0`.
pub fn example_drive(map: &ExampleMap, input: &TimeSeries, x0: &[f64]) -> Result<TimeSeries> {
    if x0.len() != map.state_dim() {
        return Err(Error::Dimension { context: "example drive initial state", expected: map.state_dim(), found: x0.len() });
    }
    if input.dim() != 1 {
        return Err(Error::Dimension { context: "example drive input", expected: 1, found: input.dim() });
    }
    let mut data = Vec::with_capacity(x0.len() * (input.len() + 1));
    let mut x = x0.to_vec();
    data.extend_from_slice(&x);
    for (k, z) in input.samples().enumerate() {
        x = map.apply(&x, z[0]);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { step: k + 1, norm });
        }
        data.extend_from_slice(&x);
    }
    Ok(TimeSeries::from_raw(x0.len(), input.step(), input.origin_index(), data))
}

/// `½ sin` observations of a circle rotation, the input used by the
/// `tanh(2x+z)` example.
pub fn half_sine_rotation_input(epsilon: f64, m0: f64, n_steps: usize) -> TimeSeries {
    let angles = circle_rotation(epsilon, m0, n_steps);
    observe(&angles, &ObservationFn::scaled_sin(0.5)).expect("scalar series")
}
