//! Reservoir computing toolkit: drive systems, echo state networks,
//! readout training, dynamical diagnostics, persistent homology,
//! stochastic value learning and random-feature PDE solvers.

pub mod diagnostics;
pub mod dynsys;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod pde;
pub mod reservoir;
pub mod rng;
pub mod series;
pub mod stochastic;
pub mod topology;
pub mod training;

pub use error::{Error, Result};
pub use series::TimeSeries;
