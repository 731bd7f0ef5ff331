//! Differentially private training of Kolmogorov-Arnold networks and MLP
//! baselines: spline and RSWAF bases, analytic per-sample gradients,
//! DP-Adam with an RDP accountant, data loading, and an experiment
//! harness behind the `dpkan` binary.

pub mod accountant;
pub mod basis;
pub mod data;
pub mod error;
pub mod experiment;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod serialize;

pub use error::{Error, Result};
