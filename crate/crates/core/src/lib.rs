//! Numerical laboratory for interacting particle gases at high temperature on
//! the flat torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus`]: geometry, grid measures, kernels, spectral convolution.
//! * [`equilibrium`]: entropy/energy functionals, thermal and classical
//!   equilibrium solvers.
//! * [`pointconfig`]: point configurations, the configuration-space distance,
//!   regularization.
//! * [`sampling`]: Poisson, i.i.d. and Metropolis samplers.
//! * [`fields`]: tagged empirical fields, intensities, entropy estimators.
//! * [`experiments`]: splitting identity, partition functions, annealing,
//!   rate estimation.

pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod pointconfig;
pub mod sampling;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
