//! Torus geometry, grid-sampled measures and potentials, interaction kernels,
//! convolutions and energy functionals.

mod fft;
mod geometry;
mod grid;
mod interp;
mod kernel;
pub(crate) mod ops;
mod potential;
pub mod quadrature;

pub(crate) use fft::FftNd;
pub use geometry::{min_image, torus_distance, wrap, TorusGeometry};
pub use grid::{GridMeasure, SignedGridField};
pub use interp::{interpolate_values, INTERPOLATION_ORDER};
pub use kernel::{FourierMode, KernelForm, KernelSpec, PAIR_DISTANCE_FLOOR};
pub use ops::{
    convolve, interaction_energy, kernel_modulus, kernel_origin_integral, validate_kernel,
    ValidationReport, POSITIVITY_TOLERANCE,
};
pub use potential::Potential;
