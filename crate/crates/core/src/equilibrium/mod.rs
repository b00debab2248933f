//! Entropy and energy functionals and the two equilibrium solvers: the
//! thermal equilibrium measure on the torus and the classical equilibrium
//! measure on a Euclidean window.

mod functionals;
mod thermal;
mod window;

pub use functionals::{entropy, mean_field_energy, relative_entropy_measures, thermal_energy};
pub use thermal::{
    solve_thermal_equilibrium, zeta_thermal, ThermalOptions, ThermalSolution, DENSITY_FLOOR,
    RESIDUAL_SUPPORT,
};
pub use window::{
    solve_equilibrium_measure, EquilibriumOptions, EquilibriumSolution, EuclideanKernel,
    EuclideanWindow,
};
