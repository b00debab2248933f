//! Point configurations, the configuration-space distance, geometric
//! transforms and cell-wise regularization.

mod config;
mod distance;
mod regularize;

pub use config::{
    apply_transform, min_separation, read_ndjson, write_ndjson, ConfigTransform, Domain,
    PointConfig,
};
pub use distance::{assignment_cost, bounded_lipschitz, config_distance};
pub use regularize::{
    lattice_sites_per_axis, regularize, regularize_with_report, Regularized, TriggeredCell,
};
