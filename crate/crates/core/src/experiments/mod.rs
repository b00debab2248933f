//! Runnable versions of the identities and limit statements: the thermal
//! splitting of `H_N`, next-order partition functions, annealed minima,
//! discrepancies, large-deviation rate estimates and Riesz constants.

mod anneal;
mod discrepancy;
mod energy;
mod partition;
mod rate;
mod riesz;

pub use anneal::{minimize_hamiltonian, AnnealOptions};
pub use discrepancy::discrepancy;
pub use energy::{fn_energy, pair_sum, split_hamiltonian, SplitReport};
pub use partition::{estimate_next_order_partition, PartitionEstimate, PartitionMode, PartitionOptions};
pub use rate::{calibrate_delta, estimate_rate, RateEstimate, RateMode, RateOptions, RatePoint};
pub use riesz::{riesz_midtemp_constants, RieszConstants};
