//! Poisson, i.i.d. and Metropolis samplers.

mod gibbs;
mod poisson;
mod rng;

pub use gibbs::{
    acceptance_probability, sample_gibbs, BetaMode, GibbsChain, GibbsSample, GibbsSpec, Proposal,
    SamplerConfig,
};
pub use poisson::{
    condition_on_count, poisson_count, sample_iid, sample_poisson_box, sample_poisson_inhomogeneous,
    CellSampler, ConditionedDraw, ConditioningMode,
};
pub use rng::{rng_from_seed, substream, SimRng};
