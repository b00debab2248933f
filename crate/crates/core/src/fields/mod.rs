//! Empirical measures, tagged empirical fields, intensities and specific
//! relative entropy estimates.

mod dictionary;
mod empirical;
mod entropy;

pub use dictionary::{distance_with, field_pseudo_distance, FieldDictionary, ProductFunctional};
pub use empirical::{
    empirical_measure, intensity_profile, tagged_empirical_field, IntensityProfile, TaggedFieldSample,
};
pub use entropy::{
    estimate_specific_entropy, estimate_specific_entropy_with, poisson_relative_entropy_rate,
    EntropyEstimate, EntropyOptions, EntropyReference,
};
