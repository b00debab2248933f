use crate::error::{shape, Result};
use crate::torus::ops::same_grid;
use crate::torus::{convolve, GridMeasure, KernelSpec, SignedGridField};

/// `ent[μ] = ∫ μ log μ` with `0 log 0 = 0`.
///
/// Negative densities cannot reach this function: [`GridMeasure`] rejects
/// them at construction.
pub fn entropy(mu: &GridMeasure) -> f64 {
    let dv = mu.geometry().cell_volume();
    mu.values().iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>() * dv
}

/// `∫ (dμ/dν) log(dμ/dν) dν`; `+∞` when μ charges a cell where ν vanishes.
pub fn relative_entropy_measures(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    if mu.geometry() != nu.geometry() {
        return Err(shape("measures live on different grids"));
    }
    let dv = mu.geometry().cell_volume();
    let mut total = 0.0;
    for (&m, &n) in mu.values().iter().zip(nu.values()) {
        if m == 0.0 {
            continue;
        }
        if n == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += m * (m / n).ln();
    }
    // the unnormalized form keeps the value nonnegative for unequal masses
    Ok((total + nu.mass() / dv - mu.mass() / dv) * dv)
}

/// `E(μ) + ∫ V dμ`, the mean-field energy.
pub fn mean_field_energy(mu: &GridMeasure, kernel: &KernelSpec, v: &SignedGridField) -> Result<f64> {
    same_grid(mu.geometry(), kernel.geometry())?;
    same_grid(mu.geometry(), v.geometry())?;
    let m = mu.as_signed();
    let h = convolve(kernel, &m)?;
    Ok(m.inner(&h)? + m.inner(v)?)
}

/// `E_V^θ(μ) = E(μ) + ∫ V dμ + ent[μ] / θ`.
pub fn thermal_energy(
    mu: &GridMeasure,
    kernel: &KernelSpec,
    v: &SignedGridField,
    theta: f64,
) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(crate::error::invalid("theta must be positive"));
    }
    Ok(mean_field_energy(mu, kernel, v)? + entropy(mu) / theta)
}
