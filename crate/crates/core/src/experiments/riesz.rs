use serde::Serialize;

use crate::equilibrium::EquilibriumSolution;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RieszConstants {
    /// `ent[μ_V] = ∫ μ_V log μ_V`.
    pub ent_mu_v: f64,
    /// `|Σ|`.
    pub support_volume: f64,
    /// `log|ω| − |Σ| + 1`.
    pub c_omega_sigma: f64,
    /// `ent[μ_V] − 1 + |Σ|`.
    pub predicted_limit: f64,
    /// `(Nβ, ω_N)` with `ω_N = ∫ exp(−2Nβ ζ)`.
    pub omega: Vec<(f64, f64)>,
}

/// Entropy constants of the intermediate-temperature Riesz regime from a
/// classical equilibrium solution. `ζ` is set to zero on the computed
/// support, so the zero set `ω` of `ζ` coincides with `Σ`.
pub fn riesz_midtemp_constants(eq: &EquilibriumSolution, n_beta: &[f64]) -> Result<RieszConstants> {
    if eq.touches_boundary {
        return Err(Error::Domain("equilibrium support touches the window boundary; enlarge the window".into()));
    }
    if n_beta.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("N β values must be positive"));
    }
    let dv = eq.window.cell_volume();
    let ent_mu_v: f64 = eq.density.iter().filter(|&&m| m > 0.0).map(|&m| m * m.ln()).sum::<f64>() * dv;
    let support_volume = eq.support_volume();
    if support_volume <= 0.0 {
        return Err(Error::Domain("empty support".into()));
    }
    let zeta: Vec<f64> = eq
        .zeta
        .iter()
        .zip(&eq.support_mask)
        .map(|(&z, &s)| if s { 0.0 } else { z.max(0.0) })
        .collect();
    let omega = n_beta
        .iter()
        .map(|&nb| (nb, zeta.iter().map(|&z| (-2.0 * nb * z).exp()).sum::<f64>() * dv))
        .collect();
    Ok(RieszConstants {
        ent_mu_v,
        support_volume,
        c_omega_sigma: support_volume.ln() - support_volume + 1.0,
        predicted_limit: ent_mu_v - 1.0 + support_volume,
        omega,
    })
}
