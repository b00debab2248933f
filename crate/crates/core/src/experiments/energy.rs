use serde::Serialize;

use crate::equilibrium::{thermal_energy, zeta_thermal, ThermalSolution};
use crate::error::{invalid, shape, Result};
use crate::pointconfig::{Domain, PointConfig};
use crate::torus::{convolve, min_image, GridMeasure, KernelSpec, Potential, TorusGeometry, PAIR_DISTANCE_FLOOR};

pub(crate) fn check_on_torus(c: &PointConfig, g: &TorusGeometry) -> Result<()> {
    match c.domain() {
        Domain::Torus { dim, side } if *dim == g.dim() && *side == g.side() => Ok(()),
        _ => Err(shape("configuration does not live on the kernel's torus")),
    }
}

/// `Σ_{i≠j} g(x_i − x_j)` from the continuous kernel; `+∞` when a singular
/// kernel sees two coincident points.
pub fn pair_sum(c: &PointConfig, kernel: &KernelSpec) -> f64 {
    let g = kernel.geometry();
    let (d, side) = (g.dim(), g.side());
    let singular = kernel.is_singular();
    let mut diff = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let (a, b) = (c.point(i), c.point(j));
            for k in 0..d {
                diff[k] = min_image(a[k] - b[k], side);
            }
            if singular && diff.iter().map(|x| x * x).sum::<f64>().sqrt() < PAIR_DISTANCE_FLOOR {
                return f64::INFINITY;
            }
            total += kernel.eval_pair(&diff);
        }
    }
    2.0 * total
}

/// Next-order energy
/// `F_N(X_N, μ) = N^{-2} Σ_{i≠j} g(x_i − x_j) + E(μ) − (2/N) Σ_i h^μ(x_i)`,
/// with `h^μ = g * μ` interpolated at the particles.
pub fn fn_energy(x_n: &PointConfig, mu: &GridMeasure, kernel: &KernelSpec) -> Result<f64> {
    let g = kernel.geometry();
    check_on_torus(x_n, g)?;
    if mu.geometry() != g {
        return Err(shape("measure and kernel live on different grids"));
    }
    if x_n.is_empty() {
        return Err(invalid("F_N needs at least one particle"));
    }
    let n = x_n.len() as f64;
    let pairs = pair_sum(x_n, kernel);
    if pairs.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let m = mu.as_signed();
    let h = convolve(kernel, &m)?;
    let e_mu = m.inner(&h)?;
    let cross: f64 = x_n.points().map(|p| h.interpolate(p)).sum();
    Ok(pairs / (n * n) + e_mu - 2.0 * cross / n)
}

/// The four terms of the thermal splitting of `H_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    /// `H_N(X_N)` from the continuous kernel and potential.
    pub h_direct: f64,
    /// `N² E_V^θ(μ_θ)`.
    pub mean_field_term: f64,
    /// `N² F_N(X_N, μ_θ)`.
    pub fn_term: f64,
    /// `N ∑ ζ_θ(x_i)`.
    pub zeta_term: f64,
    /// `|h_direct − sum of terms| / (|h_direct| + 1)`.
    pub residual: f64,
}

/// Evaluates both sides of
/// `H_N = N² (E_V^θ(μ_θ) + F_N(X_N, μ_θ) + ∫ ζ_θ d emp_N)`.
pub fn split_hamiltonian(
    x_n: &PointConfig,
    sol: &ThermalSolution,
    kernel: &KernelSpec,
    potential: &Potential,
) -> Result<SplitReport> {
    let g = kernel.geometry();
    check_on_torus(x_n, g)?;
    if sol.mu_theta.geometry() != g {
        return Err(shape("thermal solution and kernel live on different grids"));
    }
    let n = x_n.len() as f64;
    let v_grid = potential.sample(g)?;
    let v_sum: f64 = x_n.points().map(|p| potential.eval(g.side(), p)).sum();
    let h_direct = pair_sum(x_n, kernel) + n * v_sum;
    let mean_field_term = n * n * thermal_energy(&sol.mu_theta, kernel, &v_grid, sol.theta)?;
    let fn_term = n * n * fn_energy(x_n, &sol.mu_theta, kernel)?;
    let zeta = zeta_thermal(sol);
    let zeta_term = n * x_n.points().map(|p| zeta.interpolate(p)).sum::<f64>();
    let residual = (h_direct - (mean_field_term + fn_term + zeta_term)).abs() / (h_direct.abs() + 1.0);
    Ok(SplitReport { h_direct, mean_field_term, fn_term, zeta_term, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_thermal_equilibrium, ThermalOptions};
    use crate::sampling::{rng_from_seed, sample_iid};
    use std::f64::consts::PI;

    #[test]
    fn two_particles_against_formula_sheet() {
        let g = TorusGeometry::new(1, 1.0, 32).unwrap();
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let mu = GridMeasure::uniform(g);
        let (x1, x2) = (0.1, 0.45);
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &[vec![x1], vec![x2]]).unwrap();
        // uniform μ: E(μ) = 0 and h^μ = 0, so F_2 = 2 cos(2π(x1 − x2)) / 4
        let expected = 2.0 * (2.0 * PI * (x1 - x2)).cos() / 4.0;
        assert!((fn_energy(&c, &mu, &k).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn single_particle_has_no_pair_term() {
        let g = TorusGeometry::new(1, 1.0, 256).unwrap();
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let mu = GridMeasure::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &[vec![0.2]]).unwrap();
        // h^μ(x) = 0.25 cos(2πx), E(μ) = 0.0625
        let expected = 0.0625 - 2.0 * 0.25 * (2.0 * PI * 0.2).cos();
        let got = fn_energy(&c, &mu, &k).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn fn_energy_shrinks_for_iid_samples() {
        let g = TorusGeometry::new(1, 1.0, 64).unwrap();
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let mu = GridMeasure::from_fn(g, |x| 1.0 + 0.6 * (2.0 * PI * x[0]).sin()).unwrap();
        let mut rng = rng_from_seed(12);
        let mean_f = |n: usize, rng: &mut crate::sampling::SimRng| {
            (0..200).map(|_| fn_energy(&sample_iid(&mu, n, rng).unwrap(), &mu, &k).unwrap().abs()).sum::<f64>() / 200.0
        };
        let (a, b, c) = (mean_f(8, &mut rng), mean_f(32, &mut rng), mean_f(128, &mut rng));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn coincident_points_with_singular_kernel() {
        let g = TorusGeometry::new(1, 1.0, 32).unwrap();
        let k = KernelSpec::riesz_periodic(g, 0.25, 8).unwrap();
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &[vec![0.3], vec![0.3]]).unwrap();
        assert_eq!(fn_energy(&c, &GridMeasure::uniform(g), &k).unwrap(), f64::INFINITY);
    }

    #[test]
    fn noninteracting_split_is_exact() {
        let g = TorusGeometry::new(1, 1.0, 512).unwrap();
        let k = KernelSpec::zero(g);
        let v = Potential::Cosine { amplitude: 1.5, mode: 1 };
        let opts = ThermalOptions { tol: 1e-14, ..Default::default() };
        let sol = solve_thermal_equilibrium(&k, &v.sample(&g).unwrap(), 1.0, &opts).unwrap();
        let mut rng = rng_from_seed(2);
        for n in [1, 5, 32] {
            let c = sample_iid(&GridMeasure::uniform(g), n, &mut rng).unwrap();
            let r = split_hamiltonian(&c, &sol, &k, &v).unwrap();
            assert!(r.residual < 1e-10, "{r:?}");
        }
    }
}
