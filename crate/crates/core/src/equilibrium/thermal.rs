use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::torus::ops::{convolve_values, same_grid};
use crate::torus::{validate_kernel, GridMeasure, KernelSpec, SignedGridField};

/// Densities are clamped below at this value before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Cells with smaller density are left out of the reported EL residual.
pub const RESIDUAL_SUPPORT: f64 = 1e-14;

const MONOTONICITY_SLACK: f64 = 1e-12;

/// Settings for [`solve_thermal_equilibrium`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalOptions {
    /// Stop once the undamped update changes no cell by more than this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Initial damping α; halved whenever a step would raise the energy.
    pub damping: f64,
    /// Starting density; uniform when absent.
    pub initial: Option<GridMeasure>,
}

impl Default for ThermalOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: 50_000, damping: 0.5, initial: None }
    }
}

/// Minimizer of `E(μ) + ∫V dμ + ent[μ]/θ` over probability densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSolution {
    pub mu_theta: GridMeasure,
    pub theta: f64,
    /// Constant `c` in `2h + V + log(μ)/θ = c`, the μ-weighted mean of the left side.
    pub el_constant: f64,
    /// Sup-norm violation of the Euler–Lagrange equation.
    pub residual: f64,
    pub iterations: usize,
    /// `E_V^θ(μ_θ)`.
    pub energy: f64,
    /// Final damping factor.
    pub damping: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    theta: f64,
    el_constant: f64,
    residual: f64,
    iterations: usize,
    energy: f64,
}

impl ThermalSolution {
    /// JSON sidecar `{theta, el_constant, residual, iterations, energy}`.
    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            theta: self.theta,
            el_constant: self.el_constant,
            residual: self.residual,
            iterations: self.iterations,
            energy: self.energy,
        };
        serde_json::to_string_pretty(&s).expect("sidecar serializes")
    }

    /// Write the density CSV and the sidecar.
    pub fn write<W1: Write, W2: Write>(&self, csv: W1, mut sidecar: W2) -> Result<()> {
        self.mu_theta.to_csv(csv)?;
        sidecar.write_all(self.sidecar_json().as_bytes())?;
        Ok(())
    }

    pub fn read(csv: impl std::io::BufRead, sidecar: &str) -> Result<Self> {
        let mu_theta = GridMeasure::from_csv(csv)?;
        let s: Sidecar = serde_json::from_str(sidecar).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            mu_theta,
            theta: s.theta,
            el_constant: s.el_constant,
            residual: s.residual,
            iterations: s.iterations,
            energy: s.energy,
            damping: f64::NAN,
        })
    }
}

struct Problem<'a> {
    kernel: &'a KernelSpec,
    v: &'a [f64],
    theta: f64,
    dv: f64,
    uniform: f64,
}

/// `r log r - r + 1`, with a series near `r = 1`.
fn relative_entropy_density(r: f64) -> f64 {
    let e = r - 1.0;
    if e.abs() < 1e-2 {
        // Σ_{k≥2} (-1)^k e^k / (k(k-1))
        let mut term = e * e;
        let mut sum = 0.0;
        for k in 2..12 {
            let kf = k as f64;
            sum += term / (kf * (kf - 1.0));
            term *= -e;
        }
        sum
    } else {
        r * r.ln() - r + 1.0
    }
}

impl Problem<'_> {
    fn potential(&self, mu: &[f64]) -> Vec<f64> {
        if self.kernel.is_zero() {
            vec![0.0; mu.len()]
        } else {
            convolve_values(self.kernel, mu)
        }
    }

    /// Thermal energy minus the constant `log(u)/θ`, `u = 1/T^d`. The
    /// entropy is summed as `Σ u φ(m/u)` with `φ(r) = r log r - r + 1 ≥ 0`,
    /// which keeps the comparison between nearby iterates free of
    /// cancellation even when `1/θ` is huge.
    fn shifted_energy(&self, mu: &[f64], h: &[f64]) -> f64 {
        let mut interaction = 0.0;
        let mut ent = 0.0;
        for i in 0..mu.len() {
            let m = mu[i];
            interaction += m * (h[i] + self.v[i]);
            ent += self.uniform * relative_entropy_density(m.max(DENSITY_FLOOR) / self.uniform);
        }
        (interaction + ent / self.theta) * self.dv
    }

    /// `normalize(exp(-θ(2h + V)))`.
    fn target(&self, h: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = h.iter().zip(self.v).map(|(h, v)| -self.theta * (2.0 * h + v)).collect();
        let top = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut t: Vec<f64> = a.iter().map(|x| (x - top).exp()).collect();
        let z = t.iter().sum::<f64>() * self.dv;
        t.iter_mut().for_each(|x| *x = (*x / z).max(DENSITY_FLOOR));
        t
    }

    /// `(c, residual)` of the Euler–Lagrange equation.
    fn euler_lagrange(&self, mu: &[f64], h: &[f64]) -> (f64, f64) {
        let lhs: Vec<f64> = (0..mu.len())
            .map(|i| 2.0 * h[i] + self.v[i] + mu[i].max(DENSITY_FLOOR).ln() / self.theta)
            .collect();
        let mass: f64 = mu.iter().sum();
        let c = mu.iter().zip(&lhs).map(|(m, l)| m * l).sum::<f64>() / mass;
        let res = mu
            .iter()
            .zip(&lhs)
            .filter(|(m, _)| **m > RESIDUAL_SUPPORT)
            .map(|(_, l)| (l - c).abs())
            .fold(0.0, f64::max);
        (c, res)
    }
}

/// Damped fixed-point solver for the thermal equilibrium measure.
///
/// Each step moves `μ ← (1-α)μ + α T(μ)` with `T(μ) = normalize(exp(-θ(2h^μ + V)))`.
/// Because the thermal energy is convex along the segment and `T(μ) - μ` is a
/// descent direction, halving α until the energy does not increase always
/// terminates.
pub fn solve_thermal_equilibrium(
    kernel: &KernelSpec,
    v: &SignedGridField,
    theta: f64,
    opts: &ThermalOptions,
) -> Result<ThermalSolution> {
    let report = validate_kernel(kernel);
    if !(report.symmetric && report.weakly_positive_definite) {
        return Err(Error::Validation(format!(
            "kernel rejected: symmetric={} (max asymmetry {:.3e}), weakly positive definite={} (min coefficient {:.3e})",
            report.symmetric,
            report.max_asymmetry,
            report.weakly_positive_definite,
            report.min_nonzero_coefficient
        )));
    }
    same_grid(kernel.geometry(), v.geometry())?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta must be positive and finite"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(invalid("damping must lie in (0, 1]"));
    }
    let geometry = *kernel.geometry();
    let prob = Problem {
        kernel,
        v: v.values(),
        theta,
        dv: geometry.cell_volume(),
        uniform: 1.0 / geometry.volume(),
    };

    let mut mu: Vec<f64> = match &opts.initial {
        Some(m) => {
            same_grid(m.geometry(), &geometry)?;
            m.normalized()?.values().iter().map(|x| x.max(DENSITY_FLOOR)).collect()
        }
        None => GridMeasure::uniform(geometry).values().to_vec(),
    };
    let mut h = prob.potential(&mu);
    let mut energy = prob.shifted_energy(&mu, &h);
    let mut alpha = opts.damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let t = prob.target(&h);
        let change = t.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let cand: Vec<f64> = mu
                .iter()
                .zip(&t)
                .map(|(m, t)| ((1.0 - alpha) * m + alpha * t).max(DENSITY_FLOOR))
                .collect();
            let hc = prob.potential(&cand);
            let ec = prob.shifted_energy(&cand, &hc);
            if ec <= energy + MONOTONICITY_SLACK {
                mu = cand;
                h = hc;
                energy = ec;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                // no admissible step at machine precision: the iterate is stationary
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }

    let (el_constant, residual) = prob.euler_lagrange(&mu, &h);
    let mu_theta = GridMeasure::new(geometry, mu)?.normalized()?;
    let sol = ThermalSolution {
        mu_theta,
        theta,
        el_constant,
        residual,
        iterations,
        energy: energy + prob.uniform.ln() / theta,
        damping: alpha,
    };
    if converged {
        Ok(sol)
    } else {
        Err(Error::ThermalNonConvergence(Box::new(sol)))
    }
}

/// `ζ_θ = -log(μ_θ) / θ`.
pub fn zeta_thermal(sol: &ThermalSolution) -> SignedGridField {
    let values = sol
        .mu_theta
        .values()
        .iter()
        .map(|m| -m.max(DENSITY_FLOOR).ln() / sol.theta)
        .collect();
    SignedGridField::from_raw(*sol.mu_theta.geometry(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::thermal_energy;
    use crate::torus::{Potential, TorusGeometry};

    fn geom(n: usize) -> TorusGeometry {
        TorusGeometry::new(1, 1.0, n).unwrap()
    }

    #[test]
    fn zero_kernel_gives_gibbs_density() {
        let g = geom(64);
        let v = Potential::Cosine { amplitude: 1.5, mode: 1 }.sample(&g).unwrap();
        let theta = 2.0;
        let sol = solve_thermal_equilibrium(&KernelSpec::zero(g), &v, theta, &Default::default())
            .unwrap();
        let w: Vec<f64> = v.values().iter().map(|x| (-theta * x).exp()).collect();
        let z: f64 = w.iter().sum::<f64>() * g.cell_volume();
        for (m, w) in sol.mu_theta.values().iter().zip(&w) {
            assert!((m - w / z).abs() < 1e-10);
        }
        let zeta = zeta_thermal(&sol);
        for (zv, vv) in zeta.values().iter().zip(v.values()) {
            assert!((zv - (vv + z.ln() / theta)).abs() < 1e-7);
        }
    }

    #[test]
    fn flat_potential_gives_uniform() {
        let g = geom(32);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let sol = solve_thermal_equilibrium(&k, &SignedGridField::zeros(g), 1.0, &Default::default())
            .unwrap();
        for m in sol.mu_theta.values() {
            assert!((m - 1.0).abs() < 1e-12);
        }
        assert!(zeta_thermal(&sol).sup_norm() < 1e-12);
    }

    #[test]
    fn interacting_solution_satisfies_euler_lagrange_and_is_local_min() {
        let g = geom(128);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let v = Potential::Cosine { amplitude: 1.0, mode: 1 }.sample(&g).unwrap();
        let opts = ThermalOptions::default();
        let sol = solve_thermal_equilibrium(&k, &v, 1.0, &opts).unwrap();
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        assert!(sol.residual <= 10.0 * opts.tol);
        assert!((sol.mu_theta.mass() - 1.0).abs() < 1e-10);
        assert!(sol.mu_theta.values().iter().all(|&m| m > 0.0));
        let e0 = thermal_energy(&sol.mu_theta, &k, &v, 1.0).unwrap();
        assert!((e0 - sol.energy).abs() < 1e-12);
        // perturbations along zero-mean directions never lower the energy
        for j in 1..=20 {
            let phi: Vec<f64> = (0..128)
                .map(|i| (2.0 * std::f64::consts::PI * (j as f64) * (i as f64 + 0.3 * j as f64) / 128.0).sin())
                .collect();
            let mean = phi.iter().sum::<f64>() / 128.0;
            for t in [-1e-3, 1e-3] {
                let vals: Vec<f64> = sol
                    .mu_theta
                    .values()
                    .iter()
                    .zip(&phi)
                    .map(|(m, p)| m + t * (p - mean))
                    .collect();
                let pert = GridMeasure::new(g, vals).unwrap();
                assert!(thermal_energy(&pert, &k, &v, 1.0).unwrap() >= e0 - 1e-14);
            }
        }
    }

    #[test]
    fn tiny_theta_is_nearly_uniform() {
        let g = geom(64);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let v = Potential::Cosine { amplitude: 1.0, mode: 1 }.sample(&g).unwrap();
        let sol = solve_thermal_equilibrium(&k, &v, 1e-6, &Default::default()).unwrap();
        for m in sol.mu_theta.values() {
            assert!((m - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn entropy_density_series_matches_direct_formula() {
        for r in [0.5, 0.95, 0.995, 1.0, 1.004, 1.2, 3.0] {
            let direct: f64 = r * f64::ln(r) - r + 1.0;
            assert!((relative_entropy_density(r) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_positive_definite_kernel() {
        let g = geom(16);
        let k = KernelSpec::cosine(g, -1.0).unwrap();
        let r = solve_thermal_equilibrium(&k, &SignedGridField::zeros(g), 1.0, &Default::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let g = geom(64);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let v = Potential::Cosine { amplitude: 1.0, mode: 1 }.sample(&g).unwrap();
        let opts = ThermalOptions { max_iterations: 2, ..Default::default() };
        match solve_thermal_equilibrium(&k, &v, 1.0, &opts) {
            Err(Error::ThermalNonConvergence(sol)) => {
                assert_eq!(sol.iterations, 2);
                assert!(sol.residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_roundtrip() {
        let g = geom(16);
        let sol = solve_thermal_equilibrium(
            &KernelSpec::zero(g),
            &SignedGridField::zeros(g),
            1.0,
            &Default::default(),
        )
        .unwrap();
        let mut csv = Vec::new();
        let mut side = Vec::new();
        sol.write(&mut csv, &mut side).unwrap();
        let back = ThermalSolution::read(&csv[..], std::str::from_utf8(&side).unwrap()).unwrap();
        assert_eq!(back.mu_theta, sol.mu_theta);
        assert_eq!(back.el_constant, sol.el_constant);
    }
}
