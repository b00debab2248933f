use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{solve_thermal_equilibrium, thermal_energy, ThermalOptions};
use crate::error::{invalid, Result};
use crate::sampling::{BetaMode, GibbsChain, GibbsSpec, SamplerConfig, substream};
use crate::stats::{batch_means_error, mean};
use crate::torus::{min_image, quadrature::advance, KernelSpec, Potential};

/// How `log Z_{N,β}` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Tensor trapezoid quadrature over `T^{dN}`, falling back to
    /// thermodynamic integration above the point cap.
    Direct,
    ThermodynamicIntegration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOptions {
    pub mode: PartitionMode,
    /// Largest number of quadrature nodes `q^{dN}`.
    pub quadrature_cap: usize,
    /// Fewer nodes per axis than this forces integration mode.
    pub min_quadrature_points: usize,
    /// Inverse temperatures `β' = β k / levels`, `k = 0..=levels`.
    pub levels: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub thermal: ThermalOptions,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            mode: PartitionMode::Direct,
            quadrature_cap: 10_000_000,
            min_quadrature_points: 16,
            levels: 16,
            burn_in: 500,
            samples: 4000,
            seed: 0,
            thermal: ThermalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionEstimate {
    pub n: usize,
    pub mode: PartitionMode,
    pub log_z: f64,
    pub log_k: f64,
    pub log_k_over_n: f64,
    /// Zero in direct mode.
    pub std_error: f64,
}

fn direct_log_z(kernel: &KernelSpec, potential: &Potential, n: usize, beta: f64, q: usize) -> f64 {
    let geom = kernel.geometry();
    let (d, side) = (geom.dim(), geom.side());
    let h = side / q as f64;
    let sites = q.pow(d as u32);
    let coords = |s: usize| {
        let mut x = vec![0.0; d];
        let mut t = s;
        for a in (0..d).rev() {
            x[a] = (t % q) as f64 * h;
            t /= q;
        }
        x
    };
    let points: Vec<Vec<f64>> = (0..sites).map(coords).collect();
    let v: Vec<f64> = points.iter().map(|x| potential.eval(side, x)).collect();
    // pair table over site differences
    let mut pair = vec![0.0; sites * sites];
    let mut diff = vec![0.0; d];
    for a in 0..sites {
        for b in 0..sites {
            for k in 0..d {
                diff[k] = min_image(points[a][k] - points[b][k], side);
            }
            pair[a * sites + b] = kernel.eval_pair(&diff);
        }
    }
    let nf = n as f64;
    let energy = |idx: &[usize]| {
        let mut e = 0.0;
        for i in 0..n {
            e += nf * v[idx[i]];
            for j in i + 1..n {
                e += 2.0 * pair[idx[i] * sites + idx[j]];
            }
        }
        e
    };
    // log-sum-exp per first particle site, then combined
    let partial: Vec<(f64, f64)> = (0..sites)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; n];
            idx[0] = first;
            let mut m = f64::NEG_INFINITY;
            let mut s = 0.0;
            loop {
                let x = -beta * energy(&idx);
                if x > m {
                    s = s * (m - x).exp() + 1.0;
                    m = x;
                } else {
                    s += (x - m).exp();
                }
                if n == 1 || !advance(&mut idx[1..], sites) {
                    break;
                }
            }
            (m, s)
        })
        .collect();
    let m = partial.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = partial.iter().map(|(pm, ps)| ps * (pm - m).exp()).sum();
    m + s.ln() + (n * d) as f64 * h.ln()
}

fn ti_log_z(
    kernel: &KernelSpec,
    potential: &Potential,
    n: usize,
    beta: f64,
    opts: &PartitionOptions,
) -> Result<(f64, f64)> {
    let levels = opts.levels.max(1);
    let spec = GibbsSpec {
        kernel: kernel.clone(),
        potential: potential.clone(),
        n_particles: n,
        beta_mode: BetaMode::Explicit { beta: 0.0 },
    };
    let stats: Vec<(f64, f64)> = (0..=levels)
        .into_par_iter()
        .map(|k| {
            let b = beta * k as f64 / levels as f64;
            let mut s = spec.clone();
            s.beta_mode = BetaMode::Explicit { beta: b };
            let cfg = SamplerConfig { burn_in: opts.burn_in, thin: 1, ..Default::default() };
            let rng = substream(opts.seed, (n * 1000 + k) as u64);
            let mut chain = GibbsChain::new(s, cfg, None, rng)?;
            let energies: Vec<f64> = (0..opts.samples).map(|_| chain.next_sample().energy).collect();
            Ok((mean(&energies), batch_means_error(&energies, 20)))
        })
        .collect::<Result<Vec<_>>>()?;
    let db = beta / levels as f64;
    let mut integral = 0.0;
    let mut var = 0.0;
    for (k, (m, se)) in stats.iter().enumerate() {
        let w = if k == 0 || k == levels { 0.5 * db } else { db };
        integral += w * m;
        var += (w * se).powi(2);
    }
    let volume = kernel.geometry().volume();
    Ok((n as f64 * volume.ln() - integral, var.sqrt()))
}

/// `log K_{N,β} / N` with `K_{N,β} = Z_{N,β} exp(N² β E_V^θ(μ_θ))` and
/// `β = θ / N`, for each `N` in `n_list`.
pub fn estimate_next_order_partition(
    kernel: &KernelSpec,
    potential: &Potential,
    theta: f64,
    n_list: &[usize],
    opts: &PartitionOptions,
) -> Result<Vec<PartitionEstimate>> {
    if !(theta > 0.0) {
        return Err(invalid("theta must be positive"));
    }
    let geom = kernel.geometry();
    let v_grid = potential.sample(geom)?;
    let sol = solve_thermal_equilibrium(kernel, &v_grid, theta, &opts.thermal)?;
    let e_theta = thermal_energy(&sol.mu_theta, kernel, &v_grid, theta)?;
    let d = geom.dim();
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(invalid("N must be at least 1"));
            }
            let beta = theta / n as f64;
            let q = ((opts.quadrature_cap as f64).powf(1.0 / (d * n) as f64).floor() as usize)
                .min(geom.resolution());
            let (mode, log_z, std_error) =
                if opts.mode == PartitionMode::Direct && q >= opts.min_quadrature_points {
                    (PartitionMode::Direct, direct_log_z(kernel, potential, n, beta, q), 0.0)
                } else {
                    let (lz, se) = ti_log_z(kernel, potential, n, beta, opts)?;
                    (PartitionMode::ThermodynamicIntegration, lz, se)
                };
            let log_k = log_z + (n * n) as f64 * beta * e_theta;
            Ok(PartitionEstimate { n, mode, log_z, log_k, log_k_over_n: log_k / n as f64, std_error })
        })
        .collect()
}
