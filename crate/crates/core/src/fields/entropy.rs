use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{invalid, Error, Result};
use crate::pointconfig::{Domain, PointConfig};
use crate::sampling::substream;
use crate::torus::GridMeasure;

/// Specific relative entropy of `Π^μ` with respect to `Π^λ`:
/// `μ log(μ/λ) − μ + λ`.
pub fn poisson_relative_entropy_rate(mu: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("reference intensity must be positive, got {lambda}")));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("intensity must be nonnegative, got {mu}")));
    }
    let log_term = if mu == 0.0 { 0.0 } else { mu * (mu / lambda).ln() };
    Ok(log_term - mu + lambda)
}

/// Reference process for [`estimate_specific_entropy`].
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyReference {
    /// Homogeneous Poisson process of this intensity.
    Constant(f64),
    /// Intensity on the box, given as a measure on the torus of side
    /// `box_side` whose origin is the box's lower corner.
    Density(GridMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyOptions {
    pub bootstrap: usize,
    pub seed: u64,
    /// Counts at or above this value share one bin.
    pub truncation: usize,
    pub min_windows: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self { bootstrap: 200, seed: 0, truncation: 32, min_windows: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    /// Plug-in estimate per unit volume.
    pub value: f64,
    /// Bootstrap standard deviation.
    pub std_error: f64,
    /// First-order plug-in bias `Σ (occupied bins − 1) / (2 n)` per unit
    /// volume; reported, not subtracted.
    pub bias: f64,
    pub windows: usize,
    pub cells: usize,
}

fn reference_masses(reference: &EntropyReference, box_side: f64, cell_side: f64, k: usize, d: usize) -> Result<Vec<f64>> {
    let cells = k.pow(d as u32);
    match reference {
        EntropyReference::Constant(lambda) => {
            if !(*lambda > 0.0) {
                return Err(invalid("reference intensity must be positive"));
            }
            Ok(vec![lambda * cell_side.powi(d as i32); cells])
        }
        EntropyReference::Density(mu) => {
            let g = mu.geometry();
            if g.dim() != d || (g.side() - box_side).abs() > 1e-12 * box_side {
                return Err(invalid("reference density must live on the box"));
            }
            // midpoint rule on 8 subcells per axis
            let sub = 8usize;
            let h = cell_side / sub as f64;
            let mut out = vec![0.0; cells];
            let mut x = vec![0.0; d];
            for (c, m) in out.iter_mut().enumerate() {
                let mut cidx = vec![0; d];
                let mut t = c;
                for a in (0..d).rev() {
                    cidx[a] = t % k;
                    t /= k;
                }
                for s in 0..sub.pow(d as u32) {
                    let mut t = s;
                    for a in (0..d).rev() {
                        x[a] = cidx[a] as f64 * cell_side + ((t % sub) as f64 + 0.5) * h;
                        t /= sub;
                    }
                    *m += mu.values()[g.cell_of(&x)] * h.powi(d as i32);
                }
            }
            Ok(out)
        }
    }
}

fn kl_sum(hist: &[Vec<u32>], reference: &[Vec<f64>], n: f64) -> f64 {
    hist.iter()
        .zip(reference)
        .map(|(h, q)| {
            h.iter()
                .zip(q)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &qk)| {
                    let p = c as f64 / n;
                    if qk > 0.0 { p * (p / qk).ln() } else { f64::INFINITY }
                })
                .sum::<f64>()
        })
        .sum()
}

/// Plug-in estimate of the specific relative entropy of the windows' law
/// against a Poisson reference, restricted to the centred box of side
/// `box_side` split into cells of side `cell_side`. Cells are treated as
/// independent, so the per-cell count laws are compared with Poisson laws
/// of the reference cell masses.
pub fn estimate_specific_entropy(
    windows: &[PointConfig],
    reference: &EntropyReference,
    box_side: f64,
    cell_side: f64,
) -> Result<EntropyEstimate> {
    estimate_specific_entropy_with(windows, reference, box_side, cell_side, &EntropyOptions::default())
}

pub fn estimate_specific_entropy_with(
    windows: &[PointConfig],
    reference: &EntropyReference,
    box_side: f64,
    cell_side: f64,
    opts: &EntropyOptions,
) -> Result<EntropyEstimate> {
    if windows.len() < opts.min_windows {
        return Err(invalid(format!(
            "{} windows supplied, at least {} are needed for a meaningful plug-in estimate",
            windows.len(),
            opts.min_windows
        )));
    }
    if !(cell_side > 0.0 && box_side >= cell_side) {
        return Err(invalid("need 0 < cell_side <= box_side"));
    }
    let ratio = box_side / cell_side;
    let k = ratio.round() as usize;
    if (ratio - k as f64).abs() > 1e-9 * ratio {
        return Err(invalid("cell_side must divide box_side"));
    }
    let d = windows[0].dim();
    for w in windows {
        match w.domain() {
            Domain::Box { lower, upper } if w.dim() == d => {
                if lower.iter().zip(upper).any(|(l, u)| -l < box_side / 2.0 - 1e-12 || *u < box_side / 2.0 - 1e-12) {
                    return Err(invalid("box is larger than a window"));
                }
            }
            _ => return Err(invalid("windows must be boxes of a common dimension")),
        }
    }
    let cells = k.pow(d as u32);
    let trunc = opts.truncation.max(1);
    let masses = reference_masses(reference, box_side, cell_side, k, d)?;
    let reference_law: Vec<Vec<f64>> = masses
        .iter()
        .map(|&m| {
            if m <= 0.0 {
                let mut q = vec![0.0; trunc + 1];
                q[0] = 1.0;
                return q;
            }
            let law = Poisson::new(m).expect("positive mass");
            let mut q: Vec<f64> = (0..trunc).map(|j| law.pmf(j as u64)).collect();
            q.push(law.sf(trunc as u64 - 1));
            q
        })
        .collect();

    let counts: Vec<Vec<u32>> = windows
        .par_iter()
        .map(|w| {
            let mut c = vec![0u32; cells];
            for p in w.points() {
                let mut idx = 0;
                let mut inside = true;
                for &x in p {
                    let u = (x + box_side / 2.0) / cell_side;
                    inside &= u >= 0.0 && u < k as f64;
                    idx = idx * k + (u.max(0.0) as usize).min(k - 1);
                }
                if inside {
                    c[idx] += 1;
                }
            }
            c
        })
        .collect();
    let histogram = |sel: &mut dyn Iterator<Item = usize>| {
        let mut h = vec![vec![0u32; trunc + 1]; cells];
        for wi in sel {
            for (c, &m) in counts[wi].iter().enumerate() {
                h[c][(m as usize).min(trunc)] += 1;
            }
        }
        h
    };
    let n = windows.len() as f64;
    let volume = box_side.powi(d as i32);
    let hist = histogram(&mut (0..windows.len()));
    let value = kl_sum(&hist, &reference_law, n) / volume;
    let occupied: usize = hist.iter().map(|h| h.iter().filter(|&&c| c > 0).count().saturating_sub(1)).sum();
    let bias = occupied as f64 / (2.0 * n) / volume;

    let reps: Vec<f64> = (0..opts.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, b as u64);
            let len = windows.len();
            let h = histogram(&mut (0..len).map(|_| rng.random_range(0..len)));
            kl_sum(&h, &reference_law, n) / volume
        })
        .collect();
    let std_error = if reps.len() > 1 { crate::stats::variance(&reps).sqrt() } else { 0.0 };
    Ok(EntropyEstimate { value, std_error, bias, windows: windows.len(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_from_seed, sample_poisson_box};
    use crate::torus::TorusGeometry;

    #[test]
    fn closed_form_values() {
        assert_eq!(poisson_relative_entropy_rate(1.5, 1.5).unwrap(), 0.0);
        let a = poisson_relative_entropy_rate(2.0, 1.0).unwrap();
        assert!((a - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        let b = poisson_relative_entropy_rate(1.0, 2.0).unwrap();
        assert!((b - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert_eq!(poisson_relative_entropy_rate(0.0, 2.0).unwrap(), 2.0);
        assert!(poisson_relative_entropy_rate(1.0, 0.0).is_err());
    }

    fn windows(lambda: f64, count: usize, seed: u64) -> Vec<PointConfig> {
        let mut rng = rng_from_seed(seed);
        let dom = Domain::cube(1, -2.0, 2.0).unwrap();
        (0..count).map(|_| sample_poisson_box(lambda, &dom, &mut rng).unwrap()).collect()
    }

    #[test]
    fn reference_process_has_near_zero_entropy() {
        let w = windows(1.0, 10_000, 1);
        let e = estimate_specific_entropy(&w, &EntropyReference::Constant(1.0), 4.0, 0.5).unwrap();
        assert!(e.value >= 0.0 && e.value <= 0.02, "{e:?}");
    }

    #[test]
    fn thin_process_against_dense_reference() {
        let w = windows(1.0, 10_000, 2);
        let e = estimate_specific_entropy(&w, &EntropyReference::Constant(2.0), 4.0, 0.5).unwrap();
        let exact = poisson_relative_entropy_rate(1.0, 2.0).unwrap();
        assert!((e.value - exact).abs() < 0.15 * exact, "{e:?}");
        assert!(e.std_error > 0.0 && e.std_error < 0.05);
    }

    #[test]
    fn density_reference_agrees_with_constant() {
        let w = windows(2.0, 500, 3);
        let g = TorusGeometry::new(1, 4.0, 16).unwrap();
        let dens = GridMeasure::from_fn(g, |_| 1.0).unwrap();
        let a = estimate_specific_entropy(&w, &EntropyReference::Constant(1.0), 4.0, 0.5).unwrap();
        let b = estimate_specific_entropy(&w, &EntropyReference::Density(dens), 4.0, 0.5).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn refuses_bad_inputs() {
        let w = windows(1.0, 99, 4);
        assert!(estimate_specific_entropy(&w, &EntropyReference::Constant(1.0), 4.0, 0.5).is_err());
        let w = windows(1.0, 100, 4);
        assert!(estimate_specific_entropy(&w, &EntropyReference::Constant(1.0), 4.0, 0.3).is_err());
        assert!(estimate_specific_entropy(&w, &EntropyReference::Constant(1.0), 8.0, 0.5).is_err());
    }
}
