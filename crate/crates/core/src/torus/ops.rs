use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, shape, Result};
use crate::torus::{KernelSpec, SignedGridField, TorusGeometry};

/// Nonzero-mode Fourier coefficients above `-POSITIVITY_TOLERANCE` count as
/// nonnegative.
pub const POSITIVITY_TOLERANCE: f64 = 1e-9;

/// Circular convolution `h_i = Σ_j g(x_i - x_j) f_j Δ`, computed spectrally.
pub fn convolve(kernel: &KernelSpec, field: &SignedGridField) -> Result<SignedGridField> {
    if kernel.geometry() != field.geometry() {
        return Err(shape("kernel and field live on different grids"));
    }
    Ok(SignedGridField::from_raw(*field.geometry(), convolve_values(kernel, field.values())))
}

pub(crate) fn convolve_values(kernel: &KernelSpec, values: &[f64]) -> Vec<f64> {
    let fft = kernel.fft();
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut data);
    for (z, g) in data.iter_mut().zip(kernel.spectrum()) {
        *z *= g;
    }
    fft.inverse(&mut data);
    data.into_iter().map(|z| z.re).collect()
}

/// `G(f1, f2) = ∬ g(x-y) f1(x) f2(y)`; with `f1 = f2` this is the energy `E(f)`.
pub fn interaction_energy(
    kernel: &KernelSpec,
    f1: &SignedGridField,
    f2: &SignedGridField,
) -> Result<f64> {
    if f1.geometry() != f2.geometry() {
        return Err(shape("fields live on different grids"));
    }
    let h = convolve(kernel, f2)?;
    f1.inner(&h)
}

/// Structural checks on a kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub max_asymmetry: f64,
    pub integrable: bool,
    pub integral: f64,
    pub weakly_positive_definite: bool,
    /// Smallest real part over the nonzero Fourier modes.
    pub min_nonzero_coefficient: f64,
    /// Always true on a finite grid: `E(μ) ≥ min_k ĝ_k Σ|μ̂_k|² / T^d`.
    pub bounded_below_energy: bool,
}

impl ValidationReport {
    /// Symmetry, integrability and weak positive definiteness all hold.
    pub fn passes(&self) -> bool {
        self.symmetric && self.integrable && self.weakly_positive_definite
    }
}

pub fn validate_kernel(kernel: &KernelSpec) -> ValidationReport {
    let g = kernel.geometry();
    let table = kernel.table();
    let scale = table.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let max_asymmetry = (0..g.len())
        .map(|i| (table[i] - table[g.negate(i)]).abs())
        .fold(0.0, f64::max);
    let integral = kernel.integral();
    let min_nonzero_coefficient = kernel.spectrum()[1..]
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    ValidationReport {
        symmetric: max_asymmetry <= 1e-9 * scale,
        max_asymmetry,
        integrable: integral.is_finite() && table.iter().all(|v| v.is_finite()),
        integral,
        weakly_positive_definite: min_nonzero_coefficient >= -POSITIVITY_TOLERANCE,
        min_nonzero_coefficient,
        bounded_below_energy: true,
    }
}

/// Length of `[c - h/2, c + h/2] ∩ [-e/2, e/2]` on the circle of length `t`.
fn overlap(c: f64, h: f64, e: f64, t: f64) -> f64 {
    [c - t, c, c + t]
        .iter()
        .map(|c| ((c + h / 2.0).min(e / 2.0) - (c - h / 2.0).max(-e / 2.0)).max(0.0))
        .sum()
}

/// `∫_{□_ε} g` over the cube of side `eps` centred at the origin, with cells
/// cut by the cube weighted by their overlap.
pub fn kernel_origin_integral(kernel: &KernelSpec, eps: f64) -> Result<f64> {
    let g = kernel.geometry();
    if !(eps > 0.0 && eps <= g.side() * (1.0 + 1e-12)) {
        return Err(invalid(format!("eps={eps} outside (0, T]")));
    }
    let eps = eps.min(g.side());
    let h = g.spacing();
    let mut off = vec![0i64; g.dim()];
    let mut total = 0.0;
    for (i, v) in kernel.table().iter().enumerate() {
        g.signed_offset(i, &mut off);
        let w: f64 = off.iter().map(|&o| overlap(o as f64 * h, h, eps, g.side())).product();
        if w > 0.0 {
            total += w * v;
        }
    }
    Ok(total)
}

fn offset_norm(off: &[i64], h: f64) -> f64 {
    off.iter().map(|&o| (o as f64 * h).powi(2)).sum::<f64>().sqrt()
}

/// `Ψ(α, β) = max |g(x) - g(y)|` over node pairs with `|x - y| < β` and
/// `|x|, |y| > α` (torus norms). Zero when no pair qualifies.
pub fn kernel_modulus(kernel: &KernelSpec, alpha: f64, beta: f64) -> f64 {
    let g = kernel.geometry();
    let h = g.spacing();
    let n = g.resolution() as i64;
    let d = g.dim();
    let reach = ((beta / h).ceil() as i64).min(n / 2);
    if beta <= 0.0 || reach == 0 {
        return 0.0;
    }
    // displacement multi-indices with 0 < |δ| < β
    let mut deltas: Vec<Vec<i64>> = Vec::new();
    let width = (2 * reach + 1) as usize;
    let mut idx = vec![0usize; d];
    loop {
        let delta: Vec<i64> = idx.iter().map(|&i| i as i64 - reach).collect();
        let r = offset_norm(&delta, h);
        if r > 0.0 && r < beta {
            deltas.push(delta);
        }
        if !crate::torus::quadrature::advance(&mut idx, width) {
            break;
        }
    }
    let table = kernel.table();
    let mut off = vec![0i64; d];
    let mut best = 0.0f64;
    let mut target = vec![0usize; d];
    let mut base = vec![0usize; d];
    for (i, gi) in table.iter().enumerate() {
        g.signed_offset(i, &mut off);
        if offset_norm(&off, h) <= alpha {
            continue;
        }
        g.unflatten(i, &mut base);
        for delta in &deltas {
            for a in 0..d {
                target[a] = (base[a] as i64 + delta[a]).rem_euclid(n) as usize;
            }
            let j = g.flatten(&target);
            if j == i {
                continue;
            }
            g.signed_offset(j, &mut off);
            if offset_norm(&off, h) <= alpha {
                continue;
            }
            best = best.max((gi - table[j]).abs());
        }
    }
    best
}

/// Torus geometry of a kernel must match a field's.
pub(crate) fn same_grid(a: &TorusGeometry, b: &TorusGeometry) -> Result<()> {
    if a != b {
        return Err(shape("inputs live on different grids"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{min_image, torus_distance, GridMeasure};
    use std::f64::consts::PI;

    fn g1(n: usize) -> TorusGeometry {
        TorusGeometry::new(1, 1.0, n).unwrap()
    }

    #[test]
    fn cosine_convolution_halves_amplitude() {
        let g = g1(32);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let f = SignedGridField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let h = convolve(&k, &f).unwrap();
        for (i, v) in h.values().iter().enumerate() {
            assert!((v - 0.5 * (2.0 * PI * i as f64 / 32.0).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_measure_gives_constant_potential() {
        let g = TorusGeometry::new(2, 1.7, 8).unwrap();
        let k = KernelSpec::from_fn(g, |x| {
            (min_image(x[0], 1.7).abs() + min_image(x[1], 1.7).abs()).exp()
        })
        .unwrap();
        let mu = GridMeasure::uniform(g).as_signed();
        let h = convolve(&k, &mu).unwrap();
        let expect = k.integral() / g.volume();
        for v in h.values() {
            assert!((v - expect).abs() < 1e-12 * expect.abs());
        }
        let e = interaction_energy(&k, &mu, &mu).unwrap();
        assert!((e - expect).abs() < 1e-12 * expect.abs());
        let z = SignedGridField::zeros(g);
        assert_eq!(interaction_energy(&k, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn geometry_mismatch_is_a_shape_error() {
        let k = KernelSpec::zero(g1(8));
        assert!(convolve(&k, &SignedGridField::zeros(g1(16))).is_err());
    }

    #[test]
    fn validation_examples() {
        let g = g1(64);
        let r = validate_kernel(&KernelSpec::cosine(g, 1.0).unwrap());
        assert!(r.symmetric && r.weakly_positive_definite && r.passes());
        assert!((r.min_nonzero_coefficient).abs() < 1e-12);
        let sin = KernelSpec::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        assert!(!validate_kernel(&sin).symmetric);
        let neg = validate_kernel(&KernelSpec::cosine(g, -1.0).unwrap());
        assert!(!neg.weakly_positive_definite);
        assert!((neg.min_nonzero_coefficient + 0.5).abs() < 1e-12);
    }

    #[test]
    fn origin_integral_examples() {
        let g = g1(128);
        let c = KernelSpec::from_fn(g, |_| 2.5).unwrap();
        assert!((kernel_origin_integral(&c, 0.3).unwrap() - 0.75).abs() < 1e-12);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        assert!(kernel_origin_integral(&k, 1.0).unwrap().abs() < 1e-13);
        let half = kernel_origin_integral(&k, 0.5).unwrap();
        // fine Riemann sum oracle over [-1/4, 1/4]
        let m = 200_000;
        let riemann: f64 = (0..m)
            .map(|i| (2.0 * PI * (-0.25 + (i as f64 + 0.5) * 0.5 / m as f64)).cos() * 0.5 / m as f64)
            .sum();
        assert!((riemann - 1.0 / PI).abs() < 1e-9);
        assert!((half - riemann).abs() < 1e-4, "{half} vs {riemann}");
        assert!(kernel_origin_integral(&k, 0.0).is_err());
        assert!(kernel_origin_integral(&k, 1.5).is_err());
    }

    #[test]
    fn modulus_matches_pair_scan() {
        let g = g1(64);
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let (alpha, beta) = (0.1, 0.05);
        let mut best = 0.0f64;
        for i in 0..64 {
            for j in 0..64 {
                let (x, y) = (g.node(i), g.node(j));
                if i != j
                    && torus_distance(&x, &y, 1.0) < beta
                    && torus_distance(&x, &[0.0], 1.0) > alpha
                    && torus_distance(&y, &[0.0], 1.0) > alpha
                {
                    best = best.max((k.table()[i] - k.table()[j]).abs());
                }
            }
        }
        assert!(best > 0.0);
        assert_eq!(kernel_modulus(&k, alpha, beta), best);
        assert_eq!(kernel_modulus(&k, alpha, 0.5 / 64.0), 0.0);
        let c = KernelSpec::from_fn(g, |_| 1.0).unwrap();
        assert_eq!(kernel_modulus(&c, 0.1, 0.3), 0.0);
    }
}
