use rustfft::num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::torus::quadrature::{advance, gauss_legendre};
use crate::torus::FftNd;

/// Cube `[lower, upper]^d` in `R^d` divided into `resolution^d` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclideanWindow {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub resolution: usize,
}

impl EuclideanWindow {
    pub fn new(dim: usize, lower: f64, upper: f64, resolution: usize) -> Result<Self> {
        if dim == 0 || resolution < 2 || !(upper > lower) {
            return Err(invalid("window needs dim ≥ 1, resolution ≥ 2 and upper > lower"));
        }
        Ok(Self { dim, lower, upper, resolution })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.resolution as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Centre of cell `flat` (row-major, first axis slowest).
    pub fn center(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            let i = flat % self.resolution;
            flat /= self.resolution;
            x[a] = self.lower + (i as f64 + 0.5) * self.spacing();
        }
        x
    }

    fn on_boundary(&self, mut flat: usize) -> bool {
        for _ in 0..self.dim {
            let i = flat % self.resolution;
            flat /= self.resolution;
            if i == 0 || i + 1 == self.resolution {
                return true;
            }
        }
        false
    }
}

/// Pair interactions on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EuclideanKernel {
    /// `-log|x|`.
    Log,
    /// `|x|^{-(d-2s)}`.
    Riesz { s: f64 },
    /// Contact interaction whose energy is `∫ μ²`.
    Contact,
}

impl EuclideanKernel {
    fn profile(&self, dim: usize, r: f64) -> f64 {
        match self {
            EuclideanKernel::Log => -r.ln(),
            EuclideanKernel::Riesz { s } => r.powf(-(dim as f64 - 2.0 * s)),
            EuclideanKernel::Contact => 0.0,
        }
    }

    /// Mean of `g(x - y)` for `x, y` independent and uniform in one cell of side `h`.
    fn cell_pair_average(&self, dim: usize, h: f64) -> f64 {
        match *self {
            EuclideanKernel::Contact => 1.0 / h.powi(dim as i32),
            EuclideanKernel::Log if dim == 1 => 1.5 - h.ln(),
            EuclideanKernel::Riesz { s } if dim == 1 => {
                let p = 1.0 - 2.0 * s;
                2.0 * h.powf(-p) / ((1.0 - p) * (2.0 - p))
            }
            EuclideanKernel::Log => -h.ln() + triangle_average(dim, |r| -r.ln()),
            EuclideanKernel::Riesz { s } => {
                let p = dim as f64 - 2.0 * s;
                h.powf(-p) * triangle_average(dim, |r| r.powf(-p))
            }
        }
    }
}

/// `∫_{[-1,1]^d} f(|z|) Π_a (1 - |z_a|) dz` for radial `f` with an
/// integrable singularity at 0, by Gauss rules on dyadic shells.
fn triangle_average(dim: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (gx, gw) = gauss_legendre(10);
    let mut total = 0.0;
    let mut q = vec![0usize; dim];
    let mut corner = vec![0usize; dim];
    for level in 0..60 {
        let outer = 0.5f64.powi(level);
        let half = outer / 2.0;
        corner.iter_mut().for_each(|c| *c = 0);
        loop {
            // subcubes of [0, outer]^d except the innermost one
            if corner.iter().any(|&c| c == 1) {
                q.iter_mut().for_each(|v| *v = 0);
                loop {
                    let mut w = 1.0;
                    let mut r2 = 0.0;
                    for a in 0..dim {
                        let z = corner[a] as f64 * half + 0.5 * half * (gx[q[a]] + 1.0);
                        w *= 0.5 * half * gw[q[a]] * (1.0 - z);
                        r2 += z * z;
                    }
                    total += w * f(r2.sqrt());
                    if !advance(&mut q, gx.len()) {
                        break;
                    }
                }
            }
            if !advance(&mut corner, 2) {
                break;
            }
        }
    }
    total * 2f64.powi(dim as i32)
}

/// Settings for [`solve_equilibrium_measure`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOptions {
    /// Target complementarity residual.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: 200_000 }
    }
}

/// Minimizer of `E(μ) + ∫ V dμ` over probability measures on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub window: EuclideanWindow,
    /// Density per unit volume in every cell.
    pub density: Vec<f64>,
    /// Cells with density above `1e-8` times the total mass.
    pub support_mask: Vec<bool>,
    /// `c` with `h + V/2 + c = 0` on the support.
    pub obstacle_constant: f64,
    /// `ζ = h + V/2 + c` per cell (`+∞` where `V` is infinite).
    pub zeta: Vec<f64>,
    /// Largest violation of the obstacle conditions.
    pub residual: f64,
    /// `E_V(μ_V)`.
    pub energy: f64,
    pub iterations: usize,
    /// The support reaches the outermost layer of cells.
    pub touches_boundary: bool,
}

impl EquilibriumSolution {
    pub fn support_volume(&self) -> f64 {
        self.support_mask.iter().filter(|&&s| s).count() as f64 * self.window.cell_volume()
    }
}

struct ToeplitzOperator {
    n: usize,
    dim: usize,
    fft: FftNd,
    spectrum: Vec<Complex64>,
    diagonal_only: Option<f64>,
}

impl ToeplitzOperator {
    fn new(window: &EuclideanWindow, kernel: EuclideanKernel) -> Self {
        let n = window.resolution;
        let d = window.dim;
        let h = window.spacing();
        let m = 2 * n;
        let fft = FftNd::new(&vec![m; d]);
        if kernel == EuclideanKernel::Contact {
            return Self {
                n,
                dim: d,
                fft,
                spectrum: vec![],
                diagonal_only: Some(kernel.cell_pair_average(d, h)),
            };
        }
        let mut table = vec![0.0; m.pow(d as u32)];
        let mut idx = vec![0usize; d];
        loop {
            let offs: Vec<i64> =
                idx.iter().map(|&i| if i < n { i as i64 } else { i as i64 - m as i64 }).collect();
            let valid = offs.iter().all(|o| o.unsigned_abs() < n as u64);
            if valid {
                let r = offs.iter().map(|&o| (o as f64 * h).powi(2)).sum::<f64>().sqrt();
                let flat = idx.iter().fold(0, |acc, &i| acc * m + i);
                table[flat] = if r == 0.0 {
                    kernel.cell_pair_average(d, h)
                } else {
                    kernel.profile(d, r)
                };
            }
            if !advance(&mut idx, m) {
                break;
            }
        }
        let spectrum = fft.forward_real(&table);
        Self { n, dim: d, fft, spectrum, diagonal_only: None }
    }

    /// `(G p)_i = Σ_j g(x_i - x_j) p_j` for cell masses `p`.
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        if let Some(c) = self.diagonal_only {
            return p.iter().map(|x| c * x).collect();
        }
        let m = 2 * self.n;
        let mut buf = vec![Complex64::default(); m.pow(self.dim as u32)];
        let mut idx = vec![0usize; self.dim];
        for &v in p {
            let flat = idx.iter().fold(0, |acc, &i| acc * m + i);
            buf[flat] = Complex64::new(v, 0.0);
            advance(&mut idx, self.n);
        }
        self.fft.forward(&mut buf);
        for (z, s) in buf.iter_mut().zip(&self.spectrum) {
            *z *= s;
        }
        self.fft.inverse(&mut buf);
        let mut out = Vec::with_capacity(p.len());
        idx.iter_mut().for_each(|i| *i = 0);
        for _ in 0..p.len() {
            let flat = idx.iter().fold(0, |acc, &i| acc * m + i);
            out.push(buf[flat].re);
            advance(&mut idx, self.n);
        }
        out
    }
}

/// Euclidean projection of `y` onto the probability simplex over `allowed`.
fn project_simplex(y: &mut [f64], allowed: &[usize]) {
    let mut vals: Vec<f64> = allowed.iter().map(|&i| y[i]).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, v) in vals.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    for &i in allowed {
        y[i] = (y[i] - shift).max(0.0);
    }
}

/// Classical equilibrium measure on a window by accelerated projected
/// gradient on the simplex of cell masses. Cells where `potential` is
/// infinite are excluded.
pub fn solve_equilibrium_measure(
    window: &EuclideanWindow,
    kernel: EuclideanKernel,
    potential: impl Fn(&[f64]) -> f64,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumSolution> {
    if let EuclideanKernel::Riesz { s } = kernel {
        if !(s > 0.0 && 2.0 * s < window.dim as f64) {
            return Err(invalid("Riesz exponent needs 0 < s < d/2"));
        }
    }
    let len = window.len();
    let v: Vec<f64> = (0..len).map(|i| potential(&window.center(i))).collect();
    if v.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
        return Err(invalid("potential must be finite or +∞"));
    }
    let allowed: Vec<usize> = (0..len).filter(|&i| v[i].is_finite()).collect();
    if allowed.is_empty() {
        return Err(invalid("potential is infinite on the whole window"));
    }
    let op = ToeplitzOperator::new(window, kernel);
    let vv: Vec<f64> = v.iter().map(|x| if x.is_finite() { *x } else { 0.0 }).collect();

    // Lipschitz constant of the gradient 2Gp + V, by power iteration
    let mut z: Vec<f64> = (0..len).map(|i| 1.0 + ((i * 7919) % 13) as f64 * 0.01).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let gz = op.apply(&z);
        let norm = gz.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm / z.iter().map(|x| x * x).sum::<f64>().sqrt();
        z = gz.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (2.0 * lambda * 1.05).max(1e-300);

    let mut p = vec![0.0; len];
    for &i in &allowed {
        p[i] = 1.0 / allowed.len() as f64;
    }
    let mut y = p.clone();
    let mut t: f64 = 1.0;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut state = evaluate(window, &op, &p, &v, &vv);
    while iterations < opts.max_iterations {
        iterations += 1;
        let gy = op.apply(&y);
        let mut next: Vec<f64> =
            (0..len).map(|i| y[i] - step * (2.0 * gy[i] + vv[i])).collect();
        project_simplex(&mut next, &allowed);
        for i in 0..len {
            if !v[i].is_finite() {
                next[i] = 0.0;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // gradient restart keeps the momentum from overshooting
        let progress: f64 = (0..len).map(|i| (2.0 * gy[i] + vv[i]) * (next[i] - p[i])).sum();
        if progress > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            y = (0..len).map(|i| next[i] + beta * (next[i] - p[i])).collect();
            t = t_next;
        }
        p = next;
        if iterations % 25 == 0 || iterations == opts.max_iterations {
            state = evaluate(window, &op, &p, &v, &vv);
            residual = state.residual;
            if residual <= opts.tol {
                break;
            }
        }
    }
    if residual > opts.tol {
        return Err(Error::NonConvergence { iterations, residual });
    }
    let dv = window.cell_volume();
    let touches_boundary = (0..len).any(|i| state.support[i] && window.on_boundary(i));
    Ok(EquilibriumSolution {
        window: *window,
        density: p.iter().map(|m| m / dv).collect(),
        support_mask: state.support,
        obstacle_constant: state.constant,
        zeta: state.zeta,
        residual,
        energy: state.energy,
        iterations,
        touches_boundary,
    })
}

struct ObstacleState {
    support: Vec<bool>,
    constant: f64,
    zeta: Vec<f64>,
    residual: f64,
    energy: f64,
}

fn evaluate(
    window: &EuclideanWindow,
    op: &ToeplitzOperator,
    p: &[f64],
    v: &[f64],
    vv: &[f64],
) -> ObstacleState {
    let dv = window.cell_volume();
    let h = op.apply(p);
    let support: Vec<bool> = p.iter().map(|m| m / dv > 1e-8).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p.len() {
        if support[i] {
            num += p[i] * (h[i] + vv[i] / 2.0);
            den += p[i];
        }
    }
    let constant = -num / den;
    let zeta: Vec<f64> = (0..p.len())
        .map(|i| if v[i].is_finite() { h[i] + v[i] / 2.0 + constant } else { f64::INFINITY })
        .collect();
    let residual = (0..p.len())
        .map(|i| if support[i] { zeta[i].abs() } else { (-zeta[i]).max(0.0) })
        .fold(0.0, f64::max);
    let energy = (0..p.len()).map(|i| p[i] * (h[i] + vv[i])).sum();
    ObstacleState { support, constant, zeta, residual, energy }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_pair_averages_match_closed_forms() {
        let s = 0.25;
        let p = 0.5;
        let closed = 2.0 / ((1.0 - p) * (2.0 - p));
        assert!((triangle_average(1, |r: f64| r.powf(-p)) - closed).abs() < 1e-8);
        assert!((triangle_average(1, |r: f64| -r.ln()) - 1.5).abs() < 1e-8);
        let k = EuclideanKernel::Riesz { s };
        assert!((k.cell_pair_average(1, 0.1) - closed * 0.1f64.powf(-p)).abs() < 1e-9);
    }

    #[test]
    fn toeplitz_matches_direct_sum() {
        let w = EuclideanWindow::new(2, -1.0, 1.0, 5).unwrap();
        let op = ToeplitzOperator::new(&w, EuclideanKernel::Log);
        let p: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let got = op.apply(&p);
        let diag = EuclideanKernel::Log.cell_pair_average(2, w.spacing());
        for i in 0..25 {
            let xi = w.center(i);
            let mut s = 0.0;
            for (j, pj) in p.iter().enumerate() {
                let xj = w.center(j);
                let r = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
                s += pj * if i == j { diag } else { -r.ln() };
            }
            assert!((got[i] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_projection() {
        let mut y = vec![0.5, 0.9, -0.2, 0.1];
        project_simplex(&mut y, &[0, 1, 2, 3]);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((y[0] - 0.3).abs() < 1e-12 && (y[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn log_gas_in_quadratic_well_is_a_semicircle() {
        let w = EuclideanWindow::new(1, -2.0, 2.0, 400).unwrap();
        let sol = solve_equilibrium_measure(
            &w,
            EuclideanKernel::Log,
            |x| x[0] * x[0],
            &EquilibriumOptions { tol: 1e-6, ..Default::default() },
        )
        .unwrap();
        assert!(sol.residual <= 1e-3);
        assert!(!sol.touches_boundary);
        let mass: f64 = sol.density.iter().sum::<f64>() * w.cell_volume();
        assert!((mass - 1.0).abs() < 1e-8);
        // loose comparison with (1/π)√(2 - x²)
        let mut l1 = 0.0;
        for (i, d) in sol.density.iter().enumerate() {
            let x = w.center(i)[0];
            let exact = (2.0f64 - x * x).max(0.0).sqrt() / std::f64::consts::PI;
            l1 += (d - exact).abs() * w.cell_volume();
        }
        assert!(l1 < 0.02, "L1 distance {l1}");
        let edge = sol.support_volume() / 2.0;
        assert!((edge - 2f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn contact_energy_in_hard_box_is_uniform() {
        let w = EuclideanWindow::new(1, -1.0, 1.0, 80).unwrap();
        let sol = solve_equilibrium_measure(
            &w,
            EuclideanKernel::Contact,
            |x| if x[0].abs() < 0.5 { 0.0 } else { f64::INFINITY },
            &Default::default(),
        )
        .unwrap();
        for (i, d) in sol.density.iter().enumerate() {
            let x = w.center(i)[0];
            let expect = if x.abs() < 0.5 { 1.0 } else { 0.0 };
            assert!((d - expect).abs() < 1e-8);
        }
        assert!((sol.support_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_the_window_keeps_the_measure() {
        let opts = EquilibriumOptions { tol: 1e-10, ..Default::default() };
        let v = |x: &[f64]| x[0] * x[0];
        let small = EuclideanWindow::new(1, -2.0, 2.0, 200).unwrap();
        let big = EuclideanWindow::new(1, -4.0, 4.0, 400).unwrap();
        let a = solve_equilibrium_measure(&small, EuclideanKernel::Log, v, &opts).unwrap();
        let b = solve_equilibrium_measure(&big, EuclideanKernel::Log, v, &opts).unwrap();
        for i in 0..200 {
            assert!((a.density[i] - b.density[i + 100]).abs() < 1e-6);
        }
    }
}
