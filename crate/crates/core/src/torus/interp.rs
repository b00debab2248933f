use crate::torus::{SignedGridField, TorusGeometry};

/// Number of nodes per axis used by the interpolation stencil.
pub const INTERPOLATION_ORDER: usize = 6;

fn stencil_order(n: usize) -> usize {
    INTERPOLATION_ORDER.min(n - n % 2).max(2)
}

/// Lagrange weights of an even `order`-point stencil at fractional offset
/// `u ∈ [0,1)`; stencil node `k` sits at `k + 1 - order/2`.
fn lagrange_weights(u: f64, order: usize, out: &mut [f64]) {
    let off = order as f64 / 2.0 - 1.0;
    for (k, w) in out.iter_mut().enumerate().take(order) {
        let tk = k as f64 - off;
        let mut p = 1.0;
        for m in 0..order {
            if m != k {
                let tm = m as f64 - off;
                p *= (u - tm) / (tk - tm);
            }
        }
        *w = p;
    }
}

/// Periodic tensor-product Lagrange interpolation of node values.
pub fn interpolate_values(geometry: &TorusGeometry, values: &[f64], x: &[f64]) -> f64 {
    let d = geometry.dim();
    let n = geometry.resolution();
    let order = stencil_order(n);
    let h = geometry.spacing();
    let mut base = vec![0i64; d];
    let mut weights = vec![0.0; d * order];
    for a in 0..d {
        let s = x[a] / h;
        let f = s.floor();
        base[a] = f as i64 - (order as i64 / 2 - 1);
        lagrange_weights(s - f, order, &mut weights[a * order..(a + 1) * order]);
    }
    let mut total = 0.0;
    let mut k = vec![0usize; d];
    let count = order.pow(d as u32);
    for _ in 0..count {
        let mut w = 1.0;
        let mut flat = 0usize;
        for a in 0..d {
            w *= weights[a * order + k[a]];
            flat = flat * n + (base[a] + k[a] as i64).rem_euclid(n as i64) as usize;
        }
        total += w * values[flat];
        for a in (0..d).rev() {
            k[a] += 1;
            if k[a] < order {
                break;
            }
            k[a] = 0;
        }
    }
    total
}

impl SignedGridField {
    /// Continuous evaluation by periodic Lagrange interpolation.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate_values(self.geometry(), self.values(), x)
    }
}
