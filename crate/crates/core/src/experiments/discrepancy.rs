use crate::error::{invalid, Result};
use crate::experiments::energy::check_on_torus;
use crate::pointconfig::PointConfig;
use crate::torus::GridMeasure;

/// Cell boundaries `0, η, 2η, …, T`; the last cell absorbs the remainder.
fn boundaries(side: f64, eta: f64) -> Vec<f64> {
    let k = ((side / eta) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let mut b: Vec<f64> = (0..k).map(|i| i as f64 * eta).collect();
    b.push(side);
    b
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Fraction of grid cell `j` (centred on node `j h`, wrapping) inside each
/// `η`-cell, along one axis.
fn axis_weights(n: usize, side: f64, bounds: &[f64]) -> Vec<Vec<f64>> {
    let h = side / n as f64;
    (0..n)
        .map(|j| {
            let (lo, hi) = (j as f64 * h - h / 2.0, j as f64 * h + h / 2.0);
            bounds
                .windows(2)
                .map(|w| {
                    let mut o = overlap(lo, hi, w[0], w[1]);
                    o += overlap(lo + side, hi + side, w[0], w[1]);
                    o += overlap(lo - side, hi - side, w[0], w[1]);
                    o / h
                })
                .collect()
        })
        .collect()
}

/// `max_i |emp_N(K_i) − ρ(K_i)|` over the cells `K_i` of side `η`.
pub fn discrepancy(x_n: &PointConfig, rho: &GridMeasure, eta: f64) -> Result<f64> {
    let g = rho.geometry();
    check_on_torus(x_n, g)?;
    if x_n.is_empty() {
        return Err(invalid("discrepancy of an empty configuration"));
    }
    if !(eta > 0.0 && eta <= g.side()) {
        return Err(invalid("eta must lie in (0, T]"));
    }
    let d = g.dim();
    let bounds = boundaries(g.side(), eta);
    let k = bounds.len() - 1;
    let cells = k.pow(d as u32);
    let weights = axis_weights(g.resolution(), g.side(), &bounds);

    let mut rho_mass = vec![0.0; cells];
    let masses = rho.cell_masses();
    let mut idx = vec![0usize; d];
    for (flat, &m) in masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        g.unflatten(flat, &mut idx);
        let mut cell_idx = vec![0usize; d];
        loop {
            let w: f64 = (0..d).map(|a| weights[idx[a]][cell_idx[a]]).product();
            if w > 0.0 {
                let c = cell_idx.iter().fold(0, |acc, &i| acc * k + i);
                rho_mass[c] += w * m;
            }
            if !crate::torus::quadrature::advance(&mut cell_idx, k) {
                break;
            }
        }
    }
    let mut emp = vec![0.0; cells];
    let unit = 1.0 / x_n.len() as f64;
    for p in x_n.points() {
        let c = p.iter().fold(0, |acc, &x| {
            let i = bounds[1..k].partition_point(|&b| b <= x);
            acc * k + i
        });
        emp[c] += unit;
    }
    Ok(emp.iter().zip(&rho_mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}
