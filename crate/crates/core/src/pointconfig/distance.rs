use crate::error::{shape, Result};
use crate::pointconfig::{Domain, PointConfig};

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`),
/// by the shortest augmenting path method with potentials.
/// Returns the total cost.
pub fn assignment_cost(cost: &[f64], rows: usize, cols: usize) -> f64 {
    assert!(rows <= cols && cost.len() == rows * cols);
    if rows == 0 {
        return 0.0;
    }
    // 1-based arrays, column 0 is a sentinel
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=cols).filter(|&j| owner[j] != 0).map(|j| cost[(owner[j] - 1) * cols + (j - 1)]).sum()
}

/// `sup { ∫ f d(μ1 - μ2) : Lip f ≤ 1, |f| ≤ 1 }` for counting measures on
/// two point sets.
///
/// The dual is a partial matching where a matched pair costs `min(d, 2)` and
/// an unmatched atom costs 1. Since a pair never costs more than leaving both
/// atoms unmatched, some optimum matches `min(n1, n2)` pairs, so the value is
/// a rectangular assignment plus `|n1 - n2|`.
pub fn bounded_lipschitz(domain: &Domain, a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let rows = small.len();
    let cols = large.len();
    let mut cost = Vec::with_capacity(rows * cols);
    for p in small {
        for q in large {
            cost.push(domain.distance(p, q).min(2.0));
        }
    }
    assignment_cost(&cost, rows, cols) + (cols - rows) as f64
}

fn restrict<'a>(c: &'a PointConfig, k: f64) -> Vec<&'a [f64]> {
    let origin = vec![0.0; c.dim()];
    let mut disp = vec![0.0; c.dim()];
    c.points()
        .filter(|p| {
            c.domain().displacement(&origin, p, &mut disp);
            disp.iter().all(|v| v.abs() <= k / 2.0)
        })
        .collect()
}

/// The configuration-space distance
/// `Σ_k 2^{-k} BL(C1|□_k, C2|□_k) / (|C1|(□_k) + |C2|(□_k))`.
///
/// Cubes are centred at the origin. Once `□_K` covers the whole domain all
/// later terms coincide, so the tail is summed in closed form as
/// `2^{-(K-1)} s_K`.
pub fn config_distance(c1: &PointConfig, c2: &PointConfig) -> Result<f64> {
    if c1.domain() != c2.domain() {
        return Err(shape("configurations live in different domains"));
    }
    let domain = c1.domain();
    let covering = match domain {
        Domain::Torus { side, .. } => side.ceil().max(1.0) as usize,
        Domain::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(l, u)| (2.0 * l.abs().max(u.abs())).ceil().max(1.0) as usize)
            .max()
            .unwrap_or(1),
    };
    let term = |k: usize| {
        let a = restrict(c1, k as f64);
        let b = restrict(c2, k as f64);
        let total = a.len() + b.len();
        if total == 0 {
            0.0
        } else {
            bounded_lipschitz(domain, &a, &b) / total as f64
        }
    };
    let mut sum = 0.0;
    for k in 1..covering {
        sum += 0.5f64.powi(k as i32) * term(k);
    }
    sum += 0.5f64.powi(covering as i32 - 1) * term(covering);
    Ok(sum)
}
