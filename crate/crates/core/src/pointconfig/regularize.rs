use crate::pointconfig::PointConfig;
use crate::torus::quadrature::advance;

/// A cell whose points were re-placed on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredCell {
    /// Multi-index of the cell.
    pub cell: Vec<usize>,
    /// Number of points in the cell.
    pub count: usize,
    /// Lattice spacing `3τ / ⌈count^{1/d}⌉`.
    pub spacing: f64,
}

/// Output of [`regularize_with_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub config: PointConfig,
    pub triggered: Vec<TriggeredCell>,
    /// Cells per axis.
    pub cells_per_axis: Vec<usize>,
    /// `6τ` did not divide the domain side, so the last cell along some
    /// axis is wider than `6τ`.
    pub remainder_absorbed: bool,
}

/// Smallest `q` with `q^d ≥ m`.
pub fn lattice_sites_per_axis(m: usize, d: usize) -> usize {
    let mut q = (m as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while q.pow(d as u32) < m {
        q += 1;
    }
    while q > 1 && (q - 1).pow(d as u32) >= m {
        q -= 1;
    }
    q
}

/// Cell-wise regularization at scale `τ`; see [`regularize_with_report`].
pub fn regularize(c: &PointConfig, tau: f64) -> PointConfig {
    regularize_with_report(c, tau).config
}

/// Partition the domain into cells of side `6τ` (the last cell per axis takes
/// any remainder). A cell holding at least two points, or one point while a
/// neighbouring cell (the `3^d - 1` surrounding cells, wrapping on the torus)
/// is occupied, has its points moved to an axis-aligned lattice with
/// `⌈m^{1/d}⌉` sites per axis inside the central sub-cube of side `3τ`,
/// filled in lexicographic order.
pub fn regularize_with_report(c: &PointConfig, tau: f64) -> Regularized {
    assert!(tau > 0.0, "tau must be positive");
    let d = c.dim();
    let (lower, sides) = c.domain().extent();
    let torus = c.domain().is_torus();
    let width = 6.0 * tau;
    let per_axis: Vec<usize> =
        sides.iter().map(|s| ((s / width) * (1.0 + 1e-12)).floor().max(1.0) as usize).collect();
    let remainder_absorbed = sides
        .iter()
        .zip(&per_axis)
        .any(|(s, &m)| (s - m as f64 * width).abs() > 1e-9 * s.max(1.0));

    let cell_of = |p: &[f64]| -> Vec<usize> {
        (0..d)
            .map(|a| (((p[a] - lower[a]) / width).floor().max(0.0) as usize).min(per_axis[a] - 1))
            .collect()
    };
    let flatten = |idx: &[usize]| idx.iter().zip(&per_axis).fold(0, |acc, (&i, &m)| acc * m + i);
    let total_cells: usize = per_axis.iter().product();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); total_cells];
    let cells: Vec<Vec<usize>> = c.points().map(cell_of).collect();
    for (i, cell) in cells.iter().enumerate() {
        members[flatten(cell)].push(i);
    }

    let neighbour_occupied = |cell: &[usize]| -> bool {
        let mut shift = vec![0usize; d];
        let me = flatten(cell);
        let mut seen = Vec::new();
        loop {
            let mut nb = Vec::with_capacity(d);
            let mut valid = true;
            for a in 0..d {
                let j = cell[a] as i64 + shift[a] as i64 - 1;
                let m = per_axis[a] as i64;
                if torus {
                    nb.push(j.rem_euclid(m) as usize);
                } else if j < 0 || j >= m {
                    valid = false;
                    break;
                } else {
                    nb.push(j as usize);
                }
            }
            if valid {
                let f = flatten(&nb);
                if f != me && !seen.contains(&f) {
                    seen.push(f);
                    if !members[f].is_empty() {
                        return true;
                    }
                }
            }
            if !advance(&mut shift, 3) {
                return false;
            }
        }
    };

    let mut coords = c.coords().to_vec();
    let mut triggered = Vec::new();
    let mut cell_idx = vec![0usize; d];
    for flat in 0..total_cells {
        let pts = &members[flat];
        {
            let mut f = flat;
            for a in (0..d).rev() {
                cell_idx[a] = f % per_axis[a];
                f /= per_axis[a];
            }
        }
        let fires = pts.len() >= 2 || (pts.len() == 1 && neighbour_occupied(&cell_idx));
        if !fires {
            continue;
        }
        let m = pts.len();
        let q = lattice_sites_per_axis(m, d);
        let spacing = 3.0 * tau / q as f64;
        let centre: Vec<f64> = (0..d)
            .map(|a| {
                let lo = lower[a] + cell_idx[a] as f64 * width;
                let hi = if cell_idx[a] + 1 == per_axis[a] { lower[a] + sides[a] } else { lo + width };
                0.5 * (lo + hi)
            })
            .collect();
        let mut site = vec![0usize; d];
        for &p in pts {
            for a in 0..d {
                coords[p * d + a] = centre[a] - 1.5 * tau + (site[a] as f64 + 0.5) * spacing;
            }
            advance(&mut site, q);
        }
        triggered.push(TriggeredCell { cell: cell_idx.clone(), count: m, spacing });
    }
    let config = PointConfig::from_flat(c.domain().clone(), coords)
        .expect("lattice sites stay inside their cells");
    Regularized { config, triggered, cells_per_axis: per_axis, remainder_absorbed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointconfig::{config_distance, min_separation, Domain};

    #[test]
    fn sites_per_axis() {
        assert_eq!(lattice_sites_per_axis(1, 2), 1);
        assert_eq!(lattice_sites_per_axis(4, 2), 2);
        assert_eq!(lattice_sites_per_axis(5, 2), 3);
        assert_eq!(lattice_sites_per_axis(27, 3), 3);
        assert_eq!(lattice_sites_per_axis(28, 3), 4);
        assert_eq!(lattice_sites_per_axis(7, 1), 7);
    }

    #[test]
    fn isolated_points_are_untouched() {
        let d = Domain::torus(1, 6.0).unwrap();
        // cells of side 0.6: points in cells 0, 3, 6
        let c = PointConfig::new(d, &[vec![0.1], vec![2.0], vec![3.7]]).unwrap();
        let r = regularize_with_report(&c, 0.1);
        assert_eq!(r.config, c);
        assert!(r.triggered.is_empty());
        assert!(!r.remainder_absorbed);
    }

    #[test]
    fn coincident_points_spread_on_lattice() {
        let d = Domain::torus(2, 3.0).unwrap();
        let c = PointConfig::new(d, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let tau = 0.1;
        let r = regularize_with_report(&c, tau);
        assert_eq!(r.config.len(), 2);
        assert_eq!(r.triggered.len(), 1);
        assert!(min_separation(&r.config) >= 3.0 * tau / 2.0 - 1e-12);
        // inside the central sub-cube of cell (1, 1) = [0.6, 1.2)^2
        for p in r.config.points() {
            assert!(p.iter().all(|&x| (x - 0.9).abs() <= 1.5 * tau));
        }
    }

    #[test]
    fn neighbours_trigger_and_wrap() {
        let d = Domain::torus(1, 1.2).unwrap();
        // cells of side 0.6: the two points sit in cells 0 and 1, which are adjacent
        let c = PointConfig::new(d, &[vec![0.01], vec![1.19]]).unwrap();
        let r = regularize_with_report(&c, 0.1);
        assert_eq!(r.triggered.len(), 2);
        assert!((r.config.point(0)[0] - 0.3).abs() < 1e-12);
        assert!((r.config.point(1)[0] - 0.9).abs() < 1e-12);
        // a box does not wrap
        let b = Domain::cube(1, 0.0, 1.8).unwrap();
        let c = PointConfig::new(b, &[vec![0.01], vec![1.79]]).unwrap();
        assert!(regularize_with_report(&c, 0.1).triggered.is_empty());
    }

    #[test]
    fn remainder_is_flagged() {
        let d = Domain::torus(1, 1.0).unwrap();
        let c = PointConfig::new(d, &[vec![0.95], vec![0.99]]).unwrap();
        let r = regularize_with_report(&c, 0.1);
        assert!(r.remainder_absorbed);
        assert_eq!(r.cells_per_axis, vec![1]);
        assert_eq!(r.config.len(), 2);
    }

    #[test]
    fn idempotent() {
        let d = Domain::torus(2, 2.4).unwrap();
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.731) % 2.4, (i as f64 * 1.377) % 2.4])
            .collect();
        let c = PointConfig::new(d, &pts).unwrap();
        let once = regularize(&c, 0.05);
        assert_eq!(regularize(&once, 0.05), once);
    }

    #[test]
    fn displacement_is_not_monotone_in_tau() {
        let d = Domain::torus(1, 9.0).unwrap();
        let c = PointConfig::new(d, &[vec![0.2], vec![0.4]]).unwrap();
        // τ = 0.1: one cell [0, 0.6), sites 0.225 and 0.375
        let coarse = regularize(&c, 0.1);
        // τ = 0.05: adjacent cells [0, 0.3) and [0.3, 0.6), each point to its centre
        let fine = regularize(&c, 0.05);
        assert!((coarse.point(0)[0] - 0.225).abs() < 1e-12);
        assert!((fine.point(0)[0] - 0.15).abs() < 1e-12);
        let dc = config_distance(&c, &coarse).unwrap();
        let df = config_distance(&c, &fine).unwrap();
        assert!(df > dc);
    }
}
