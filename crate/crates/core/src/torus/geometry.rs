use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Regular grid on the torus `[0, T)^d` with `n` nodes per axis.
///
/// Node `i` along an axis sits at `i * T / n` and owns the cell
/// `[x_i - h/2, x_i + h/2)`. Flattened indices are row-major with the first
/// axis varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct TorusGeometry {
    dim: usize,
    side: f64,
    resolution: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    dim: usize,
    side: f64,
    resolution: usize,
}

impl TryFrom<RawGeometry> for TorusGeometry {
    type Error = crate::Error;
    fn try_from(r: RawGeometry) -> Result<Self> {
        TorusGeometry::new(r.dim, r.side, r.resolution)
    }
}

impl From<TorusGeometry> for RawGeometry {
    fn from(g: TorusGeometry) -> Self {
        RawGeometry { dim: g.dim, side: g.side, resolution: g.resolution }
    }
}

impl TorusGeometry {
    pub fn new(dim: usize, side: f64, resolution: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(invalid(format!("torus side must be positive, got {side}")));
        }
        if resolution < 2 {
            return Err(invalid(format!("resolution must be at least 2, got {resolution}")));
        }
        let total = (resolution as u128).checked_pow(dim as u32);
        if total.is_none_or(|t| t > (1u128 << 40)) {
            return Err(invalid("grid too large"));
        }
        Ok(Self { dim, side, resolution })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Grid spacing `T / n`.
    pub fn spacing(&self) -> f64 {
        self.side / self.resolution as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total volume `T^d`.
    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.resolution; self.dim]
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = flat % self.resolution;
            flat /= self.resolution;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    /// Coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        idx.iter().map(|&i| i as f64 * self.spacing()).collect()
    }

    /// Flat index of the cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let n = self.resolution as i64;
        x.iter().fold(0usize, |acc, &c| {
            let i = (c / h + 0.5).floor() as i64;
            acc * self.resolution + i.rem_euclid(n) as usize
        })
    }

    /// Signed node offset of flat index `flat` mapped into `[-n/2, n/2)`.
    pub fn signed_offset(&self, flat: usize, out: &mut [i64]) {
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        let n = self.resolution as i64;
        for (o, &i) in out.iter_mut().zip(&idx) {
            let i = i as i64;
            *o = if i >= (n + 1) / 2 { i - n } else { i };
        }
    }

    /// Flat index of the node `-x_flat`.
    pub fn negate(&self, flat: usize) -> usize {
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        for i in idx.iter_mut() {
            *i = (self.resolution - *i) % self.resolution;
        }
        self.flatten(&idx)
    }
}

/// Reduce `x` into `[0, side)`.
pub fn wrap(x: f64, side: f64) -> f64 {
    let r = x.rem_euclid(side);
    if r >= side {
        0.0
    } else {
        r
    }
}

/// Minimum-image displacement in `[-side/2, side/2)`.
pub fn min_image(dx: f64, side: f64) -> f64 {
    let r = dx - side * (dx / side).round();
    if r >= 0.5 * side {
        r - side
    } else {
        r
    }
}

/// Geodesic distance on the torus of side `side`.
pub fn torus_distance(a: &[f64], b: &[f64], side: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| min_image(x - y, side).powi(2))
        .sum::<f64>()
        .sqrt()
}
