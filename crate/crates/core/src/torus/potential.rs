use std::f64::consts::PI;

use crate::error::{shape, Result};
use crate::torus::{SignedGridField, TorusGeometry};

/// Confining potential `V`, either a closed formula or a grid field.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// `amplitude · Σ_a cos(2π mode x_a / T)`.
    Cosine { amplitude: f64, mode: i64 },
    /// `depth · Σ_a cos(4π x_a / T) + tilt · Σ_a cos(2π x_a / T)`: two wells
    /// per axis whose relative depth is set by `tilt`.
    DoubleWell { depth: f64, tilt: f64 },
    /// Node values, evaluated off-grid by periodic interpolation.
    Grid(SignedGridField),
}

impl Potential {
    /// Continuous evaluation on the torus of side `side`.
    pub fn eval(&self, side: f64, x: &[f64]) -> f64 {
        let cos_sum = |k: f64| x.iter().map(|&xi| (2.0 * PI * k * xi / side).cos()).sum::<f64>();
        match self {
            Potential::Zero => 0.0,
            Potential::Cosine { amplitude, mode } => amplitude * cos_sum(*mode as f64),
            Potential::DoubleWell { depth, tilt } => depth * cos_sum(2.0) + tilt * cos_sum(1.0),
            Potential::Grid(f) => f.interpolate(x),
        }
    }

    /// Node values on `geometry`.
    pub fn sample(&self, geometry: &TorusGeometry) -> Result<SignedGridField> {
        if let Potential::Grid(f) = self {
            if f.geometry() != geometry {
                return Err(shape("potential grid differs from the requested grid"));
            }
            return Ok(f.clone());
        }
        SignedGridField::from_fn(*geometry, |x| self.eval(geometry.side(), x))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Cosine { amplitude, .. } => *amplitude == 0.0,
            Potential::DoubleWell { depth, tilt } => *depth == 0.0 && *tilt == 0.0,
            Potential::Grid(f) => f.values().iter().all(|&v| v == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas_and_grid_agree_at_nodes() {
        let g = TorusGeometry::new(2, 2.0, 16).unwrap();
        for v in [
            Potential::Zero,
            Potential::Cosine { amplitude: 1.5, mode: 1 },
            Potential::DoubleWell { depth: 1.0, tilt: 0.3 },
        ] {
            let f = v.sample(&g).unwrap();
            let gv = Potential::Grid(f.clone());
            for i in (0..g.len()).step_by(7) {
                let x = g.node(i);
                assert!((gv.eval(2.0, &x) - v.eval(2.0, &x)).abs() < 1e-12);
            }
        }
        let bad = Potential::Grid(SignedGridField::zeros(TorusGeometry::new(2, 2.0, 8).unwrap()));
        assert!(bad.sample(&g).is_err());
    }
}
