use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fields::TaggedFieldSample;
use crate::pointconfig::PointConfig;
use crate::sampling::rng_from_seed;
use crate::torus::torus_distance;

fn bump(dist: f64, radius: f64) -> f64 {
    if dist >= radius {
        0.0
    } else {
        (PI * dist / (2.0 * radius)).cos().powi(2)
    }
}

/// Test functional `F(x, C) = φ(x) ψ(C) / L` with `|F| ≤ 1` and Lipschitz
/// constant at most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFunctional {
    /// Tag bump centre and radius; `None` means `φ ≡ 1`.
    pub tag_bump: Option<(Vec<f64>, f64)>,
    pub window_centre: Vec<f64>,
    pub window_radius: f64,
    /// Saturation level of the smoothed count.
    pub saturation: f64,
    pub normalization: f64,
}

impl ProductFunctional {
    pub fn eval(&self, torus_side: f64, tag: &[f64], window: &PointConfig) -> f64 {
        let phi = match &self.tag_bump {
            None => 1.0,
            Some((c, r)) => bump(torus_distance(tag, c, torus_side), *r),
        };
        if phi == 0.0 {
            return 0.0;
        }
        let smoothed: f64 = window
            .points()
            .map(|p| {
                let d2: f64 = p.iter().zip(&self.window_centre).map(|(a, b)| (a - b).powi(2)).sum();
                bump(d2.sqrt(), self.window_radius)
            })
            .sum();
        phi * (smoothed / self.saturation).min(1.0) / self.normalization
    }
}

/// Seeded, nested family of product functionals: the first `m` members do
/// not depend on how many are requested.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDictionary {
    pub torus_side: f64,
    pub functionals: Vec<ProductFunctional>,
}

impl FieldDictionary {
    pub fn new(dim: usize, torus_side: f64, window_side: f64, size: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let functionals = (0..size)
            .map(|_| {
                let (tag_bump, lip_phi) = if rng.random::<f64>() < 0.25 {
                    (None, 0.0)
                } else {
                    let c: Vec<f64> = (0..dim).map(|_| torus_side * rng.random::<f64>()).collect();
                    let r = torus_side * (0.1 + 0.4 * rng.random::<f64>());
                    (Some((c, r)), PI / (2.0 * r))
                };
                let half = window_side / 2.0;
                let window_centre: Vec<f64> = (0..dim).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect();
                let s_max = half.max(0.5);
                let window_radius = 0.5f64.min(s_max) + (s_max - 0.5f64.min(s_max)) * rng.random::<f64>();
                let saturation = rng.random_range(1..=5) as f64;
                let lip_psi = (PI / (2.0 * window_radius)).max(1.0) / saturation;
                ProductFunctional {
                    tag_bump,
                    window_centre,
                    window_radius,
                    saturation,
                    normalization: lip_phi.max(lip_psi).max(1.0),
                }
            })
            .collect();
        Self { torus_side, functionals }
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// `∫ F dP̄` for each functional, using the field's quadrature weights.
    pub fn expectations(&self, f: &TaggedFieldSample) -> Vec<f64> {
        self.functionals
            .par_iter()
            .map(|func| {
                f.tags
                    .iter()
                    .zip(&f.windows)
                    .zip(&f.weights)
                    .map(|((t, w), &wt)| wt * func.eval(self.torus_side, t, w))
                    .sum()
            })
            .collect()
    }
}

fn compatible(f1: &TaggedFieldSample, f2: &TaggedFieldSample) -> Result<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if f1.dim != f2.dim || !close(f1.window_side, f2.window_side) || !close(f1.torus_side, f2.torus_side) {
        return Err(invalid("fields have different windows or tori"));
    }
    Ok(())
}

/// `max_F |∫F dP̄₁ − ∫F dP̄₂|` over the first `dictionary_size` members of
/// the dictionary seeded by `seed`: a lower bound for the Lipschitz-dual
/// distance between the two fields.
pub fn field_pseudo_distance(
    f1: &TaggedFieldSample,
    f2: &TaggedFieldSample,
    dictionary_size: usize,
    seed: u64,
) -> Result<f64> {
    compatible(f1, f2)?;
    let dict = FieldDictionary::new(f1.dim, f1.torus_side, f1.window_side, dictionary_size, seed);
    Ok(distance_with(&dict, f1, f2))
}

pub fn distance_with(dict: &FieldDictionary, f1: &TaggedFieldSample, f2: &TaggedFieldSample) -> f64 {
    let e1 = dict.expectations(f1);
    let e2 = dict.expectations(f2);
    e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
