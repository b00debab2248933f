use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::pointconfig::{Domain, PointConfig};
use crate::torus::{wrap, GridMeasure};

/// Draw from Poisson(`mean`); zero mean gives zero.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(invalid(format!("Poisson mean must be finite and nonnegative, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| invalid(e.to_string()))?;
    Ok(p.sample(rng) as usize)
}

fn uniform_points<R: Rng + ?Sized>(domain: &Domain, n: usize, rng: &mut R) -> Result<PointConfig> {
    let (lower, sides) = domain.extent();
    let d = domain.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for a in 0..d {
            coords.push(lower[a] + sides[a] * rng.random::<f64>());
        }
    }
    PointConfig::from_flat(domain.clone(), coords)
}

/// Homogeneous Poisson process of intensity `lambda` on a box or torus.
pub fn sample_poisson_box<R: Rng + ?Sized>(
    lambda: f64,
    domain: &Domain,
    rng: &mut R,
) -> Result<PointConfig> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("intensity must be nonnegative, got {lambda}")));
    }
    let n = poisson_count(lambda * domain.volume(), rng)?;
    uniform_points(domain, n, rng)
}

/// Samples cells proportionally to their mass, then a uniform point inside.
#[derive(Debug, Clone)]
pub struct CellSampler {
    measure: GridMeasure,
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub fn new(measure: &GridMeasure) -> Result<Self> {
        if measure.mass() <= 0.0 {
            return Err(invalid("cannot sample from a measure of zero mass"));
        }
        let mut acc = 0.0;
        let cumulative = measure
            .values()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Ok(Self { measure: measure.clone(), cumulative })
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let mut cell = self.cumulative.partition_point(|&c| c <= u);
        // skip zero-mass cells that a boundary draw could land on
        while self.measure.values()[cell.min(self.cumulative.len() - 1)] == 0.0 && cell > 0 {
            cell -= 1;
        }
        let cell = cell.min(self.cumulative.len() - 1);
        let g = self.measure.geometry();
        let h = g.spacing();
        for x in g.node(cell) {
            out.push(wrap(x - 0.5 * h + h * rng.random::<f64>(), g.side()));
        }
    }

    pub fn domain(&self) -> Domain {
        let g = self.measure.geometry();
        Domain::Torus { dim: g.dim(), side: g.side() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointConfig {
        let mut coords = Vec::with_capacity(n * self.measure.geometry().dim());
        for _ in 0..n {
            self.sample_into(rng, &mut coords);
        }
        PointConfig::from_flat(self.domain(), coords).expect("points are wrapped")
    }
}

/// Inhomogeneous Poisson process with intensity `mu`.
pub fn sample_poisson_inhomogeneous<R: Rng + ?Sized>(
    mu: &GridMeasure,
    rng: &mut R,
) -> Result<PointConfig> {
    let g = mu.geometry();
    if mu.mass() == 0.0 {
        return Ok(PointConfig::empty(Domain::Torus { dim: g.dim(), side: g.side() }));
    }
    let n = poisson_count(mu.mass(), rng)?;
    Ok(CellSampler::new(mu)?.sample(n, rng))
}

/// `n` i.i.d. draws from the normalized `mu`.
pub fn sample_iid<R: Rng + ?Sized>(mu: &GridMeasure, n: usize, rng: &mut R) -> Result<PointConfig> {
    Ok(CellSampler::new(mu)?.sample(n, rng))
}

/// How [`condition_on_count`] realizes the conditional law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditioningMode {
    /// Given the count, Poisson points are i.i.d. from the normalized intensity.
    Direct,
    /// Resample whole Poisson configurations until the count matches.
    Rejection { max_attempts: usize },
}

/// A draw of the Poisson process conditioned on its total count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDraw {
    pub config: PointConfig,
    /// Poisson configurations drawn (1 in direct mode).
    pub attempts: usize,
}

pub fn condition_on_count<R: Rng + ?Sized>(
    intensity: &GridMeasure,
    n: usize,
    mode: ConditioningMode,
    rng: &mut R,
) -> Result<ConditionedDraw> {
    if intensity.mass() <= 0.0 {
        return Err(invalid("intensity must have positive mass"));
    }
    match mode {
        ConditioningMode::Direct => {
            Ok(ConditionedDraw { config: sample_iid(intensity, n, rng)?, attempts: 1 })
        }
        ConditioningMode::Rejection { max_attempts } => {
            let sampler = CellSampler::new(intensity)?;
            for attempt in 1..=max_attempts {
                let count = poisson_count(intensity.mass(), rng)?;
                if count == n {
                    return Ok(ConditionedDraw { config: sampler.sample(n, rng), attempts: attempt });
                }
            }
            Err(Error::Sampler(format!(
                "no Poisson draw with {n} points in {max_attempts} attempts"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_from_seed;
    use crate::torus::TorusGeometry;

    #[test]
    fn zero_intensity_is_empty() {
        let mut rng = rng_from_seed(1);
        let d = Domain::cube(2, 0.0, 3.0).unwrap();
        for _ in 0..20 {
            assert!(sample_poisson_box(0.0, &d, &mut rng).unwrap().is_empty());
        }
        assert!(sample_poisson_box(-1.0, &d, &mut rng).is_err());
    }

    #[test]
    fn half_supported_intensity_stays_in_its_half() {
        let g = TorusGeometry::new(1, 1.0, 16).unwrap();
        let mu = GridMeasure::from_fn(g, |x| if x[0] < 0.45 { 50.0 } else { 0.0 }).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let c = sample_poisson_inhomogeneous(&mu, &mut rng).unwrap();
            // cells with nodes 0..7 cover [-h/2, 7.5h) on the circle
            for p in c.points() {
                let x = p[0];
                assert!(x < 7.5 / 16.0 || x >= 1.0 - 0.5 / 16.0, "{x}");
            }
        }
    }

    #[test]
    fn direct_conditioning_equals_iid_stream() {
        let g = TorusGeometry::new(2, 1.0, 8).unwrap();
        let mu = GridMeasure::from_fn(g, |x| 1.0 + x[0]).unwrap();
        let a = condition_on_count(&mu, 10, ConditioningMode::Direct, &mut rng_from_seed(9)).unwrap();
        let b = sample_iid(&mu, 10, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.config, b);
        assert_eq!(a.attempts, 1);
        let r = condition_on_count(
            &mu,
            40,
            ConditioningMode::Rejection { max_attempts: 3 },
            &mut rng_from_seed(9),
        );
        assert!(matches!(r, Err(Error::Sampler(_))));
    }
}
