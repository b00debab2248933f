use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::torus::{min_image, wrap};

/// Where a configuration lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// `[0, side)^dim` with periodic identification.
    Torus { dim: usize, side: f64 },
    /// Axis-aligned box `Π [lower_a, upper_a]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Domain {
    pub fn torus(dim: usize, side: f64) -> Result<Self> {
        if dim == 0 || !(side > 0.0 && side.is_finite()) {
            return Err(invalid("torus needs dim ≥ 1 and a positive side"));
        }
        Ok(Domain::Torus { dim, side })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower; dim], vec![upper; dim])
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("box corners must have the same positive dimension"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(invalid("box needs lower < upper on every axis"));
        }
        Ok(Domain::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Torus { dim, .. } => *dim,
            Domain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Torus { dim, side } => side.powi(*dim as i32),
            Domain::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).product(),
        }
    }

    /// Lower corner and side lengths.
    pub fn extent(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Torus { dim, side } => (vec![0.0; *dim], vec![*side; *dim]),
            Domain::Box { lower, upper } => {
                (lower.clone(), lower.iter().zip(upper).map(|(l, u)| u - l).collect())
            }
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Displacement `b - a`, minimum image on the torus.
    pub fn displacement(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match self {
            Domain::Torus { side, .. } => {
                for i in 0..out.len() {
                    out[i] = min_image(b[i] - a[i], *side);
                }
            }
            Domain::Box { .. } => {
                for i in 0..out.len() {
                    out[i] = b[i] - a[i];
                }
            }
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Domain::Torus { side, .. } => {
                a.iter().zip(b).map(|(x, y)| min_image(y - x, *side).powi(2)).sum::<f64>().sqrt()
            }
            Domain::Box { .. } => a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt(),
        }
    }

    fn admit(&self, x: &mut [f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        match self {
            Domain::Torus { side, .. } => {
                x.iter_mut().for_each(|v| *v = wrap(*v, *side));
                Ok(())
            }
            Domain::Box { lower, upper } => {
                if x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= *l && *v <= *u) {
                    Ok(())
                } else {
                    Err(invalid(format!("point {x:?} lies outside the box")))
                }
            }
        }
    }
}

/// Finite multiset of points in a [`Domain`], stored as flat coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    domain: Domain,
    coords: Vec<f64>,
}

impl PointConfig {
    pub fn empty(domain: Domain) -> Self {
        Self { domain, coords: vec![] }
    }

    /// Torus coordinates are wrapped into `[0, T)`; box points must lie inside.
    pub fn new(domain: Domain, points: &[Vec<f64>]) -> Result<Self> {
        let d = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.len() != d {
                return Err(shape(format!("point {p:?} does not have dimension {d}")));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(domain, coords)
    }

    pub fn from_flat(domain: Domain, mut coords: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if coords.len() % d != 0 {
            return Err(shape("coordinate count is not a multiple of the dimension"));
        }
        for p in coords.chunks_mut(d) {
            domain.admit(p)?;
        }
        Ok(Self { domain, coords })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `|C|(□)` for the closed cube of side `side` centred at `center`
    /// (minimum-image on the torus).
    pub fn count_in_cube(&self, center: &[f64], side: f64) -> usize {
        let mut disp = vec![0.0; self.dim()];
        self.points()
            .filter(|p| {
                self.domain.displacement(center, p, &mut disp);
                disp.iter().all(|v| v.abs() <= side / 2.0)
            })
            .count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain,
            "points": self.points().map(|p| p.to_vec()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let fmt = |m: String| Error::Format(m);
        let domain: Domain = serde_json::from_value(value["domain"].clone())
            .map_err(|e| fmt(format!("bad domain: {e}")))?;
        let points: Vec<Vec<f64>> = serde_json::from_value(value["points"].clone())
            .map_err(|e| fmt(format!("bad points: {e}")))?;
        Self::new(domain, &points)
    }
}

/// Write configurations as newline-delimited JSON.
pub fn write_ndjson<'a, W: Write>(
    mut w: W,
    configs: impl IntoIterator<Item = &'a PointConfig>,
) -> Result<()> {
    for c in configs {
        serde_json::to_writer(&mut w, &c.to_json()).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(r: R) -> Result<Vec<PointConfig>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
        out.push(PointConfig::from_json(&v)?);
    }
    Ok(out)
}

/// Translation, dilation or restriction of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigTransform {
    Translate(Vec<f64>),
    /// Scale every coordinate (and the domain) by `λ > 0`.
    Dilate(f64),
    /// Keep the points in the closed cube `□_side(center)`; the result lives
    /// in that cube as a box domain.
    Restrict { center: Vec<f64>, side: f64 },
}

pub fn apply_transform(c: &PointConfig, t: &ConfigTransform) -> Result<PointConfig> {
    let d = c.dim();
    match t {
        ConfigTransform::Translate(tau) => {
            if tau.len() != d {
                return Err(shape("translation has the wrong dimension"));
            }
            let coords: Vec<f64> =
                c.coords.iter().enumerate().map(|(i, x)| x + tau[i % d]).collect();
            let domain = match &c.domain {
                Domain::Torus { .. } => c.domain.clone(),
                Domain::Box { lower, upper } => Domain::Box {
                    lower: lower.iter().zip(tau).map(|(l, t)| l + t).collect(),
                    upper: upper.iter().zip(tau).map(|(u, t)| u + t).collect(),
                },
            };
            if domain.is_torus() {
                PointConfig::from_flat(domain, coords)
            } else {
                Ok(PointConfig { domain, coords })
            }
        }
        ConfigTransform::Dilate(lambda) => {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(invalid(format!("dilation factor must be positive, got {lambda}")));
            }
            let domain = match &c.domain {
                Domain::Torus { dim, side } => Domain::Torus { dim: *dim, side: side * lambda },
                Domain::Box { lower, upper } => Domain::Box {
                    lower: lower.iter().map(|l| l * lambda).collect(),
                    upper: upper.iter().map(|u| u * lambda).collect(),
                },
            };
            let coords = c.coords.iter().map(|x| x * lambda).collect();
            Ok(PointConfig { domain, coords })
        }
        ConfigTransform::Restrict { center, side } => {
            if center.len() != d {
                return Err(shape("restriction centre has the wrong dimension"));
            }
            if !(*side > 0.0) {
                return Err(invalid("restriction side must be positive"));
            }
            if let Domain::Box { lower, upper } = &c.domain {
                let inside = (0..d).all(|a| {
                    center[a] - side / 2.0 >= lower[a] - 1e-12 && center[a] + side / 2.0 <= upper[a] + 1e-12
                });
                if !inside {
                    return Err(invalid("restriction cube leaves the box"));
                }
            }
            let lower: Vec<f64> = center.iter().map(|x| x - side / 2.0).collect();
            let upper: Vec<f64> = center.iter().map(|x| x + side / 2.0).collect();
            let mut disp = vec![0.0; d];
            let mut coords = Vec::new();
            for p in c.points() {
                c.domain.displacement(center, p, &mut disp);
                if disp.iter().all(|v| v.abs() <= side / 2.0) {
                    coords.extend(center.iter().zip(&disp).map(|(x, v)| x + v));
                }
            }
            // clamp round-off so every kept point is inside the closed cube
            for (i, x) in coords.iter_mut().enumerate() {
                *x = x.clamp(lower[i % d], upper[i % d]);
            }
            Ok(PointConfig { domain: Domain::Box { lower, upper }, coords })
        }
    }
}

/// Smallest pairwise distance (geodesic on the torus); `+∞` for fewer than
/// two points.
pub fn min_separation(c: &PointConfig) -> f64 {
    let n = c.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min(c.domain.distance(c.point(i), c.point(j)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus1() -> Domain {
        Domain::torus(1, 1.0).unwrap()
    }

    #[test]
    fn torus_points_are_wrapped_and_boxes_checked() {
        let c = PointConfig::new(torus1(), &[vec![1.25], vec![-0.25]]).unwrap();
        assert_eq!(c.coords(), &[0.25, 0.75]);
        let b = Domain::cube(2, 0.0, 1.0).unwrap();
        assert!(PointConfig::new(b.clone(), &[vec![0.5, 1.5]]).is_err());
        assert!(PointConfig::new(b, &[vec![0.5]]).is_err());
    }

    #[test]
    fn transform_examples() {
        let d = Domain::torus(2, 3.0).unwrap();
        let c = PointConfig::new(d, &[vec![0.1, 2.9], vec![1.5, 1.5], vec![2.2, 0.4]]).unwrap();
        let t = apply_transform(&c, &ConfigTransform::Translate(vec![0.7, -1.1])).unwrap();
        let back = apply_transform(&t, &ConfigTransform::Translate(vec![-0.7, 1.1])).unwrap();
        for (a, b) in back.coords().iter().zip(c.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(apply_transform(&c, &ConfigTransform::Dilate(1.0)).unwrap(), c);
        assert!(apply_transform(&c, &ConfigTransform::Dilate(0.0)).is_err());
        let all = apply_transform(
            &c,
            &ConfigTransform::Restrict { center: vec![0.0, 0.0], side: 3.0 },
        )
        .unwrap();
        assert_eq!(all.len(), 3);
        let some = ConfigTransform::Restrict { center: vec![0.0, 0.0], side: 1.0 };
        assert_eq!(apply_transform(&c, &some).unwrap().len(), c.count_in_cube(&[0.0, 0.0], 1.0));
        assert_eq!(c.count_in_cube(&[0.0, 0.0], 1.0), 1);
    }

    #[test]
    fn separation_examples() {
        let c = PointConfig::new(torus1(), &[vec![0.0], vec![0.5]]).unwrap();
        assert!((min_separation(&c) - 0.5).abs() < 1e-15);
        let c = PointConfig::new(torus1(), &[vec![0.3], vec![0.3]]).unwrap();
        assert_eq!(min_separation(&c), 0.0);
        let c = PointConfig::new(torus1(), &[vec![0.3]]).unwrap();
        assert_eq!(min_separation(&c), f64::INFINITY);
        let c = PointConfig::new(torus1(), &[vec![0.05], vec![0.95]]).unwrap();
        assert!((min_separation(&c) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ndjson_roundtrip() {
        let a = PointConfig::new(torus1(), &[vec![0.1], vec![0.7]]).unwrap();
        let b = PointConfig::new(Domain::cube(2, -1.0, 1.0).unwrap(), &[vec![0.0, 0.5]]).unwrap();
        let e = PointConfig::empty(torus1());
        let mut buf = Vec::new();
        write_ndjson(&mut buf, [&a, &b, &e]).unwrap();
        assert_eq!(read_ndjson(&buf[..]).unwrap(), vec![a, b, e]);
    }
}
