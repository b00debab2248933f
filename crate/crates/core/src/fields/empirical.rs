use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::pointconfig::{Domain, PointConfig};
use crate::torus::{min_image, GridMeasure, TorusGeometry};

/// Histogram density of `c` on `geometry`: per cell `count / (N · cell volume)`.
pub fn empirical_measure(c: &PointConfig, geometry: &TorusGeometry) -> Result<GridMeasure> {
    if c.is_empty() {
        return Err(invalid("empirical measure of an empty configuration"));
    }
    match c.domain() {
        Domain::Torus { dim, side } if *dim == geometry.dim() && *side == geometry.side() => {}
        _ => return Err(shape("configuration does not live on the grid's torus")),
    }
    let mut values = vec![0.0; geometry.len()];
    let unit = 1.0 / (c.len() as f64 * geometry.cell_volume());
    for p in c.points() {
        values[geometry.cell_of(p)] += unit;
    }
    GridMeasure::new(*geometry, values)
}

/// `k` with `k^d = m`, if any.
pub(crate) fn exact_root(m: usize, d: usize) -> Option<usize> {
    let guess = (m as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|k| k.checked_pow(d as u32) == Some(m))
}

/// Quadrature of the tagged empirical field: for each tag `x`, the
/// configuration blown up by `N^{1/d}`, recentred at `x` and restricted to
/// the window `[−R/2, R/2)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedFieldSample {
    pub dim: usize,
    pub torus_side: f64,
    pub n_particles: usize,
    pub window_side: f64,
    /// Set when the requested window exceeded the blown-up torus and was clipped.
    pub clipped: bool,
    pub tags: Vec<Vec<f64>>,
    pub windows: Vec<PointConfig>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    dim: usize,
    torus_side: f64,
    n_particles: usize,
    window_side: f64,
    clipped: bool,
    m_tags: usize,
}

#[derive(Serialize, Deserialize)]
struct FieldRecord {
    tag: Vec<f64>,
    points: Vec<Vec<f64>>,
    weight: f64,
}

impl TaggedFieldSample {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn window_domain(&self) -> Domain {
        Domain::Box {
            lower: vec![-self.window_side / 2.0; self.dim],
            upper: vec![self.window_side / 2.0; self.dim],
        }
    }

    /// JSON header line followed by one record per tag.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let fmt = |e: serde_json::Error| Error::Format(e.to_string());
        let header = FieldHeader {
            dim: self.dim,
            torus_side: self.torus_side,
            n_particles: self.n_particles,
            window_side: self.window_side,
            clipped: self.clipped,
            m_tags: self.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(fmt)?;
        w.write_all(b"\n")?;
        for ((tag, win), &weight) in self.tags.iter().zip(&self.windows).zip(&self.weights) {
            let rec = FieldRecord {
                tag: tag.clone(),
                points: win.points().map(|p| p.to_vec()).collect(),
                weight,
            };
            serde_json::to_writer(&mut w, &rec).map_err(fmt)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let fmt = |e: serde_json::Error| Error::Format(e.to_string());
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let first = lines.next().ok_or_else(|| Error::Format("missing field header".into()))??;
        let h: FieldHeader = serde_json::from_str(&first).map_err(fmt)?;
        let mut out = TaggedFieldSample {
            dim: h.dim,
            torus_side: h.torus_side,
            n_particles: h.n_particles,
            window_side: h.window_side,
            clipped: h.clipped,
            tags: Vec::new(),
            windows: Vec::new(),
            weights: Vec::new(),
        };
        let domain = out.window_domain();
        for line in lines {
            let rec: FieldRecord = serde_json::from_str(&line?).map_err(fmt)?;
            out.windows.push(PointConfig::new(domain.clone(), &rec.points)?);
            out.tags.push(rec.tag);
            out.weights.push(rec.weight);
        }
        if out.len() != h.m_tags {
            return Err(Error::Format(format!("header announces {} tags, found {}", h.m_tags, out.len())));
        }
        Ok(out)
    }
}

/// Builds the tagged field of a torus configuration on `m_tags = k^d`
/// equally weighted tags `i · T / k`.
pub fn tagged_empirical_field(
    x_n: &PointConfig,
    m_tags: usize,
    window_side: f64,
) -> Result<TaggedFieldSample> {
    let (dim, side) = match x_n.domain() {
        Domain::Torus { dim, side } => (*dim, *side),
        Domain::Box { .. } => return Err(invalid("tagged fields need a torus configuration")),
    };
    if x_n.is_empty() {
        return Err(invalid("tagged field of an empty configuration"));
    }
    if !(window_side > 0.0 && window_side.is_finite()) {
        return Err(invalid("window side must be positive"));
    }
    let k = exact_root(m_tags, dim)
        .filter(|&k| k >= 1)
        .ok_or_else(|| invalid(format!("m_tags = {m_tags} is not a positive perfect power of {dim}")))?;
    let n = x_n.len();
    let scale = (n as f64).powf(1.0 / dim as f64);
    let blown = scale * side;
    let clipped = window_side > blown;
    let r = window_side.min(blown);
    let domain = Domain::Box { lower: vec![-r / 2.0; dim], upper: vec![r / 2.0; dim] };

    let tags: Vec<Vec<f64>> = (0..m_tags)
        .map(|mut t| {
            let mut x = vec![0.0; dim];
            for a in (0..dim).rev() {
                x[a] = (t % k) as f64 * side / k as f64;
                t /= k;
            }
            x
        })
        .collect();
    let windows = tags
        .par_iter()
        .map(|x| {
            let mut coords = Vec::new();
            let mut p_scaled = vec![0.0; dim];
            for p in x_n.points() {
                let mut inside = true;
                for a in 0..dim {
                    p_scaled[a] = scale * min_image(p[a] - x[a], side);
                    inside &= p_scaled[a] >= -r / 2.0 && p_scaled[a] < r / 2.0;
                }
                if inside {
                    coords.extend_from_slice(&p_scaled);
                }
            }
            PointConfig::from_flat(domain.clone(), coords)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaggedFieldSample {
        dim,
        torus_side: side,
        n_particles: n,
        window_side: r,
        clipped,
        tags,
        windows,
        weights: vec![1.0 / m_tags as f64; m_tags],
    })
}

/// Tag-binned intensity of a tagged field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityProfile {
    pub dim: usize,
    pub torus_side: f64,
    /// Bins per axis.
    pub n_bins: usize,
    /// Mean window count per unit microscopic volume, per bin.
    pub intensity: Vec<f64>,
    /// Standard error of each bin mean (0 with fewer than two tags).
    pub std_error: Vec<f64>,
    pub tags_per_bin: Vec<usize>,
    /// `Σ intensity · bin volume`, i.e. the integral over the torus.
    pub total: f64,
}

impl IntensityProfile {
    /// CSV rows `bin,center...,intensity,std_error,tags`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let axes: Vec<String> = (0..self.dim).map(|a| format!("x{a}")).collect();
        writeln!(w, "bin,{},intensity,std_error,tags", axes.join(","))?;
        let h = self.torus_side / self.n_bins as f64;
        for b in 0..self.intensity.len() {
            let mut idx = vec![0; self.dim];
            let mut t = b;
            for a in (0..self.dim).rev() {
                idx[a] = t % self.n_bins;
                t /= self.n_bins;
            }
            let centre: Vec<String> = idx.iter().map(|&i| format!("{}", (i as f64 + 0.5) * h)).collect();
            writeln!(
                w,
                "{b},{},{},{},{}",
                centre.join(","),
                self.intensity[b],
                self.std_error[b],
                self.tags_per_bin[b]
            )?;
        }
        Ok(())
    }
}

/// Averages `window count / R^d` over the tags falling in each of the
/// `n_bins^d` bins `[i·T/n, (i+1)·T/n)`.
pub fn intensity_profile(f: &TaggedFieldSample, n_bins: usize) -> Result<IntensityProfile> {
    if n_bins == 0 {
        return Err(invalid("n_bins must be at least 1"));
    }
    let d = f.dim;
    let total_bins = n_bins.pow(d as u32);
    let vol = f.window_side.powi(d as i32);
    let mut sum = vec![0.0; total_bins];
    let mut sum2 = vec![0.0; total_bins];
    let mut count = vec![0usize; total_bins];
    for (tag, win) in f.tags.iter().zip(&f.windows) {
        let mut b = 0;
        for &x in tag {
            let i = ((x / f.torus_side * n_bins as f64).floor() as usize).min(n_bins - 1);
            b = b * n_bins + i;
        }
        let v = win.len() as f64 / vol;
        sum[b] += v;
        sum2[b] += v * v;
        count[b] += 1;
    }
    let mut intensity = vec![0.0; total_bins];
    let mut std_error = vec![0.0; total_bins];
    for b in 0..total_bins {
        if count[b] == 0 {
            continue;
        }
        let m = count[b] as f64;
        intensity[b] = sum[b] / m;
        if count[b] > 1 {
            let var = ((sum2[b] - m * intensity[b] * intensity[b]) / (m - 1.0)).max(0.0);
            std_error[b] = (var / m).sqrt();
        }
    }
    let bin_volume = (f.torus_side / n_bins as f64).powi(d as i32);
    let total = intensity.iter().sum::<f64>() * bin_volume;
    Ok(IntensityProfile {
        dim: d,
        torus_side: f.torus_side,
        n_bins,
        intensity,
        std_error,
        tags_per_bin: count,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_from_seed, sample_iid};

    #[test]
    fn empirical_measure_matches_recount() {
        let g = TorusGeometry::new(2, 1.0, 8).unwrap();
        let mut rng = rng_from_seed(4);
        let c = sample_iid(&GridMeasure::uniform(g), 300, &mut rng).unwrap();
        let emp = empirical_measure(&c, &g).unwrap();
        assert!((emp.mass() - 1.0).abs() < 1e-12);
        for cell in 0..g.len() {
            let direct = c.points().filter(|p| g.cell_of(p) == cell).count() as f64;
            assert!((emp.values()[cell] * g.cell_volume() * 300.0 - direct).abs() < 1e-9);
        }
        let one = PointConfig::new(Domain::torus(2, 1.0).unwrap(), &[vec![0.3, 0.6]]).unwrap();
        let e = empirical_measure(&one, &g).unwrap();
        assert_eq!(e.values().iter().filter(|&&v| v > 0.0).count(), 1);
        assert!(empirical_measure(&PointConfig::empty(Domain::torus(2, 1.0).unwrap()), &g).is_err());
    }

    #[test]
    fn lattice_matching_grid_gives_uniform_density() {
        let g = TorusGeometry::new(1, 1.0, 8).unwrap();
        let pts: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64 / 16.0]).collect();
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &pts).unwrap();
        let e = empirical_measure(&c, &g).unwrap();
        assert!(e.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_particle_at_tag_origin() {
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &[vec![0.0]]).unwrap();
        let f = tagged_empirical_field(&c, 4, 0.5).unwrap();
        assert_eq!(f.windows[0].coords(), &[0.0]);
        assert!(!f.clipped);
        let g = tagged_empirical_field(&c, 4, 3.0).unwrap();
        assert!(g.clipped);
        assert_eq!(g.window_side, 1.0);
        assert!(g.windows.iter().all(|w| w.len() == 1));
        assert!(tagged_empirical_field(&c, 5, 1.0).is_ok());
        let c2 = PointConfig::new(Domain::torus(2, 1.0).unwrap(), &[vec![0.0, 0.0]]).unwrap();
        assert!(tagged_empirical_field(&c2, 5, 1.0).is_err());
    }

    #[test]
    fn half_torus_configuration_splits_intensity() {
        let n = 200;
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![0.5 * (i as f64 + 0.5) / n as f64]).collect();
        let c = PointConfig::new(Domain::torus(1, 1.0).unwrap(), &pts).unwrap();
        let f = tagged_empirical_field(&c, 400, 8.0).unwrap();
        let prof = intensity_profile(&f, 4).unwrap();
        // tags well inside each half see density 2 or 0
        assert!((prof.intensity[0] - 2.0).abs() < 0.15, "{:?}", prof.intensity);
        assert!((prof.intensity[1] - 2.0).abs() < 0.15);
        assert!(prof.intensity[2] < 0.15 && prof.intensity[3] < 0.15);
        assert!((prof.total - 1.0).abs() < 0.05);
    }

    #[test]
    fn field_round_trips_through_ndjson() {
        let mut rng = rng_from_seed(6);
        let g = TorusGeometry::new(2, 1.0, 4).unwrap();
        let c = sample_iid(&GridMeasure::uniform(g), 50, &mut rng).unwrap();
        let f = tagged_empirical_field(&c, 16, 3.0).unwrap();
        let mut buf = Vec::new();
        f.write_ndjson(&mut buf).unwrap();
        let back = TaggedFieldSample::read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, f);
        assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
