use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::ThermalSolution;
use crate::error::{invalid, shape, Result};
use crate::fields::{
    estimate_specific_entropy_with, intensity_profile, tagged_empirical_field, EntropyOptions,
    EntropyReference, FieldDictionary, TaggedFieldSample,
};
use crate::pointconfig::PointConfig;
use crate::sampling::{sample_iid, substream, GibbsChain, GibbsSpec, SamplerConfig, SimRng};
use crate::stats::wilson_interval;
use crate::torus::{interaction_energy, GridMeasure, KernelSpec};

/// Source of the `N`-particle configurations.
#[derive(Debug, Clone)]
pub enum RateMode {
    /// Non-interacting gas: i.i.d. draws from `μ_θ`.
    Iid,
    /// Metropolis chain for the given spec; `n_particles` is overridden per `N`.
    Gibbs { spec: GibbsSpec, sampler: SamplerConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub delta: f64,
    pub n_list: Vec<usize>,
    pub samples_per_n: usize,
    pub m_tags: usize,
    pub dictionary_size: usize,
    pub dictionary_seed: u64,
    pub seed: u64,
    /// Tag bins per axis for the intensity `ρ` and the entropy term.
    pub n_bins: usize,
    pub entropy_cell_side: f64,
    /// Normal quantile of the Wilson interval.
    pub z: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            delta: 0.05,
            n_list: vec![64],
            samples_per_n: 1000,
            m_tags: 64,
            dictionary_size: 128,
            dictionary_seed: 0,
            seed: 0,
            n_bins: 4,
            entropy_cell_side: 0.5,
            z: 1.96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub samples: usize,
    pub hits: usize,
    /// `−log(hits / samples) / N`; absent when there were no hits.
    pub estimate: Option<f64>,
    /// Bounds from the Wilson interval of the hit frequency; with zero hits
    /// only `lower` is informative.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub points: Vec<RatePoint>,
    /// `θ E(ρ − μ_θ)`.
    pub energy_term: f64,
    /// Tag-integrated entropy against `Π^{μ_θ(x)}`; `None` when some tag bin
    /// has too few windows for the estimator.
    pub entropy_term: Option<f64>,
    pub predicted: Option<f64>,
    pub ball_radius: f64,
}

struct Ball {
    dict: FieldDictionary,
    centre: Vec<f64>,
    window_side: f64,
}

impl Ball {
    fn new(target: &TaggedFieldSample, size: usize, seed: u64) -> Self {
        let dict = FieldDictionary::new(target.dim, target.torus_side, target.window_side, size, seed);
        let centre = dict.expectations(target);
        Self { dict, centre, window_side: target.window_side }
    }

    fn distance(&self, c: &PointConfig, m_tags: usize) -> Result<f64> {
        let f = tagged_empirical_field(c, m_tags, self.window_side)?;
        if (f.window_side - self.window_side).abs() > 1e-12 * self.window_side {
            return Err(shape("sample windows are clipped below the target window; increase N"));
        }
        let e = self.dict.expectations(&f);
        Ok(e.iter().zip(&self.centre).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

fn draw_distances(
    ball: &Ball,
    mode: &RateMode,
    mu_theta: &GridMeasure,
    n: usize,
    count: usize,
    m_tags: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    match mode {
        RateMode::Iid => (0..count)
            .into_par_iter()
            .map(|s| {
                let mut rng = substream(seed, ((n as u64) << 32) + s as u64);
                ball.distance(&sample_iid(mu_theta, n, &mut rng)?, m_tags)
            })
            .collect(),
        RateMode::Gibbs { spec, sampler } => {
            let mut spec = spec.clone();
            spec.n_particles = n;
            let rng: SimRng = substream(seed, n as u64);
            let mut chain = GibbsChain::new(spec, sampler.clone(), Some(mu_theta), rng)?;
            (0..count).map(|_| ball.distance(&chain.next_sample().config, m_tags)).collect()
        }
    }
}

/// Distance quantile of typical samples to `target`, for choosing a ball
/// radius from an independent calibration run.
pub fn calibrate_delta(
    target: &TaggedFieldSample,
    mode: &RateMode,
    mu_theta: &GridMeasure,
    n: usize,
    quantile: f64,
    opts: &RateOptions,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&quantile) || opts.samples_per_n == 0 {
        return Err(invalid("quantile must lie in [0, 1] and samples must be positive"));
    }
    let ball = Ball::new(target, opts.dictionary_size, opts.dictionary_seed);
    let mut d = draw_distances(&ball, mode, mu_theta, n, opts.samples_per_n, opts.m_tags, opts.seed)?;
    d.sort_by(f64::total_cmp);
    let i = ((d.len() - 1) as f64 * quantile).round() as usize;
    Ok(d[i])
}

/// Resamples the tag-binned intensity of `target` onto the kernel grid as a
/// probability density.
fn intensity_density(target: &TaggedFieldSample, n_bins: usize, grid: &GridMeasure) -> Result<GridMeasure> {
    let prof = intensity_profile(target, n_bins)?;
    let g = grid.geometry();
    let rho = GridMeasure::from_fn(*g, |x| {
        let b = x.iter().fold(0, |acc, &xi| {
            acc * n_bins + ((xi / g.side() * n_bins as f64).floor() as usize).min(n_bins - 1)
        });
        prof.intensity[b]
    })?;
    if rho.mass() <= 0.0 {
        return Err(invalid("target field has no points"));
    }
    rho.normalized()
}

fn entropy_term(
    target: &TaggedFieldSample,
    mu_theta: &GridMeasure,
    opts: &RateOptions,
) -> Option<f64> {
    let d = target.dim;
    let nb = opts.n_bins;
    let bins = nb.pow(d as u32);
    let mut groups: Vec<Vec<PointConfig>> = vec![Vec::new(); bins];
    let mut centres = vec![vec![0.0; d]; bins];
    for b in 0..bins {
        let mut t = b;
        for a in (0..d).rev() {
            centres[b][a] = ((t % nb) as f64 + 0.5) * target.torus_side / nb as f64;
            t /= nb;
        }
    }
    for (tag, w) in target.tags.iter().zip(&target.windows) {
        let b = tag.iter().fold(0, |acc, &x| {
            acc * nb + ((x / target.torus_side * nb as f64).floor() as usize).min(nb - 1)
        });
        groups[b].push(w.clone());
    }
    let cell = opts.entropy_cell_side;
    let box_side = (target.window_side / cell).floor() * cell;
    if box_side < cell {
        return None;
    }
    let bin_volume = (target.torus_side / nb as f64).powi(d as i32);
    let eopts = EntropyOptions { bootstrap: 0, ..Default::default() };
    let mut total = 0.0;
    for (windows, c) in groups.iter().zip(&centres) {
        let lambda = mu_theta.geometry().cell_of(c);
        let reference = EntropyReference::Constant(mu_theta.values()[lambda]);
        let e = estimate_specific_entropy_with(windows, &reference, box_side, cell, &eopts).ok()?;
        total += e.value * bin_volume;
    }
    Some(total)
}

/// Estimates `−(1/N) log P(d(P̄_N, target) ≤ δ)` for each `N` and the
/// predicted rate `θ E(ρ − μ_θ) + ∫ Ent[P̄^x | Π^{μ_θ(x)}] dx` of the target.
pub fn estimate_rate(
    mode: &RateMode,
    kernel: &KernelSpec,
    thermal: &ThermalSolution,
    target: &TaggedFieldSample,
    opts: &RateOptions,
) -> Result<RateEstimate> {
    if !(opts.delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    if opts.n_list.is_empty() || opts.samples_per_n == 0 || opts.n_bins == 0 {
        return Err(invalid("need a nonempty N list, samples and bins"));
    }
    let mu = &thermal.mu_theta;
    if mu.geometry() != kernel.geometry() || target.dim != mu.geometry().dim() {
        return Err(shape("thermal solution, kernel and target disagree on the torus"));
    }
    let ball = Ball::new(target, opts.dictionary_size, opts.dictionary_seed);
    let mut points = Vec::new();
    for &n in &opts.n_list {
        let d = draw_distances(&ball, mode, mu, n, opts.samples_per_n, opts.m_tags, opts.seed)?;
        let hits = d.iter().filter(|&&x| x <= opts.delta).count();
        let (lo, hi) = wilson_interval(hits, opts.samples_per_n, opts.z);
        let nf = n as f64;
        let estimate = (hits > 0).then(|| -(hits as f64 / opts.samples_per_n as f64).ln() / nf);
        points.push(RatePoint {
            n,
            samples: opts.samples_per_n,
            hits,
            estimate,
            lower: -hi.ln() / nf,
            upper: if lo > 0.0 { -lo.ln() / nf } else { f64::INFINITY },
        });
    }
    let rho = intensity_density(target, opts.n_bins, mu)?;
    let diff = rho.as_signed().combine(1.0, &mu.as_signed(), -1.0)?;
    let energy_term = if kernel.is_zero() {
        0.0
    } else {
        thermal.theta * interaction_energy(kernel, &diff, &diff)?
    };
    let entropy_term = entropy_term(target, mu, opts);
    Ok(RateEstimate {
        points,
        energy_term,
        entropy_term,
        predicted: entropy_term.map(|e| e + energy_term),
        ball_radius: opts.delta,
    })
}

