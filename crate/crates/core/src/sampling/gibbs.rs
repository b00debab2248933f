use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pointconfig::{Domain, PointConfig};
use crate::sampling::poisson::CellSampler;
use crate::sampling::{rng_from_seed, SimRng};
use crate::torus::{min_image, validate_kernel, wrap, GridMeasure, KernelSpec, Potential};

/// Inverse temperature convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BetaMode {
    /// `β = θ / N`.
    HighTemperature { theta: f64 },
    Explicit { beta: f64 },
}

/// Target Gibbs measure `exp(−β H_N) dX_N` on the torus of the kernel grid.
#[derive(Debug, Clone)]
pub struct GibbsSpec {
    pub kernel: KernelSpec,
    pub potential: Potential,
    pub n_particles: usize,
    pub beta_mode: BetaMode,
}

impl GibbsSpec {
    pub fn beta(&self) -> f64 {
        match self.beta_mode {
            BetaMode::HighTemperature { theta } => theta / self.n_particles as f64,
            BetaMode::Explicit { beta } => beta,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("Gibbs measure needs at least one particle"));
        }
        match self.beta_mode {
            BetaMode::HighTemperature { theta } if !(theta > 0.0 && theta.is_finite()) => {
                return Err(invalid(format!("theta must be positive, got {theta}")))
            }
            BetaMode::Explicit { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                return Err(invalid(format!("beta must be nonnegative, got {beta}")))
            }
            _ => {}
        }
        let report = validate_kernel(&self.kernel);
        if !report.symmetric {
            return Err(Error::Validation(format!(
                "kernel is not symmetric (max asymmetry {:.3e})",
                report.max_asymmetry
            )));
        }
        Ok(())
    }

    /// `H_N = Σ_{i≠j} g(x_i − x_j) + N Σ_i V(x_i)` for flat coordinates.
    pub fn hamiltonian(&self, coords: &[f64]) -> f64 {
        let g = self.kernel.geometry();
        let (d, side) = (g.dim(), g.side());
        let n = coords.len() / d;
        let mut diff = vec![0.0; d];
        let mut pair = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for a in 0..d {
                    diff[a] = min_image(coords[i * d + a] - coords[j * d + a], side);
                }
                pair += self.kernel.eval_pair(&diff);
            }
        }
        let v: f64 = coords.chunks_exact(d).map(|x| self.potential.eval(side, x)).sum();
        2.0 * pair + n as f64 * v
    }
}

/// Single-particle proposal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// Wrapped Gaussian step of the current scale.
    WrappedGaussian,
    /// Uniform jump to one of the `sites_per_axis^d` lattice nodes `i·T/q`;
    /// particles are snapped to the lattice at initialization. For enumerable toys.
    Lattice { sites_per_axis: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial Gaussian step; `None` means `N^{−1/d} T`.
    pub proposal_scale: Option<f64>,
    pub target_acceptance: f64,
    pub proposal: Proposal,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            burn_in: 1000,
            thin: 10,
            proposal_scale: None,
            target_acceptance: 0.3,
            proposal: Proposal::WrappedGaussian,
        }
    }
}

impl SamplerConfig {
    fn check(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(invalid("target_acceptance must lie in (0, 1)"));
        }
        if let Some(s) = self.proposal_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("proposal_scale must be positive"));
            }
        }
        if let Proposal::Lattice { sites_per_axis: 0 } = self.proposal {
            return Err(invalid("lattice proposal needs at least one site"));
        }
        Ok(())
    }
}

/// Metropolis acceptance probability `min(1, exp(−β ΔH))`.
pub fn acceptance_probability(beta: f64, delta_h: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    (-beta * delta_h).exp().min(1.0)
}

const INIT_ATTEMPTS: usize = 100;

/// Random-scan single-particle Metropolis chain.
#[derive(Debug, Clone)]
pub struct GibbsChain<R = SimRng> {
    spec: GibbsSpec,
    cfg: SamplerConfig,
    rng: R,
    dim: usize,
    side: f64,
    beta: f64,
    coords: Vec<f64>,
    v_cache: Vec<f64>,
    energy: f64,
    scale: f64,
    burned_in: bool,
    sweeps: usize,
}

impl<R: Rng> GibbsChain<R> {
    /// Initializes from `initial` (typically `μ_θ`) or uniformly. Initial
    /// states with non-finite energy are redrawn a bounded number of times.
    pub fn new(
        spec: GibbsSpec,
        cfg: SamplerConfig,
        initial: Option<&GridMeasure>,
        mut rng: R,
    ) -> Result<Self> {
        spec.check()?;
        cfg.check()?;
        let geom = *spec.kernel.geometry();
        let (dim, side, n) = (geom.dim(), geom.side(), spec.n_particles);
        let sampler = match initial {
            Some(mu) => {
                if mu.geometry().dim() != dim || mu.geometry().side() != side {
                    return Err(invalid("initial density lives on a different torus"));
                }
                Some(CellSampler::new(mu)?)
            }
            None => None,
        };
        let scale = cfg.proposal_scale.unwrap_or(side * (n as f64).powf(-1.0 / dim as f64));
        let mut chain = Self {
            beta: spec.beta(),
            spec,
            cfg,
            rng,
            dim,
            side,
            coords: Vec::new(),
            v_cache: Vec::new(),
            energy: 0.0,
            scale,
            burned_in: false,
            sweeps: 0,
        };
        for _ in 0..INIT_ATTEMPTS {
            let mut coords = Vec::with_capacity(n * dim);
            match &sampler {
                Some(s) => {
                    for _ in 0..n {
                        s.sample_into(&mut chain.rng, &mut coords);
                    }
                }
                None => {
                    for _ in 0..n * dim {
                        coords.push(side * chain.rng.random::<f64>());
                    }
                }
            }
            if let Proposal::Lattice { sites_per_axis } = chain.cfg.proposal {
                let q = sites_per_axis as f64;
                for x in coords.iter_mut() {
                    *x = ((*x / side * q).round() % q) * side / q;
                }
            }
            if chain.set_state(&coords).is_ok() {
                return Ok(chain);
            }
        }
        rng = chain.rng;
        let _ = rng;
        Err(Error::Sampler(format!(
            "no initial state with finite energy in {INIT_ATTEMPTS} attempts"
        )))
    }

    /// Replaces the current state; fails if its energy is not finite.
    pub fn set_state(&mut self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.spec.n_particles * self.dim {
            return Err(invalid("state has the wrong number of coordinates"));
        }
        let coords: Vec<f64> = coords.iter().map(|&x| wrap(x, self.side)).collect();
        let energy = self.spec.hamiltonian(&coords);
        if !energy.is_finite() {
            return Err(Error::Sampler("state has non-finite energy".into()));
        }
        self.v_cache = coords.chunks_exact(self.dim).map(|x| self.spec.potential.eval(self.side, x)).collect();
        self.coords = coords;
        self.energy = energy;
        Ok(())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn config(&self) -> PointConfig {
        PointConfig::from_flat(Domain::Torus { dim: self.dim, side: self.side }, self.coords.clone())
            .expect("chain coordinates are wrapped")
    }

    /// Running energy of the current state.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn proposal_scale(&self) -> f64 {
        self.scale
    }

    /// Changes the inverse temperature in place (for annealing).
    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn set_proposal_scale(&mut self, scale: f64) {
        self.scale = scale.clamp(1e-12 * self.side, self.side);
    }

    /// Moves particle `i` to `target` unconditionally; `delta_h` must be
    /// [`Self::delta_energy`] for that move.
    pub fn apply_move(&mut self, i: usize, target: &[f64], delta_h: f64) {
        let d = self.dim;
        self.energy += delta_h;
        self.v_cache[i] = self.spec.potential.eval(self.side, target);
        for (c, &t) in self.coords[i * d..(i + 1) * d].iter_mut().zip(target) {
            *c = wrap(t, self.side);
        }
    }

    /// Recomputes the running energy from scratch.
    pub fn refresh_energy(&mut self) -> f64 {
        self.energy = self.spec.hamiltonian(&self.coords);
        self.energy
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// `H(x with particle i moved to target) − H(x)` in O(N).
    pub fn delta_energy(&self, i: usize, target: &[f64]) -> f64 {
        let d = self.dim;
        let old = &self.coords[i * d..(i + 1) * d];
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut sum = 0.0;
        for j in 0..self.spec.n_particles {
            if j == i {
                continue;
            }
            let other = &self.coords[j * d..(j + 1) * d];
            for k in 0..d {
                a[k] = min_image(target[k] - other[k], self.side);
                b[k] = min_image(old[k] - other[k], self.side);
            }
            sum += self.spec.kernel.eval_pair(&a) - self.spec.kernel.eval_pair(&b);
        }
        let dv = self.spec.potential.eval(self.side, target) - self.v_cache[i];
        2.0 * sum + self.spec.n_particles as f64 * dv
    }

    fn propose(&mut self, i: usize, out: &mut [f64]) {
        let d = self.dim;
        match self.cfg.proposal {
            Proposal::WrappedGaussian => {
                for k in 0..d {
                    let z: f64 = self.rng.sample(StandardNormal);
                    out[k] = wrap(self.coords[i * d + k] + self.scale * z, self.side);
                }
            }
            Proposal::Lattice { sites_per_axis } => {
                for o in out.iter_mut() {
                    let s = self.rng.random_range(0..sites_per_axis);
                    *o = s as f64 * self.side / sites_per_axis as f64;
                }
            }
        }
    }

    /// One Metropolis step on a uniformly chosen particle; returns whether
    /// the move was accepted.
    pub fn step(&mut self) -> bool {
        let n = self.spec.n_particles;
        let d = self.dim;
        let i = self.rng.random_range(0..n);
        let mut target = vec![0.0; d];
        self.propose(i, &mut target);
        let dh = self.delta_energy(i, &target);
        let p = acceptance_probability(self.beta, dh);
        if p >= 1.0 || self.rng.random::<f64>() < p {
            self.apply_move(i, &target, dh);
            true
        } else {
            false
        }
    }

    /// `N` steps; returns the acceptance fraction.
    pub fn sweep(&mut self) -> f64 {
        let n = self.spec.n_particles;
        let accepted = (0..n).filter(|_| self.step()).count();
        self.sweeps += 1;
        accepted as f64 / n as f64
    }

    /// Runs the burn-in, adapting the Gaussian scale toward the target rate.
    pub fn burn_in(&mut self) {
        if self.burned_in {
            return;
        }
        for _ in 0..self.cfg.burn_in {
            let rate = self.sweep();
            if self.cfg.proposal == Proposal::WrappedGaussian {
                self.scale *= (rate - self.cfg.target_acceptance).exp();
                self.scale = self.scale.clamp(1e-9 * self.side, self.side);
            }
        }
        self.burned_in = true;
        self.energy = self.spec.hamiltonian(&self.coords);
    }

    /// Advances `thin` sweeps and reports the resulting state.
    pub fn next_sample(&mut self) -> GibbsSample {
        self.burn_in();
        let mut acc = 0.0;
        for _ in 0..self.cfg.thin {
            acc += self.sweep();
        }
        // resynchronise the running energy against drift
        self.energy = self.spec.hamiltonian(&self.coords);
        GibbsSample {
            sweep_index: self.sweeps,
            energy: self.energy,
            acceptance_rate: acc / self.cfg.thin as f64,
            config: self.config(),
        }
    }
}

impl<R: Rng> Iterator for GibbsChain<R> {
    type Item = GibbsSample;

    fn next(&mut self) -> Option<GibbsSample> {
        Some(self.next_sample())
    }
}

/// A retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSample {
    pub sweep_index: usize,
    pub energy: f64,
    pub acceptance_rate: f64,
    pub config: PointConfig,
}

impl GibbsSample {
    /// Configuration JSON with the chain metadata merged in.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.config.to_json();
        if let Some(obj) = v.as_object_mut() {
            obj.insert("sweep_index".into(), self.sweep_index.into());
            obj.insert("energy".into(), self.energy.into());
            obj.insert("acceptance_rate".into(), self.acceptance_rate.into());
        }
        v
    }
}

/// Infinite stream of thinned Gibbs samples seeded from `cfg.seed`.
pub fn sample_gibbs(
    spec: GibbsSpec,
    cfg: SamplerConfig,
    initial: Option<&GridMeasure>,
) -> Result<GibbsChain<SimRng>> {
    let rng = rng_from_seed(cfg.seed);
    GibbsChain::new(spec, cfg, initial, rng)
}
