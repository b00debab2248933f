use std::fs;
use std::path::{Path, PathBuf};

use hotgas::equilibrium::ThermalOptions;
use hotgas::experiments::{AnnealOptions, PartitionMode, PartitionOptions};
use hotgas::sampling::{Proposal, SamplerConfig};
use hotgas::torus::{FourierMode, KernelForm, KernelSpec, Potential, SignedGridField, TorusGeometry};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The run document. Every table is optional and falls back to the
/// defaults below; unknown keys are rejected everywhere.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub minimize: MinimizeConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "one")]
    pub dim: usize,
    /// Torus side `T`.
    #[serde(default = "unit")]
    pub side: f64,
    /// Grid nodes per axis.
    pub resolution: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Zero,
    /// `amplitude · Σ_a cos(2π x_a / T)`.
    Cosine { amplitude: f64 },
    Fourier { modes: Vec<FourierMode> },
    Tabulated { values: Vec<f64> },
    RieszPeriodic { s: f64, #[serde(default = "images")] images: usize },
    /// A kernel document as accepted by `validate-kernel`.
    File { path: PathBuf },
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Zero
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Cosine { amplitude: f64, #[serde(default = "one_i")] mode: i64 },
    DoubleWell { depth: f64, tilt: f64 },
    /// Node values as written by the grid CSV writer.
    File { path: PathBuf },
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::Zero
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalConfig {
    pub theta: f64,
    /// Overrides `β = θ / N` in the sampler.
    pub beta: Option<f64>,
    pub tol: f64,
    pub max_iterations: usize,
    pub damping: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        let t = ThermalOptions::default();
        Self { theta: 1.0, beta: None, tol: t.tol, max_iterations: t.max_iterations, damping: t.damping }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_particles: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal_scale: Option<f64>,
    pub target_acceptance: f64,
    /// Sites per axis of the lattice proposal; the Gaussian proposal when absent.
    pub lattice_sites: Option<usize>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            n_particles: 64,
            n_samples: 100,
            burn_in: s.burn_in,
            thin: s.thin,
            proposal_scale: s.proposal_scale,
            target_acceptance: s.target_acceptance,
            lattice_sites: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// i.i.d. draws from `μ_θ`.
    Iid,
    /// Metropolis chain for the configured Gibbs measure.
    Gibbs,
    /// Poisson process of intensity `N μ_θ`.
    Poisson,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub source: Source,
    /// Side `R` of the microscopic window `□_R`.
    pub window_side: f64,
    pub m_tags: usize,
    /// Tag bins per axis of the intensity profile.
    pub n_bins: usize,
    pub entropy_cell_side: f64,
    /// Reference intensity of the entropy command; `None` uses the mean
    /// microscopic density `1 / T^d`.
    pub reference_intensity: Option<f64>,
    /// Number of homogeneous Poisson windows drawn by the entropy oracle.
    pub oracle_windows: usize,
    /// Intensity of the oracle windows.
    pub oracle_intensity: f64,
    /// Configurations pooled by the entropy command (raised to reach 100 windows).
    pub entropy_configs: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            source: Source::Iid,
            window_side: 6.0,
            m_tags: 64,
            n_bins: 4,
            entropy_cell_side: 0.5,
            reference_intensity: None,
            oracle_windows: 10_000,
            oracle_intensity: 2.0,
            entropy_configs: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub n_configs: usize,
    pub n_particles: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { n_configs: 100, n_particles: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionModeConfig {
    Direct,
    ThermodynamicIntegration,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub n_list: Vec<usize>,
    pub mode: PartitionModeConfig,
    pub quadrature_cap: usize,
    pub levels: usize,
    pub burn_in: usize,
    pub samples: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        let p = PartitionOptions::default();
        Self {
            n_list: vec![1, 2, 3, 4],
            mode: PartitionModeConfig::Direct,
            quadrature_cap: p.quadrature_cap,
            levels: p.levels,
            burn_in: p.burn_in,
            samples: p.samples,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeConfig {
    pub n: usize,
    pub restarts: usize,
    pub cooling: f64,
    pub sweeps_per_stage: usize,
    pub temperature_ratio: f64,
    /// θ of the thermal solve that stands in for `min E_V`.
    pub theta_proxy: f64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        let a = AnnealOptions::default();
        Self {
            n: 64,
            restarts: a.restarts,
            cooling: a.cooling,
            sweeps_per_stage: a.sweeps_per_stage,
            temperature_ratio: a.temperature_ratio,
            theta_proxy: 1e4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    /// Configurations come from i.i.d. draws (`iid`) or the Gibbs chain (`gibbs`).
    pub source: Source,
    pub n_list: Vec<usize>,
    pub samples_per_n: usize,
    pub dictionary_size: usize,
    /// Ball radius; calibrated from an independent run when absent.
    pub delta: Option<f64>,
    pub calibration_quantile: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            source: Source::Iid,
            n_list: vec![64],
            samples_per_n: 400,
            dictionary_size: 128,
            delta: None,
            calibration_quantile: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub el_residual: f64,
    pub split_residual: f64,
    /// `|log K| / N` must not increase along the N list.
    pub k_monotone: bool,
    pub entropy_relative: f64,
    pub rate_abs: f64,
    pub mean_field_relative: f64,
    /// Smallest acceptable KS p-value of the sample marginals when `g = 0`.
    pub ks_p_value: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            el_residual: 1e-7,
            split_residual: 1e-6,
            k_monotone: true,
            entropy_relative: 0.15,
            rate_abs: 0.1,
            mean_field_relative: 0.05,
            ks_p_value: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    ValidateKernel,
    SolveEq,
    SplitCheck,
    KCheck,
    Entropy,
    Rate,
    Minimize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub checks: Vec<Check>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: vec![
                Check::ValidateKernel,
                Check::SolveEq,
                Check::SplitCheck,
                Check::KCheck,
                Check::Entropy,
                Check::Rate,
            ],
        }
    }
}

fn one() -> usize {
    1
}

fn one_i() -> i64 {
    1
}

fn unit() -> f64 {
    1.0
}

fn images() -> usize {
    4
}

/// A parsed run document plus what is needed to reproduce it.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    /// Directory that relative paths in the document are resolved against.
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn from_text(text: String, base: PathBuf) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        Ok(Self { config, text, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn geometry(&self) -> Result<TorusGeometry, CliError> {
        let g = &self.config.geometry;
        TorusGeometry::new(g.dim, g.side, g.resolution).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Files the document refers to.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let KernelConfig::File { path } = &self.config.kernel {
            out.push(self.resolve(path));
        }
        if let PotentialConfig::File { path } = &self.config.potential {
            out.push(self.resolve(path));
        }
        out
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        let g = self.geometry()?;
        let k = match &self.config.kernel {
            KernelConfig::Zero => Ok(KernelSpec::zero(g)),
            KernelConfig::Cosine { amplitude } => KernelSpec::cosine(g, *amplitude),
            KernelConfig::Fourier { modes } => KernelSpec::new(g, KernelForm::Fourier { modes: modes.clone() }),
            KernelConfig::Tabulated { values } => KernelSpec::tabulated(g, values.clone()),
            KernelConfig::RieszPeriodic { s, images } => KernelSpec::riesz_periodic(g, *s, *images),
            KernelConfig::File { path } => {
                let text = read(&self.resolve(path))?;
                let k = KernelSpec::from_toml(&text)?;
                if k.geometry() != &g {
                    return Err(CliError::Usage("kernel file grid differs from [geometry]".into()));
                }
                Ok(k)
            }
        };
        Ok(k?)
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        Ok(match &self.config.potential {
            PotentialConfig::Zero => Potential::Zero,
            PotentialConfig::Cosine { amplitude, mode } => Potential::Cosine { amplitude: *amplitude, mode: *mode },
            PotentialConfig::DoubleWell { depth, tilt } => Potential::DoubleWell { depth: *depth, tilt: *tilt },
            PotentialConfig::File { path } => {
                let text = read(&self.resolve(path))?;
                let f = SignedGridField::from_csv(text.as_bytes())?;
                if f.geometry() != &self.geometry()? {
                    return Err(CliError::Usage("potential file grid differs from [geometry]".into()));
                }
                Potential::Grid(f)
            }
        })
    }

    pub fn thermal_options(&self) -> ThermalOptions {
        let t = &self.config.thermal;
        ThermalOptions { tol: t.tol, max_iterations: t.max_iterations, damping: t.damping, initial: None }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        let s = &self.config.sampler;
        SamplerConfig {
            seed,
            burn_in: s.burn_in,
            thin: s.thin,
            proposal_scale: s.proposal_scale,
            target_acceptance: s.target_acceptance,
            proposal: match s.lattice_sites {
                Some(q) => Proposal::Lattice { sites_per_axis: q },
                None => Proposal::WrappedGaussian,
            },
        }
    }

    pub fn partition_options(&self, seed: u64) -> PartitionOptions {
        let p = &self.config.partition;
        PartitionOptions {
            mode: match p.mode {
                PartitionModeConfig::Direct => PartitionMode::Direct,
                PartitionModeConfig::ThermodynamicIntegration => PartitionMode::ThermodynamicIntegration,
            },
            quadrature_cap: p.quadrature_cap,
            levels: p.levels,
            burn_in: p.burn_in,
            samples: p.samples,
            seed,
            thermal: self.thermal_options(),
            ..Default::default()
        }
    }

    pub fn anneal_options(&self, seed: u64) -> AnnealOptions {
        let m = &self.config.minimize;
        AnnealOptions {
            restarts: m.restarts,
            seed,
            cooling: m.cooling,
            sweeps_per_stage: m.sweeps_per_stage,
            temperature_ratio: m.temperature_ratio,
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedConfig, CliError> {
        LoadedConfig::from_text(text.into(), PathBuf::from("."))
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let c = load("[geometry]\nresolution = 32\n").unwrap();
        assert_eq!(c.config.geometry.dim, 1);
        assert_eq!(c.config.thermal.theta, 1.0);
        assert!(matches!(c.config.kernel, KernelConfig::Zero));
        assert_eq!(c.config.verify.checks.len(), 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load("[geometry]\nresolution = 32\ncolour = 1\n").is_err());
        assert!(load("bogus = 1\n[geometry]\nresolution = 32\n").is_err());
        assert!(load("[geometry]\nresolution = 32\n[kernel]\nform = \"cosine\"\namplitude = 1.0\nphase = 0.0\n").is_err());
    }

    #[test]
    fn built_in_forms_parse() {
        let c = load(
            "[geometry]\nresolution = 32\n[kernel]\nform = \"cosine\"\namplitude = 1.0\n\
             [potential]\nkind = \"double_well\"\ndepth = 1.0\ntilt = 0.2\n\
             [verify]\nchecks = [\"split-check\", \"k-check\"]\n",
        )
        .unwrap();
        assert!(!c.kernel().unwrap().is_zero());
        assert_eq!(c.potential().unwrap(), Potential::DoubleWell { depth: 1.0, tilt: 0.2 });
        assert_eq!(c.config.verify.checks, vec![Check::SplitCheck, Check::KCheck]);
    }
}
