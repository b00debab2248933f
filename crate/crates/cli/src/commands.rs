use std::fs;
use std::io::Write;
use std::path::PathBuf;

use hotgas::equilibrium::{mean_field_energy, solve_thermal_equilibrium, ThermalOptions, ThermalSolution};
use hotgas::experiments::{
    calibrate_delta, estimate_next_order_partition, estimate_rate, minimize_hamiltonian, split_hamiltonian,
    RateMode, RateOptions,
};
use hotgas::fields::{
    estimate_specific_entropy_with, intensity_profile, poisson_relative_entropy_rate, tagged_empirical_field,
    EntropyOptions, EntropyReference,
};
use hotgas::pointconfig::{write_ndjson, Domain, PointConfig};
use hotgas::sampling::{
    rng_from_seed, sample_gibbs, sample_iid, sample_poisson_box, sample_poisson_inhomogeneous, substream,
    BetaMode, GibbsSample, GibbsSpec,
};
use hotgas::stats::ks_two_sample;
use hotgas::torus::{validate_kernel, GridMeasure, KernelSpec, Potential};
use rand::RngCore;
use serde_json::json;

use crate::config::{Check, LoadedConfig, Source};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Ndjson,
}

/// Result of one command: threshold verdict plus a JSON summary for the manifest.
pub struct Outcome {
    pub pass: bool,
    pub summary: serde_json::Value,
}

pub struct Ctx {
    pub cfg: LoadedConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub outputs: Vec<PathBuf>,
}

/// Independent seeds for the parts of a run.
mod stream {
    pub const SAMPLER: u64 = 1;
    pub const FIELD: u64 = 2;
    pub const ENTROPY: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const ANNEAL: u64 = 6;
    pub const RATE_TARGET: u64 = 7;
    pub const RATE_CALIBRATION: u64 = 8;
    pub const RATE_ESTIMATE: u64 = 9;
    pub const DICTIONARY: u64 = 10;
}

impl Ctx {
    fn sub_seed(&self, stream: u64) -> u64 {
        substream(self.seed, stream).next_u64()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
        Ok(())
    }

    fn configs_file(&self, stem: &str) -> String {
        match self.format {
            Format::Csv => format!("{stem}.csv"),
            Format::Ndjson => format!("{stem}.ndjson"),
        }
    }

    fn write_configs(&mut self, stem: &str, configs: &[PointConfig]) -> Result<String, CliError> {
        let mut buf = Vec::new();
        match self.format {
            Format::Ndjson => write_ndjson(&mut buf, configs)?,
            Format::Csv => {
                let d = configs.first().map_or(1, |c| c.dim());
                let axes: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
                writeln!(buf, "config,particle,{}", axes.join(",")).map_err(io)?;
                for (k, c) in configs.iter().enumerate() {
                    for (i, p) in c.points().enumerate() {
                        let xs: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                        writeln!(buf, "{k},{i},{}", xs.join(",")).map_err(io)?;
                    }
                }
            }
        }
        let name = self.configs_file(stem);
        self.write(&name, &buf)?;
        Ok(name)
    }

    fn problem(&self) -> Result<(KernelSpec, Potential), CliError> {
        Ok((self.cfg.kernel()?, self.cfg.potential()?))
    }

    fn solve(&self, kernel: &KernelSpec, potential: &Potential) -> Result<ThermalSolution, CliError> {
        let v = potential.sample(kernel.geometry())?;
        Ok(solve_thermal_equilibrium(kernel, &v, self.cfg.config.thermal.theta, &self.cfg.thermal_options())?)
    }

    fn gibbs_spec(&self, kernel: &KernelSpec, potential: &Potential, n: usize) -> GibbsSpec {
        let t = &self.cfg.config.thermal;
        GibbsSpec {
            kernel: kernel.clone(),
            potential: potential.clone(),
            n_particles: n,
            beta_mode: match t.beta {
                Some(beta) => BetaMode::Explicit { beta },
                None => BetaMode::HighTemperature { theta: t.theta },
            },
        }
    }

    /// `count` configurations of `n` particles from the configured source.
    fn draw_configs(
        &self,
        source: Source,
        kernel: &KernelSpec,
        potential: &Potential,
        mu: &GridMeasure,
        n: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<PointConfig>, CliError> {
        match source {
            Source::Iid => {
                (0..count).map(|k| Ok(sample_iid(mu, n, &mut substream(seed, k as u64))?)).collect()
            }
            Source::Poisson => {
                let intensity = scaled(mu, n as f64)?;
                (0..count)
                    .map(|k| Ok(sample_poisson_inhomogeneous(&intensity, &mut substream(seed, k as u64))?))
                    .collect()
            }
            Source::Gibbs => {
                let spec = self.gibbs_spec(kernel, potential, n);
                let mut chain = sample_gibbs(spec, self.cfg.sampler_config(seed), Some(mu))?;
                Ok((0..count).map(|_| chain.next_sample().config).collect())
            }
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn scaled(mu: &GridMeasure, c: f64) -> Result<GridMeasure, CliError> {
    Ok(GridMeasure::new(*mu.geometry(), mu.values().iter().map(|m| m * c).collect())?)
}

fn csv_value(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn validate_kernel_cmd(ctx: &mut Ctx, kernel: Result<KernelSpec, CliError>) -> Result<Outcome, CliError> {
    let kernel = kernel?;
    let report = validate_kernel(&kernel);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    ctx.write("kernel_report.json", text.as_bytes())?;
    Ok(Outcome { pass: report.passes(), summary: serde_json::to_value(&report).unwrap_or_default() })
}

pub fn solve_eq(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let (kernel, potential) = ctx.problem()?;
    let sol = ctx.solve(&kernel, &potential)?;
    let mut csv = Vec::new();
    let mut sidecar = Vec::new();
    sol.write(&mut csv, &mut sidecar)?;
    ctx.write("mu_theta.csv", &csv)?;
    ctx.write("mu_theta.json", &sidecar)?;
    println!("EL residual {:.3e} after {} iterations", sol.residual, sol.iterations);
    Ok(Outcome {
        pass: sol.residual <= ctx.cfg.config.thresholds.el_residual,
        summary: json!({
            "residual": sol.residual,
            "iterations": sol.iterations,
            "energy": sol.energy,
            "el_constant": sol.el_constant,
        }),
    })
}

pub fn sample(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let s = ctx.cfg.config.sampler.clone();
    let (kernel, potential) = ctx.problem()?;
    let mut samples: Vec<GibbsSample> = Vec::new();
    let mut mean_acceptance = None;
    let mut ks = None;
    if s.n_samples > 0 {
        let sol = ctx.solve(&kernel, &potential)?;
        let spec = ctx.gibbs_spec(&kernel, &potential, s.n_particles);
        let mut chain = sample_gibbs(spec, ctx.cfg.sampler_config(ctx.sub_seed(stream::SAMPLER)), Some(&sol.mu_theta))?;
        samples = (0..s.n_samples).map(|_| chain.next_sample()).collect();
        mean_acceptance = Some(samples.iter().map(|x| x.acceptance_rate).sum::<f64>() / samples.len() as f64);
        // first-coordinate marginal against independent draws from μ_θ
        let d = kernel.geometry().dim();
        let pooled: Vec<f64> = samples.iter().flat_map(|x| x.config.coords().iter().step_by(d).copied()).collect();
        let mut rng = rng_from_seed(ctx.sub_seed(stream::FIELD));
        let reference = sample_iid(&sol.mu_theta, pooled.len(), &mut rng)?;
        let refs: Vec<f64> = reference.coords().iter().step_by(d).copied().collect();
        ks = Some(ks_two_sample(&pooled, &refs).1);
    }
    let mut buf = Vec::new();
    match ctx.format {
        Format::Ndjson => {
            for x in &samples {
                serde_json::to_writer(&mut buf, &x.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
                buf.push(b'\n');
            }
        }
        Format::Csv => {
            let d = kernel.geometry().dim();
            let axes: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
            writeln!(buf, "sample,sweep,energy,acceptance,particle,{}", axes.join(",")).map_err(io)?;
            for (k, x) in samples.iter().enumerate() {
                for (i, p) in x.config.points().enumerate() {
                    let xs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                    writeln!(buf, "{k},{},{},{},{i},{}", x.sweep_index, x.energy, x.acceptance_rate, xs.join(","))
                        .map_err(io)?;
                }
            }
        }
    }
    let name = ctx.configs_file("samples");
    ctx.write(&name, &buf)?;
    // the marginal test is a threshold only where the chain targets μ_θ^{⊗N} exactly
    let exact_product = kernel.is_zero() && ctx.cfg.config.thermal.beta.is_none();
    let pass = !exact_product || ks.is_none_or(|p| p >= ctx.cfg.config.thresholds.ks_p_value);
    if let Some(p) = ks {
        println!("{} samples, marginal KS p-value {p:.3}", samples.len());
    }
    Ok(Outcome {
        pass,
        summary: json!({
            "samples": samples.len(),
            "mean_acceptance": mean_acceptance,
            "marginal_ks_p_value": ks,
            "ks_is_threshold": exact_product,
        }),
    })
}

pub fn field(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let f = ctx.cfg.config.field.clone();
    let n = ctx.cfg.config.sampler.n_particles;
    let (kernel, potential) = ctx.problem()?;
    let sol = ctx.solve(&kernel, &potential)?;
    let config = ctx
        .draw_configs(f.source, &kernel, &potential, &sol.mu_theta, n, 1, ctx.sub_seed(stream::FIELD))?
        .remove(0);
    ctx.write_configs("configuration", std::slice::from_ref(&config))?;
    let field = tagged_empirical_field(&config, f.m_tags, f.window_side)?;
    let mut buf = Vec::new();
    field.write_ndjson(&mut buf)?;
    ctx.write("field.ndjson", &buf)?;
    let profile = intensity_profile(&field, f.n_bins)?;
    let mut csv = Vec::new();
    profile.to_csv(&mut csv)?;
    ctx.write("intensity.csv", &csv)?;
    println!("{} tags, window side {}, integrated intensity {:.4}", field.len(), field.window_side, profile.total);
    Ok(Outcome {
        pass: true,
        summary: json!({
            "particles": config.len(),
            "tags": field.len(),
            "window_side": field.window_side,
            "clipped": field.clipped,
            "integrated_intensity": profile.total,
        }),
    })
}

pub fn entropy(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let f = ctx.cfg.config.field.clone();
    let geom = ctx.cfg.geometry()?;
    let d = geom.dim();
    let lambda = f.reference_intensity.unwrap_or(1.0 / geom.volume());
    let reference = EntropyReference::Constant(lambda);
    let opts = EntropyOptions { seed: ctx.sub_seed(stream::ENTROPY), ..Default::default() };

    // oracle: homogeneous Poisson windows have a closed-form specific entropy
    let window = Domain::cube(d, -f.window_side / 2.0, f.window_side / 2.0)?;
    let mut rng = rng_from_seed(ctx.sub_seed(stream::ENTROPY));
    let windows: Vec<PointConfig> = (0..f.oracle_windows)
        .map(|_| sample_poisson_box(f.oracle_intensity, &window, &mut rng))
        .collect::<Result<_, _>>()?;
    let oracle = estimate_specific_entropy_with(&windows, &reference, f.window_side, f.entropy_cell_side, &opts)?;
    let exact = poisson_relative_entropy_rate(f.oracle_intensity, lambda)?;
    let rel = (oracle.value - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);

    // field windows pooled over independent configurations
    let (kernel, potential) = ctx.problem()?;
    let sol = ctx.solve(&kernel, &potential)?;
    let n = ctx.cfg.config.sampler.n_particles;
    let count = opts.min_windows.div_ceil(f.m_tags).max(f.entropy_configs);
    let configs =
        ctx.draw_configs(f.source, &kernel, &potential, &sol.mu_theta, n, count, ctx.sub_seed(stream::FIELD))?;
    let mut pooled = Vec::new();
    let mut side = f.window_side;
    for c in &configs {
        let field = tagged_empirical_field(c, f.m_tags, f.window_side)?;
        side = field.window_side;
        pooled.extend(field.windows);
    }
    let est = estimate_specific_entropy_with(&pooled, &reference, side, f.entropy_cell_side, &opts)?;

    let mut csv = String::from("kind,value,std_error,bias,windows,cells,exact\n");
    csv += &format!("oracle,{},{},{},{},{},{exact}\n", oracle.value, oracle.std_error, oracle.bias, oracle.windows, oracle.cells);
    csv += &format!("field,{},{},{},{},{},\n", est.value, est.std_error, est.bias, est.windows, est.cells);
    ctx.write("entropy.csv", csv.as_bytes())?;
    println!("oracle {:.4} vs exact {exact:.4} (relative error {rel:.3}); field {:.4} ± {:.4}", oracle.value, est.value, est.std_error);
    Ok(Outcome {
        pass: rel <= ctx.cfg.config.thresholds.entropy_relative,
        summary: json!({
            "reference_intensity": lambda,
            "oracle": oracle,
            "oracle_exact": exact,
            "oracle_relative_error": rel,
            "field": est,
        }),
    })
}

pub fn split_check(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let s = ctx.cfg.config.split.clone();
    let (kernel, potential) = ctx.problem()?;
    let sol = ctx.solve(&kernel, &potential)?;
    let configs = ctx.draw_configs(
        Source::Iid,
        &kernel,
        &potential,
        &sol.mu_theta,
        s.n_particles,
        s.n_configs,
        ctx.sub_seed(stream::SPLIT),
    )?;
    let mut csv = String::from("config,h_direct,mean_field_term,fn_term,zeta_term,residual\n");
    let mut worst: f64 = 0.0;
    for (k, c) in configs.iter().enumerate() {
        let r = split_hamiltonian(c, &sol, &kernel, &potential)?;
        worst = worst.max(r.residual);
        csv += &format!("{k},{},{},{},{},{}\n", r.h_direct, r.mean_field_term, r.fn_term, r.zeta_term, r.residual);
    }
    ctx.write("split.csv", csv.as_bytes())?;
    println!("worst relative split residual {worst:.3e} over {} configurations", configs.len());
    Ok(Outcome {
        pass: worst <= ctx.cfg.config.thresholds.split_residual,
        summary: json!({ "configs": configs.len(), "worst_residual": worst }),
    })
}

pub fn k_check(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let (kernel, potential) = ctx.problem()?;
    let opts = ctx.cfg.partition_options(ctx.sub_seed(stream::PARTITION));
    let n_list = ctx.cfg.config.partition.n_list.clone();
    let est = estimate_next_order_partition(&kernel, &potential, ctx.cfg.config.thermal.theta, &n_list, &opts)?;
    let mut csv = String::from("n,mode,log_z,log_k,log_k_over_n,std_error\n");
    for e in &est {
        let mode = serde_json::to_value(e.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        csv += &format!("{},{mode},{},{},{},{}\n", e.n, e.log_z, e.log_k, e.log_k_over_n, e.std_error);
    }
    ctx.write("partition.csv", csv.as_bytes())?;
    let per_n: Vec<f64> = est.iter().map(|e| e.log_k_over_n.abs()).collect();
    let pass = if kernel.is_zero() {
        // K = 1 exactly without interaction
        est.iter().all(|e| e.log_k.abs() <= 1e-9)
    } else {
        !ctx.cfg.config.thresholds.k_monotone || per_n.windows(2).all(|w| w[1] <= w[0])
    };
    println!("|log K / N| = {per_n:.4?}");
    Ok(Outcome { pass, summary: serde_json::to_value(&est).unwrap_or_default() })
}

pub fn minimize(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let m = ctx.cfg.config.minimize.clone();
    let (kernel, potential) = ctx.problem()?;
    let (config, h) = minimize_hamiltonian(&kernel, &potential, m.n, &ctx.cfg.anneal_options(ctx.sub_seed(stream::ANNEAL)))?;
    ctx.write_configs("minimizer", std::slice::from_ref(&config))?;
    // the thermal minimizer at large θ stands in for the minimizer of E_V
    let v = potential.sample(kernel.geometry())?;
    let opts = ThermalOptions {
        tol: 1e-8,
        max_iterations: ctx.cfg.config.thermal.max_iterations.max(1_000_000),
        ..Default::default()
    };
    let sol = solve_thermal_equilibrium(&kernel, &v, m.theta_proxy, &opts)?;
    let e_min = mean_field_energy(&sol.mu_theta, &kernel, &v)?;
    let gap = (h - e_min).abs() / e_min.abs().max(f64::MIN_POSITIVE);
    println!("min H/N^2 {h:.6} vs min E_V {e_min:.6} (relative gap {gap:.4})");
    Ok(Outcome {
        pass: gap <= ctx.cfg.config.thresholds.mean_field_relative,
        summary: json!({ "n": m.n, "h_over_n2": h, "min_energy": e_min, "relative_gap": gap }),
    })
}

pub fn rate(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let r = ctx.cfg.config.rate.clone();
    let f = ctx.cfg.config.field.clone();
    let (kernel, potential) = ctx.problem()?;
    let sol = ctx.solve(&kernel, &potential)?;
    let n = *r.n_list.first().ok_or_else(|| CliError::Usage("rate.n_list is empty".into()))?;
    let mode = match r.source {
        Source::Iid => RateMode::Iid,
        Source::Gibbs => RateMode::Gibbs {
            spec: ctx.gibbs_spec(&kernel, &potential, n),
            sampler: ctx.cfg.sampler_config(ctx.sub_seed(stream::SAMPLER)),
        },
        Source::Poisson => return Err(CliError::Usage("rate.source must be iid or gibbs".into())),
    };
    // typical target: one Poisson draw of intensity N μ_θ
    let intensity = scaled(&sol.mu_theta, n as f64)?;
    let target_cfg = sample_poisson_inhomogeneous(&intensity, &mut rng_from_seed(ctx.sub_seed(stream::RATE_TARGET)))?;
    let target = tagged_empirical_field(&target_cfg, f.m_tags, f.window_side)?;
    let mut opts = RateOptions {
        n_list: r.n_list.clone(),
        samples_per_n: r.samples_per_n,
        m_tags: f.m_tags,
        dictionary_size: r.dictionary_size,
        dictionary_seed: ctx.sub_seed(stream::DICTIONARY),
        seed: ctx.sub_seed(stream::RATE_CALIBRATION),
        n_bins: f.n_bins,
        entropy_cell_side: f.entropy_cell_side,
        ..Default::default()
    };
    opts.delta = match r.delta {
        Some(d) => d,
        None => calibrate_delta(&target, &mode, &sol.mu_theta, n, r.calibration_quantile, &opts)?,
    };
    opts.seed = ctx.sub_seed(stream::RATE_ESTIMATE);
    let est = estimate_rate(&mode, &kernel, &sol, &target, &opts)?;
    let mut csv = String::from("n,samples,hits,estimate,lower,upper\n");
    for p in &est.points {
        csv += &format!("{},{},{},{},{},{}\n", p.n, p.samples, p.hits, csv_value(p.estimate), p.lower, p.upper);
    }
    ctx.write("rate.csv", csv.as_bytes())?;
    let bound = ctx.cfg.config.thresholds.rate_abs;
    let pass = est.points.iter().all(|p| p.estimate.is_some_and(|x| x.abs() <= bound));
    for p in &est.points {
        println!("N={} hits {}/{} rate {}", p.n, p.hits, p.samples, csv_value(p.estimate));
    }
    Ok(Outcome {
        pass,
        summary: json!({ "delta": opts.delta, "estimate": serde_json::to_value(&est).unwrap_or_default() }),
    })
}

pub fn verify(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let checks = ctx.cfg.config.verify.checks.clone();
    let mut csv = String::from("check,pass,detail\n");
    let mut all = true;
    let mut report = Vec::new();
    for check in checks {
        let name = serde_json::to_value(check).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let result = match check {
            Check::ValidateKernel => {
                let k = ctx.cfg.kernel();
                validate_kernel_cmd(ctx, k)
            }
            Check::SolveEq => solve_eq(ctx),
            Check::SplitCheck => split_check(ctx),
            Check::KCheck => k_check(ctx),
            Check::Entropy => entropy(ctx),
            Check::Rate => rate(ctx),
            Check::Minimize => minimize(ctx),
        };
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.summary),
            Err(e) => (false, json!({ "error": e.to_string() })),
        };
        all &= pass;
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        let flat = detail.to_string().replace('"', "'");
        csv += &format!("{name},{pass},\"{flat}\"\n");
        report.push(json!({ "check": name, "pass": pass, "detail": detail }));
    }
    ctx.write("verify.csv", csv.as_bytes())?;
    Ok(Outcome { pass: all, summary: json!(report) })
}
