mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hotgas::torus::KernelSpec;

use crate::commands::{Ctx, Format, Outcome};
use crate::config::LoadedConfig;
use crate::manifest::{digest_file, now, sha256_hex, ExperimentManifest};

const EXIT_THRESHOLD: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_SAMPLER: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] hotgas::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use hotgas::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_THRESHOLD,
            CliError::Core(e) => match e {
                E::ThermalNonConvergence(_) | E::NonConvergence { .. } => EXIT_SOLVER,
                E::Sampler(_) => EXIT_SAMPLER,
                E::InvalidArgument(_) | E::Shape(_) | E::Format(_) => EXIT_USAGE,
                E::Validation(_) | E::Domain(_) | E::Io(_) => EXIT_THRESHOLD,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hotgas", version, about = "Experiments on high-temperature particle gases on the torus")]
struct Cli {
    /// Run document (TOML), or a manifest.json from an earlier run to replay it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the run document.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output_dir` of the run document.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of configuration streams.
    #[arg(long, global = true, value_enum, default_value = "ndjson")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the thermal equilibrium measure and write it as CSV plus sidecar.
    SolveEq,
    /// Run the Metropolis sampler and write the sample stream.
    Sample,
    /// Build the tagged empirical field of one configuration.
    Field,
    /// Specific relative entropy: Poisson oracle and field windows.
    Entropy,
    /// Check the splitting of the Hamiltonian on random configurations.
    SplitCheck,
    /// Estimate the next-order partition function along the N list.
    KCheck,
    /// Anneal the Hamiltonian and compare with the minimal mean-field energy.
    Minimize,
    /// Estimate the rate of a typical field ball.
    Rate,
    /// Run the checks listed in `[verify]`; exit 0 iff all pass.
    Verify,
    /// Check a kernel for symmetry, integrability and weak positive definiteness.
    ValidateKernel {
        /// Kernel document to check instead of the run document's kernel.
        #[arg(long)]
        kernel: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveEq => "solve-eq",
            Command::Sample => "sample",
            Command::Field => "field",
            Command::Entropy => "entropy",
            Command::SplitCheck => "split-check",
            Command::KCheck => "k-check",
            Command::Minimize => "minimize",
            Command::Rate => "rate",
            Command::Verify => "verify",
            Command::ValidateKernel { .. } => "validate-kernel",
        }
    }
}

/// Loads a run document, or the document recorded in a manifest. Returns the
/// config and the manifest seed, if any.
fn load(path: &Path) -> Result<(LoadedConfig, Option<u64>), CliError> {
    let text = config::read(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Ok(m) = serde_json::from_str::<ExperimentManifest>(&text) {
        m.check_inputs()?;
        return Ok((LoadedConfig::from_text(m.config_text, base)?, Some(m.seed)));
    }
    Ok((LoadedConfig::from_text(text, base)?, None))
}

fn minimal_config() -> LoadedConfig {
    LoadedConfig::from_text("[geometry]\nresolution = 1\n".into(), PathBuf::new()).expect("built-in document parses")
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let standalone_kernel = match &cli.command {
        Command::ValidateKernel { kernel: Some(p) } => Some(p.clone()),
        _ => None,
    };
    let (cfg, manifest_seed) = match (&cli.config, &standalone_kernel) {
        (Some(p), _) => load(p)?,
        (None, Some(_)) => (minimal_config(), None),
        (None, None) => return Err(CliError::Usage("--config is required".into())),
    };
    let seed = cli.seed.or(manifest_seed).unwrap_or(cfg.config.seed);
    let out = match (&cli.out, &cfg.config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => PathBuf::from("hotgas-out"),
    };
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;

    // the run document itself is recorded verbatim in the manifest
    let mut inputs: Vec<PathBuf> = Vec::new();
    let config_text = match &standalone_kernel {
        Some(p) => {
            inputs.push(p.clone());
            config::read(p)?
        }
        None => {
            inputs.extend(cfg.input_files());
            cfg.text.clone()
        }
    };
    let started = now();
    let mut ctx = Ctx { cfg, seed, out: out.clone(), format: cli.format, outputs: Vec::new() };
    let outcome: Outcome = match &cli.command {
        Command::SolveEq => commands::solve_eq(&mut ctx)?,
        Command::Sample => commands::sample(&mut ctx)?,
        Command::Field => commands::field(&mut ctx)?,
        Command::Entropy => commands::entropy(&mut ctx)?,
        Command::SplitCheck => commands::split_check(&mut ctx)?,
        Command::KCheck => commands::k_check(&mut ctx)?,
        Command::Minimize => commands::minimize(&mut ctx)?,
        Command::Rate => commands::rate(&mut ctx)?,
        Command::Verify => commands::verify(&mut ctx)?,
        Command::ValidateKernel { .. } => {
            let kernel = match &standalone_kernel {
                Some(p) => config::read(p).and_then(|t| Ok(KernelSpec::from_toml(&t)?)),
                None => ctx.cfg.kernel(),
            };
            commands::validate_kernel_cmd(&mut ctx, kernel)?
        }
    };
    let manifest = ExperimentManifest {
        command: cli.command.name().into(),
        config_digest: sha256_hex(config_text.as_bytes()),
        config_text,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
        // outputs are named relative to the output directory
        outputs: ctx
            .outputs
            .iter()
            .map(|p| {
                digest_file(p).map(|mut d| {
                    d.path = p.strip_prefix(&out).unwrap_or(p).to_path_buf();
                    d
                })
            })
            .collect::<Result<_, _>>()?,
        started,
        finished: now(),
        pass: outcome.pass,
        summary: outcome.summary,
    };
    manifest.write(&out)?;
    println!("{}", if outcome.pass { "pass" } else { "FAIL: threshold check failed" });
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_THRESHOLD),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
