//! `acia`: generate environments, train, evaluate, verify kernels and
//! aggregate reports. Every artifact gets a sidecar manifest with the
//! resolved configuration, seed and file digests.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 verification
//! failure, 3 training divergence.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{EvalReport, Invocation};
pub use config::{load_config, ExperimentConfig};
pub use manifest::{ExperimentManifest, TOOL_VERSION};

/// Overrides the seed when `--seed` is absent.
pub const SEED_ENV: &str = "ACIA_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("training diverged at step {step}: objective {value}")]
    Divergence { step: usize, value: f64 },
    #[error(transparent)]
    Core(acia_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed(_) => 2,
            CliError::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

impl From<acia_core::Error> for CliError {
    fn from(e: acia_core::Error) -> Self {
        match e {
            acia_core::Error::DivergenceDetected { step, value } => CliError::Divergence { step, value },
            other => CliError::Core(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "acia", version, about = "Anti-causal invariant representation learning runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Seed; overrides the ACIA_SEED environment variable and the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset from the config's `gen` section.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train a model on one or more dataset files.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Evaluate a checkpoint and write a metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional config supplying the `intervention` section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Name used for this run in `report` (defaults to acia or erm).
        #[arg(long)]
        label: Option<String>,
        /// Directory for z_L / z_H matrices as CSV.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run the kernel and intervention property suite.
    Verify {
        /// Extra SCM (JSON) to check alongside the built-in ones.
        #[arg(long)]
        scm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate eval reports into a CSV grid.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Accept reports from different tool versions.
        #[arg(long)]
        force: bool,
    },
    /// Repeat a run from its manifest and compare output digests.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the primary output here instead of the recorded path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<(u64, &'static str), CliError> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        let s = v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation { path: SEED_ENV.into(), message: format!("`{v}` is not a u64") })?;
        return Ok((s, "env"));
    }
    Ok(config.map_or((0, "default"), |s| (s, "config")))
}

fn invocation(command: Command) -> Result<Invocation, CliError> {
    let inv = match command {
        Command::Gen { config, out, seed } => {
            let cfg = load_config(&config)?;
            let (seed, source) = resolve_seed(seed.seed, cfg.seed)?;
            Invocation::new("gen", cfg, seed, source, vec![], out)
        }
        Command::Train { config, data, out, seed } => {
            let cfg = load_config(&config)?;
            let (seed, source) = resolve_seed(seed.seed, cfg.seed)?;
            Invocation::new("train", cfg, seed, source, data, out)
        }
        Command::Eval { model, data, out, config, label, export, seed } => {
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => ExperimentConfig::default(),
            };
            let (seed, source) = resolve_seed(seed.seed, cfg.seed)?;
            let mut inputs = vec![model];
            inputs.extend(data);
            let mut inv = Invocation::new("eval", cfg, seed, source, inputs, out);
            inv.options = serde_json::json!({ "label": label, "export": export });
            inv
        }
        Command::Verify { scm, out } => {
            let inputs: Vec<PathBuf> = scm.into_iter().collect();
            Invocation::new("verify", ExperimentConfig::default(), 0, "default", inputs, out)
        }
        Command::Report { inputs, out, force } => {
            let mut inv = Invocation::new("report", ExperimentConfig::default(), 0, "default", inputs, out);
            inv.options = serde_json::json!({ "force": force });
            inv
        }
        Command::Rerun { manifest, out } => {
            let m = ExperimentManifest::read(&manifest)?;
            let stale = m.stale_inputs()?;
            if !stale.is_empty() {
                return Err(CliError::Usage(format!("inputs changed since the manifest was written: {}", stale.join(", "))));
            }
            if m.tool_version != TOOL_VERSION {
                return Err(CliError::Usage(format!(
                    "manifest was written by version {}, this is {TOOL_VERSION}",
                    m.tool_version
                )));
            }
            let mut inv = Invocation::from_manifest(&m)?;
            let recorded = m.outputs.first().map(|d| d.sha256.clone());
            if let Some(o) = out {
                inv.out = o;
            }
            inv.expect_primary = recorded;
            inv
        }
    };
    Ok(inv)
}

/// Parse `argv` (including the program name), run the command and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match invocation(cli.command).and_then(|inv| inv.execute()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
