//! Driver for foldtrace experiments: TOML config in, CSV/JSON/SVG/Markdown
//! and a run manifest out.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "foldtrace", version, about = "Fold-aware continuation and preimage counting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustive orthant census of the piecewise-linear Sturm problem.
    Census(RunArgs),
    /// Bifurcation diagrams along lines, with optional multi-line campaign.
    Bifurcate(RunArgs),
    /// Critical curves, flower, tile counts and parity for a plane map.
    Planar(RunArgs),
    /// Jacobian eigenvalues along a vertical line of an elliptic problem.
    Scan(RunArgs),
    /// The six-solution elliptic experiment.
    Solimini(RunArgs),
    /// Reads a Matrix Market operator and reports its lowest spectrum.
    IngestCheck(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Census(_) => "census",
            Command::Bifurcate(_) => "bifurcate",
            Command::Planar(_) => "planar",
            Command::Scan(_) => "scan",
            Command::Solimini(_) => "solimini",
            Command::IngestCheck(_) => "ingest-check",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Census(a) | Command::Bifurcate(a) | Command::Planar(a) | Command::Scan(a) | Command::Solimini(a) | Command::IngestCheck(a) => a,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to out/<config name>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel executor.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self { config: config.into(), out: Some(out.into()), threads: None, seed: None }
    }
}

/// Loads the config, runs `command` and writes the manifest.
pub fn execute(command: &str, args: &RunArgs) -> CliResult<RunManifest> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate(command)?;
    let out = args.out.clone().unwrap_or_else(|| Path::new("out").join(&cfg.name));
    match args.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(|| run_config(command, &cfg, &out, Some(n)))
        }
        None => run_config(command, &cfg, &out, None),
    }
}

/// Runs an already loaded and validated config.
pub fn run_config(command: &str, cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> CliResult<RunManifest> {
    let mut rec = manifest::Recorder::new(out)?;
    let start = Instant::now();
    match command {
        "census" => commands::census(cfg, &mut rec)?,
        "bifurcate" => commands::bifurcate(cfg, &mut rec)?,
        "planar" => commands::planar(cfg, &mut rec)?,
        "scan" => commands::scan(cfg, &mut rec)?,
        "solimini" => commands::solimini(cfg, &mut rec)?,
        "ingest-check" => commands::ingest_check(cfg, &mut rec)?,
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    }
    let wall = start.elapsed().as_secs_f64();
    let mut files = rec.files.clone();
    files.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        command: command.to_string(),
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        threads,
        versions: [("foldtrace".to_string(), foldtrace::VERSION.to_string()), ("foldtrace-cli".to_string(), env!("CARGO_PKG_VERSION").to_string())]
            .into_iter()
            .collect(),
        wall_clock_s: wall,
        counters: rec.counters,
        files,
        notes: rec.notes,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable");
    std::fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}
