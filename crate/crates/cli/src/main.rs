//! `cvqkd`: batch front end for simulation runs, key-rate evaluation,
//! distance sweeps, loss/noise maps and the reference results table.

mod commands;
mod config;
mod output;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{LoadedConfig, Mode, RunConfig};
use output::Manifest;

/// Block size of the full-scale run selected by `--full-block`.
const FULL_BLOCK_N: usize = 16_000_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}", stage = .source.stage())]
    Pipeline {
        #[from]
        source: cvqkd_core::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Pipeline { .. } | Self::Output(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Output(e.to_string())
    }
}

macro_rules! stage_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Pipeline { source: e.into() }
            }
        }
    )*};
}

stage_error!(cvqkd_core::KeyRateError, cvqkd_core::EstimationError, cvqkd_core::ConstellationError);

#[derive(Debug, Parser)]
#[command(name = "cvqkd", version, about = "CV-QKD link simulator and key-rate calculator")]
struct Cli {
    #[arg(value_enum)]
    verb: Mode,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Base output directory, overriding `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write into DIR itself instead of a fresh timestamped folder.
    #[arg(long)]
    overwrite: bool,
    /// Simulate the full 1.6e7-symbol block instead of the configured size.
    #[arg(long)]
    full_block: bool,
}

fn resolve(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let mut loaded = config::load(cli.config.as_deref())?;
    let cfg = &mut loaded.config;
    if let Some(mode) = cfg.mode {
        if mode != cli.verb {
            return Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                mode.name(),
                cli.verb.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if cli.full_block {
        cfg.block_n = FULL_BLOCK_N;
    }
    cfg.validate()?;
    Ok(loaded)
}

fn execute(verb: Mode, cfg: &RunConfig, dir: &Path) -> Result<commands::RunResult, CliError> {
    match verb {
        Mode::Simulate => commands::simulate(cfg, dir),
        Mode::Keyrate => commands::keyrate(cfg, dir),
        Mode::Sweep => commands::sweep(cfg, dir),
        Mode::Contour => commands::contour(cfg, dir),
        Mode::Table1 => commands::table1(cfg, dir),
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let loaded = resolve(cli)?;
    let cfg = &loaded.config;
    let dir = output::create_run_dir(&cfg.output.dir, cli.verb, cli.overwrite)?;
    let result = match execute(cli.verb, cfg, &dir) {
        Ok(r) => r,
        Err(e) => {
            if !cli.overwrite {
                let _ = std::fs::remove_dir_all(&dir);
            }
            return Err(e);
        }
    };
    let resolved = cfg.to_toml();
    let mut files = result.files;
    files.push("config.toml".into());
    files.push("manifest.json".into());
    std::fs::write(dir.join("config.toml"), &resolved)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        verb: cli.verb.name(),
        created: chrono::Local::now().to_rfc3339(),
        config_path: loaded.source.clone(),
        config_sha256: loaded.source_sha256.clone(),
        resolved_config_sha256: config::sha256_hex(resolved.as_bytes()),
        seed: cfg.seed,
        stage_seeds: result.stage_seeds,
        precision: format!("{:?}", cfg.precision).to_lowercase(),
        resolved_config: resolved,
        files,
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
