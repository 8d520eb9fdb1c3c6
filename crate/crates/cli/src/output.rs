use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cvqkd_core::keyrate::REPORT_COLUMNS;
use cvqkd_core::{KeyRateReport, Real};
use serde::Serialize;

use crate::config::Mode;

/// Picks and creates the run directory.
///
/// Without `overwrite` a fresh `<verb>-<timestamp>` folder is created under
/// `base` and never reused; with it, files are written straight into `base`.
pub fn create_run_dir(base: &Path, mode: Mode, overwrite: bool) -> io::Result<PathBuf> {
    if overwrite {
        fs::create_dir_all(base)?;
        return Ok(base.to_path_buf());
    }
    fs::create_dir_all(base)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let stem = format!("{}-{stamp}", mode.name());
    for k in 0..1000 {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    Err(io::Error::new(io::ErrorKind::AlreadyExists, "no free run directory name"))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub verb: &'static str,
    pub created: String,
    pub config_path: Option<PathBuf>,
    /// Digest of the config file as read.
    pub config_sha256: Option<String>,
    /// Digest of `resolved_config`.
    pub resolved_config_sha256: String,
    pub seed: u64,
    pub stage_seeds: Option<cvqkd_core::pipeline::StageSeeds>,
    pub precision: String,
    pub resolved_config: String,
    pub files: Vec<String>,
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

pub fn write_reports<T: Real>(path: &Path, reports: &[&KeyRateReport<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record(r.table_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `header` then one record per row of already formatted fields.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> csv::Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
