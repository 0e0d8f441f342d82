//! CSV tables and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::config::{CliError, RunConfig};
use crate::optimize::ScanResult;
use crate::trace::DensityProfile;

pub const TRACE_HEADER: &str = "t,L";
pub const DENSITY_HEADER: &str = "x_over_lambda,P";
pub const SCAN_HEADER: &str = "r,t_m,L_min,stderr";

/// Shortest round-trip-safe rendering: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn table<'a, I>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn trace_csv(times: &[f64], values: &[f64]) -> String {
    let rows: Vec<[f64; 2]> = times.iter().zip(values).map(|(&t, &l)| [t, l]).collect();
    table(TRACE_HEADER, rows.iter().map(|r| &r[..]))
}

pub fn density_csv(d: &DensityProfile) -> String {
    let rows: Vec<[f64; 2]> = d.x.iter().zip(&d.p).map(|(&x, &p)| [x, p]).collect();
    table(DENSITY_HEADER, rows.iter().map(|r| &r[..]))
}

pub fn scan_csv(scan: &ScanResult) -> String {
    let rows: Vec<[f64; 4]> = scan.rows.iter().map(|r| [r.r, r.t_m, r.l_min, r.stderr]).collect();
    table(SCAN_HEADER, rows.iter().map(|r| &r[..]))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Everything needed to re-run an output set.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    /// Command-specific results such as the located minimum.
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, wall: Duration, outputs: Vec<PathBuf>, summary: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.clone(),
            seed: config.base_seed,
            wall_time_s: wall.as_secs_f64(),
            outputs,
            summary,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(&path, e))?;
        write(&path, &(text + "\n"))?;
        Ok(path)
    }
}
