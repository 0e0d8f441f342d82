//! Run configuration: defaults per solver tier, an optional JSON file, and
//! command-line overrides (flags win over the file, the file over defaults).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::MaskParams;
use crate::mcwf::EnsembleConfig;
use crate::optimize::{ScanSettings, Tier, SCAN_MAX_RATIO, SCAN_MIN_RATIO, SCAN_POINTS_PER_SIGN};
use crate::quantum::QuantumOptions;
use crate::{classical, quantum};

pub const OUTPUT_DIR_ENV: &str = "ATOMLENS_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "atomlens-out";

/// Decay rate of the chromium transition in recoil units.
pub const CHROMIUM_GAMMA: f64 = 238.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Solver(#[from] crate::Error),
    #[error("comparison failed: {}", .0.join("; "))]
    Comparison(Vec<String>),
    #[error("i/o error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
            CliError::Comparison(_) => 3,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), reason: e.to_string() }
    }

    fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), reason: reason.into() }
    }
}

/// Every knob of a run with defaults filled in. Serialized into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tier: Tier,
    pub omega0: f64,
    /// Scaled width `s` for classical tiers, recoil time for quantum tiers.
    pub sigma_t: f64,
    pub r: f64,
    pub gamma: f64,
    /// Atoms in a classical ensemble.
    pub grid: usize,
    /// Histogram bins of a classical density.
    pub bins: usize,
    /// Classical trajectory tolerance.
    pub tol: f64,
    /// Quantum amplitude tolerance.
    pub quantum_tol: f64,
    pub n_max: usize,
    pub density_samples: usize,
    /// Density time; defaults to the located optimum.
    pub density_time: Option<f64>,
    pub trajectories: usize,
    pub bootstrap: usize,
    pub base_seed: u64,
    pub scan_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub output_dir: PathBuf,
    /// Worker threads; `None` lets the pool choose.
    pub workers: Option<usize>,
}

/// The same fields, all optional; used for the file layer and flag layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub omega0: Option<f64>,
    pub sigma_t: Option<f64>,
    pub r: Option<f64>,
    pub gamma: Option<f64>,
    pub grid: Option<usize>,
    pub bins: Option<usize>,
    pub tol: Option<f64>,
    pub quantum_tol: Option<f64>,
    pub n_max: Option<usize>,
    pub density_samples: Option<usize>,
    pub density_time: Option<f64>,
    pub trajectories: Option<usize>,
    pub bootstrap: Option<usize>,
    pub base_seed: Option<u64>,
    pub scan_points: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($($f:ident),*) => { PartialConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            omega0, sigma_t, r, gamma, grid, bins, tol, quantum_tol, n_max, density_samples, density_time,
            trajectories, bootstrap, base_seed, scan_points, r_min, r_max, output_dir, workers
        )
    }
}

impl RunConfig {
    /// Defaults for a tier: the focusing parameters of the standard thin-lens
    /// cases (scaled width 0.07 classically, `sigma_t = 6e-4`,
    /// `Omega_0 = 1.92e5` quantum), red detuning `r = -0.125`.
    pub fn defaults(tier: Tier, output_dir: PathBuf) -> Self {
        let (omega0, sigma_t, gamma) = match tier {
            Tier::ClassicalThin | Tier::ClassicalThick => (1.0, 0.07, 0.0),
            Tier::Quantum => (1.92e5, 6e-4, 0.0),
            Tier::Mcwf => (1.92e5, 6e-4, CHROMIUM_GAMMA),
        };
        let q = QuantumOptions::default();
        let e = EnsembleConfig::default();
        Self {
            tier,
            omega0,
            sigma_t,
            r: -0.125,
            gamma,
            grid: classical::DEFAULT_GRID,
            bins: classical::DEFAULT_BINS,
            tol: classical::DEFAULT_TOL,
            quantum_tol: quantum::DEFAULT_TOL,
            n_max: q.n_max,
            density_samples: e.density_samples,
            density_time: None,
            trajectories: e.trajectories,
            bootstrap: e.bootstrap,
            base_seed: e.base_seed,
            scan_points: SCAN_POINTS_PER_SIGN,
            r_min: SCAN_MIN_RATIO,
            r_max: SCAN_MAX_RATIO,
            output_dir,
            workers: None,
        }
    }

    /// Default output directory: the environment variable if set, else a
    /// directory under the working directory.
    pub fn default_output_dir() -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Resolves defaults <- file <- flags and validates the result.
    pub fn resolve(tier: Tier, file: Option<&Path>, flags: PartialConfig) -> Result<Self, CliError> {
        let layered = match file {
            Some(path) => PartialConfig::load(path)?.overlay(flags),
            None => flags,
        };
        let mut c = Self::defaults(tier, Self::default_output_dir());
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = layered.$f { c.$f = v; })* };
        }
        apply!(
            omega0, sigma_t, r, gamma, grid, bins, tol, quantum_tol, n_max, density_samples, trajectories,
            bootstrap, base_seed, scan_points, r_min, r_max, output_dir
        );
        c.density_time = layered.density_time.or(c.density_time);
        c.workers = layered.workers.or(c.workers);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        MaskParams::new(self.omega0, self.sigma_t, self.r, self.gamma).map_err(field_error)?;
        if self.r == 0.0 {
            return Err(CliError::config("r", "detuning ratio must be nonzero"));
        }
        if self.grid < classical::MIN_GRID {
            return Err(CliError::config("grid", format!("need at least {} atoms", classical::MIN_GRID)));
        }
        if self.bins < 64 {
            return Err(CliError::config("bins", "need at least 64 bins"));
        }
        for (name, v) in [("tol", self.tol), ("quantum_tol", self.quantum_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::config(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if self.n_max == 0 || self.n_max > quantum::N_MAX_CAP {
            return Err(CliError::config("n_max", format!("must lie in [1, {}]", quantum::N_MAX_CAP)));
        }
        if self.density_samples < 16 {
            return Err(CliError::config("density_samples", "need at least 16 samples"));
        }
        if self.trajectories == 0 {
            return Err(CliError::config("trajectories", "need at least one trajectory"));
        }
        if self.scan_points == 0 {
            return Err(CliError::config("scan_points", "need at least one point per sign"));
        }
        if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.r_max.is_finite()) {
            return Err(CliError::config("r_min", "need 0 < r_min <= r_max"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers", "need at least one worker"));
        }
        Ok(())
    }

    pub fn params(&self) -> MaskParams {
        MaskParams { omega0: self.omega0, sigma_t: self.sigma_t, detuning_ratio: self.r, gamma: self.gamma }
    }

    pub fn quantum_options(&self) -> QuantumOptions {
        QuantumOptions { tol: self.quantum_tol, n_max: self.n_max, ..QuantumOptions::default() }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            trajectories: self.trajectories,
            base_seed: self.base_seed,
            first_stream: 0,
            bootstrap: self.bootstrap,
            density_samples: self.density_samples,
        }
    }

    pub fn scan_settings(&self) -> ScanSettings {
        ScanSettings {
            tier: self.tier,
            sigma_t: self.sigma_t,
            omega0: self.omega0,
            gamma: self.gamma,
            grid: self.grid,
            tol: self.tol,
            quantum: self.quantum_options(),
            ensemble: self.ensemble(),
        }
    }
}

fn field_error(e: crate::Error) -> CliError {
    match e {
        crate::Error::InvalidParameter { field: "detuning_ratio", reason } => CliError::config("r", reason),
        crate::Error::InvalidParameter { field, reason } => CliError::config(field, reason),
        crate::Error::ZeroDetuning => CliError::config("r", "detuning ratio must be nonzero"),
        other => CliError::Solver(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"r": 5.0, "sigma_t": 0.2, "grid": 1024}"#).unwrap();
        let flags = PartialConfig { r: Some(-1.0), ..Default::default() };
        let c = RunConfig::resolve(Tier::ClassicalThin, Some(&path), flags).unwrap();
        assert_eq!(c.r, -1.0);
        assert_eq!(c.sigma_t, 0.2);
        assert_eq!(c.grid, 1024);
        assert_eq!(c.bins, classical::DEFAULT_BINS);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"sigma": 0.2}"#).unwrap();
        let err = RunConfig::resolve(Tier::Quantum, Some(&path), PartialConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let err =
            RunConfig::resolve(Tier::Quantum, None, PartialConfig { sigma_t: Some(-1.0), ..Default::default() })
                .unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field == "sigma_t"));
        let err = RunConfig::resolve(Tier::Quantum, None, PartialConfig { r: Some(0.0), ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field == "r"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::resolve(Tier::Mcwf, None, PartialConfig::default()).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.gamma, CHROMIUM_GAMMA);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::from(crate::Error::ZeroDetuning).exit_code(), 2);
        assert_eq!(CliError::Comparison(vec!["FAIL x".into()]).exit_code(), 3);
        assert_eq!(CliError::io(Path::new("/x"), "denied").exit_code(), 1);
    }
}
