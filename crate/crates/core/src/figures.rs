//! Preset parameter bundles of the `reproduce-figure` command and their reference
//! targets.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use crate::classical;
use crate::error::{Error, Result};
use crate::mask::MaskParams;
use crate::mcwf::EnsembleConfig;
use crate::optimize::{self, ScanResult, ScanSettings, Tier};
use crate::output::{density_csv, scan_csv, trace_csv};
use crate::quantum::{self, QuantumOptions};
use crate::trace::DensityProfile;
use crate::units::UnitSystem;

pub const FIGURES: [u32; 10] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Absolute tolerance on reference `L` values from deterministic solvers.
pub const L_TOL: f64 = 0.02;
/// Relative tolerance on reference `t_m` values.
pub const T_REL_TOL: f64 = 0.05;
/// Absolute `t_m` tolerance, as a fraction of `sigma_t`, for references that
/// quote `t_m = 0`.
pub const ZERO_T_FRACTION: f64 = 0.05;
/// Absolute tolerance on ensemble `L` values.
pub const MCWF_L_TOL: f64 = 0.03;
/// Tolerance on the asymptotes of the classical detuning scans.
pub const ASYMPTOTE_TOL: f64 = 0.03;
/// Relative agreement required between disjoint ensembles.
pub const SEED_REL_TOL: f64 = 0.02;

/// Focusing parameters of the thin-lens quantum figures.
pub const THIN: (f64, f64) = (1.92e5, 6e-4);
/// Focusing parameters of the thick-lens quantum figures.
pub const THICK: (f64, f64) = (4e4, 0.01);
/// Non-adiabatic density figure.
pub const BREAKDOWN: (f64, f64, f64) = (2e4, 0.01, 1e-2);

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
}

impl Check {
    pub fn abs(label: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance;
        Self { label: label.into(), value, target, tolerance, relative: false, pass }
    }

    pub fn rel(label: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance * target.abs();
        Self { label: label.into(), value, target, tolerance, relative: true, pass }
    }

    /// `t_m` against a reference value: 5 % relative, or `0.05 sigma_t` absolute
    /// when the reference is zero.
    pub fn t_m(label: impl Into<String>, value: f64, target: f64, sigma_t: f64) -> Self {
        if target == 0.0 {
            Self::abs(label, value, 0.0, ZERO_T_FRACTION * sigma_t)
        } else {
            Self::rel(label, value, target, T_REL_TOL)
        }
    }

    pub fn flag(label: impl Into<String>, pass: bool) -> Self {
        Self { label: label.into(), value: f64::from(u8::from(pass)), target: 1.0, tolerance: 0.0, relative: false, pass }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let tol = if self.relative { format!("{}%", self.tolerance * 100.0) } else { num(self.tolerance) };
        format!("{verdict} {}: {} (target {} ± {tol})", self.label, num(self.value), num(self.target))
    }
}

fn num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{}", (v * 1e6).round() / 1e6)
    } else {
        format!("{v:.4e}")
    }
}

/// Solver settings shared by every preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigureOptions {
    pub grid: usize,
    pub bins: usize,
    pub tol: f64,
    pub quantum: QuantumOptions,
    pub ensemble: EnsembleConfig,
    pub scan_points: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            grid: classical::DEFAULT_GRID,
            bins: classical::DEFAULT_BINS,
            tol: classical::DEFAULT_TOL,
            quantum: QuantumOptions::default(),
            ensemble: EnsembleConfig::default(),
            scan_points: optimize::SCAN_POINTS_PER_SIGN,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FigureReport {
    pub figure: u32,
    pub checks: Vec<Check>,
    /// Relative path and contents of every data file.
    pub files: Vec<(PathBuf, String)>,
    pub summary: serde_json::Value,
}

impl FigureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.pass).map(Check::line).collect()
    }

    fn file(&mut self, name: String, contents: String) {
        self.files.push((PathBuf::from(name), contents));
    }
}

pub fn reproduce(figure: u32, opts: &FigureOptions) -> Result<FigureReport> {
    let mut report = FigureReport { figure, ..Default::default() };
    match figure {
        2 => classical_thin_figure(&mut report, opts)?,
        3 => classical_scan_figure(&mut report, opts)?,
        4 => classical_thick_figure(&mut report, opts)?,
        5 | 6 => quantum_figure(&mut report, opts, THIN, &[(-0.125, 0.15, 7e-3), (0.125, 0.2, 0.778), (5.0, 0.42, 0.72)])?,
        7 => quantum_scan_figure(&mut report, opts)?,
        8 => quantum_figure(&mut report, opts, THICK, &[(-0.125, 0.1, 0.0), (0.125, 0.37, 1.5e-3), (1.0, 0.31, 5.3e-3)])?,
        9 => breakdown_figure(&mut report, opts)?,
        10 => mcwf_figure(&mut report, opts, THIN, 0.175, 0.15, 7e-3, true)?,
        11 => mcwf_figure(&mut report, opts, THICK, 0.18, 0.1, 0.0, false)?,
        _ => {
            return Err(Error::InvalidParameter { field: "figure", reason: format!("no preset for figure {figure}") })
        }
    }
    Ok(report)
}

fn tag(r: f64) -> String {
    format!("r{r}")
}

fn classical_thin_figure(report: &mut FigureReport, opts: &FigureOptions) -> Result<()> {
    let mut rows = Vec::new();
    for (r, l, t) in [(-0.125, 0.17, 0.82), (0.125, 0.63, 0.52), (5.0, 0.42, 7.38)] {
        let (ens, opt) = optimize::optimize_classical_thin(r, opts.grid)?;
        let m = opt.minimum;
        report.checks.push(Check::abs(format!("r={r} L_min"), m.l_min, l, L_TOL));
        report.checks.push(Check::t_m(format!("r={r} t_m"), m.t_m, t, 1.0));
        let density = classical::classical_density(&classical::evolve_thin(&ens, m.t_m), opts.bins)?;
        report.file(format!("trace_{}.csv", tag(r)), trace_csv(&opt.trace.times, &opt.trace.values));
        report.file(format!("density_{}.csv", tag(r)), density_csv(&density));
        rows.push(json!({"r": r, "t_m": m.t_m, "L_min": m.l_min}));
    }
    report.summary = json!({"tier": "classical-thin", "minima": rows});
    Ok(())
}

fn classical_thick_figure(report: &mut FigureReport, opts: &FigureOptions) -> Result<()> {
    let s = 4.0;
    let mut rows = Vec::new();
    for (r, l, t) in [(-0.125, 0.1, 0.2), (0.125, 0.36, 0.58), (1.0, 0.31, 2.0)] {
        let p = MaskParams::new(1.0, s, r, 0.0)?;
        let opt = optimize::optimize_classical_thick(&p, opts.grid, opts.tol)?;
        let m = opt.minimum;
        report.checks.push(Check::abs(format!("r={r} L_min"), m.l_min, l, L_TOL));
        report.checks.push(Check::t_m(format!("r={r} t_m"), m.t_m, t, s));
        let ens = classical::thick_lens_ensemble(&p, opts.grid, m.t_m, opts.tol)?;
        report.file(format!("trace_{}.csv", tag(r)), trace_csv(&opt.trace.times, &opt.trace.values));
        report.file(format!("density_{}.csv", tag(r)), density_csv(&classical::classical_density(&ens, opts.bins)?));
        rows.push(json!({"r": r, "t_m": m.t_m, "L_min": m.l_min}));
    }
    report.summary = json!({"tier": "classical-thick", "sigma_t": s, "minima": rows});
    Ok(())
}

fn scan_settings(tier: Tier, omega0: f64, sigma_t: f64, opts: &FigureOptions) -> ScanSettings {
    ScanSettings {
        tier,
        sigma_t,
        omega0,
        gamma: 0.0,
        grid: opts.grid,
        tol: opts.tol,
        quantum: opts.quantum,
        ensemble: opts.ensemble,
    }
}

fn detuning_grid(opts: &FigureOptions) -> Vec<f64> {
    optimize::log_detuning_grid(opts.scan_points, optimize::SCAN_MIN_RATIO, optimize::SCAN_MAX_RATIO)
}

fn asymptote_checks(report: &mut FigureReport, panel: &str, scan: &ScanResult) {
    for (r, target) in [(optimize::SCAN_MAX_RATIO, 0.42), (-optimize::SCAN_MIN_RATIO, 0.10)] {
        let value = scan.row(r).map_or(f64::NAN, |row| row.l_min);
        report.checks.push(Check::abs(format!("{panel} r={r} L_min"), value, target, ASYMPTOTE_TOL));
    }
}

/// Classical scans over the scaled widths 0.07 and 4 with full trajectories;
/// the thin-lens scan is written alongside for reference.
fn classical_scan_figure(report: &mut FigureReport, opts: &FigureOptions) -> Result<()> {
    let rs = detuning_grid(opts);
    let a = optimize::scan_detuning(&rs, &scan_settings(Tier::ClassicalThick, 1.0, 0.07, opts));
    let b = optimize::scan_detuning(&rs, &scan_settings(Tier::ClassicalThick, 1.0, 4.0, opts));
    let thin = optimize::scan_detuning(&rs, &scan_settings(Tier::ClassicalThin, 1.0, 0.07, opts));
    asymptote_checks(report, "sigma_t=0.07", &a);
    asymptote_checks(report, "sigma_t=4", &b);
    report.file("scan_a.csv".into(), scan_csv(&a));
    report.file("scan_b.csv".into(), scan_csv(&b));
    report.file("scan_thin.csv".into(), scan_csv(&thin));
    report.summary = json!({"panels": {"a": a, "b": b, "thin": thin}});
    Ok(())
}

/// Red-side quantum thin-lens scan against the classical scan at the same
/// scaled width; the thick quantum scan is emitted without reference targets.
fn quantum_scan_figure(report: &mut FigureReport, opts: &FigureOptions) -> Result<()> {
    let rs = detuning_grid(opts);
    let red: Vec<f64> = rs.iter().copied().filter(|&r| r < 0.0).collect();
    let quantum_a = optimize::scan_detuning(&rs, &scan_settings(Tier::Quantum, THIN.0, THIN.1, opts));
    let classical_a = optimize::scan_detuning(&red, &scan_settings(Tier::ClassicalThick, 1.0, 0.07, opts));
    for row in classical_a.rows.iter() {
        let q = quantum_a.row(row.r).map_or(f64::NAN, |q| q.l_min);
        report.checks.push(Check::abs(format!("r={:.4} quantum vs classical L_min", row.r), q, row.l_min, L_TOL));
    }
    let quantum_b = optimize::scan_detuning(&rs, &scan_settings(Tier::Quantum, THICK.0, THICK.1, opts));
    report.file("scan_a.csv".into(), scan_csv(&quantum_a));
    report.file("scan_a_classical.csv".into(), scan_csv(&classical_a));
    report.file("scan_b.csv".into(), scan_csv(&quantum_b));
    report.summary = json!({"panels": {"a": quantum_a, "a_classical": classical_a, "b": quantum_b}});
    Ok(())
}

/// Density peak location check: red detuning focuses at the antinode
/// (`x = 0`), blue at the node (`x = ±λ/4`).
fn peak_at_focus(d: &DensityProfile, r: f64) -> bool {
    let i = d.p.iter().enumerate().fold(0, |best, (i, &v)| if v > d.p[best] { i } else { best });
    let x = d.x[i];
    let dist = if r < 0.0 { x.abs() } else { 0.25 - x.abs() };
    dist <= 1.0 / 32.0
}

fn quantum_figure(
    report: &mut FigureReport,
    opts: &FigureOptions,
    (omega0, sigma_t): (f64, f64),
    targets: &[(f64, f64, f64)],
) -> Result<()> {
    let mut rows = Vec::new();
    for &(r, l, t) in targets {
        let p = MaskParams::new(omega0, sigma_t, r, 0.0)?;
        let (run, opt) = optimize::optimize_quantum(&p, &opts.quantum)?;
        let m = opt.minimum;
        report.checks.push(Check::abs(format!("r={r} L_min"), m.l_min, l, L_TOL));
        report.checks.push(Check::t_m(format!("r={r} t_m"), m.t_m, t, sigma_t));
        let density = quantum::density_from_modes(&run.state_at(m.t_m)?, opts.ensemble.density_samples);
        report.checks.push(Check::flag(format!("r={r} density peak at focusing site"), peak_at_focus(&density, r)));
        report.file(format!("trace_{}.csv", tag(r)), trace_csv(&opt.trace.times, &opt.trace.values));
        report.file(format!("density_{}.csv", tag(r)), density_csv(&density));
        rows.push(json!({"r": r, "t_m": m.t_m, "L_min": m.l_min, "n_max": run.pulse_end.n_max}));
    }
    report.summary = json!({"tier": "quantum", "omega0": omega0, "sigma_t": sigma_t, "minima": rows});
    Ok(())
}

/// Local maxima of `d` whose value exceeds the period mean, split into those
/// within `λ/16` of the antinode and of the node.
pub fn peak_families(d: &DensityProfile) -> (usize, usize) {
    let near = |a: f64, b: f64| (a - b).abs() <= 1.0 / 16.0;
    let peaks: Vec<f64> = d.local_maxima().into_iter().filter(|&i| d.p[i] > 1.0).map(|i| d.x[i]).collect();
    let antinode = peaks.iter().filter(|&&x| near(x, 0.0)).count();
    let node = peaks.iter().filter(|&&x| near(x.abs(), 0.25)).count();
    (antinode, node)
}

fn breakdown_figure(report: &mut FigureReport, opts: &FigureOptions) -> Result<()> {
    let (omega0, sigma_t, r) = BREAKDOWN;
    let p = MaskParams::new(omega0, sigma_t, r, 0.0)?;
    let state = quantum::evolve_modes(&quantum::init_uniform_ground(&p), &p, 0.0, &opts.quantum)?;
    let density = quantum::density_from_modes(&state, opts.ensemble.density_samples);
    let (antinode, node) = peak_families(&density);
    report.checks.push(Check::flag("density peaks near antinodes and nodes", antinode > 0 && node > 0));
    report.file("density.csv".into(), density_csv(&density));
    report.summary = json!({"antinode_peaks": antinode, "node_peaks": node, "n_max": state.n_max});
    Ok(())
}

fn mcwf_figure(
    report: &mut FigureReport,
    opts: &FigureOptions,
    (omega0, sigma_t): (f64, f64),
    l_decay: f64,
    l_coherent: f64,
    t_target: f64,
    seed_check: bool,
) -> Result<()> {
    let r = -0.125;
    let p = MaskParams::new(omega0, sigma_t, r, 238.0)?;
    let (run, coherent) = optimize::optimize_quantum(&p.with_gamma(0.0), &opts.quantum)?;
    let t_c = coherent.minimum.t_m;
    let (ens, opt) = optimize::optimize_mcwf(&p, &opts.ensemble, &opts.quantum, &[t_c])?;
    let spacing = UnitSystem::REVIVAL_PERIOD / (optimize::QUANTUM_POINTS - 1) as f64;
    report.checks.push(Check::abs("Gamma=238 L_min", opt.minimum.l_min, l_decay, MCWF_L_TOL));
    report.checks.push(Check::abs("Gamma=0 L_min", coherent.minimum.l_min, l_coherent, L_TOL));
    report.checks.push(Check::t_m("Gamma=0 t_m", t_c, t_target, sigma_t));
    report.checks.push(Check::t_m("Gamma=238 t_m", opt.minimum.t_m, t_target, sigma_t));
    report.checks.push(Check::abs("t_m shift", opt.minimum.t_m - t_c, 0.0, spacing));
    let mut summary = json!({
        "coherent": coherent.minimum,
        "mcwf": opt.minimum,
        "stderr": opt.stderr,
        "mean_jumps": ens.mean_jumps,
        "trajectories": opts.ensemble.trajectories,
        "n_max": ens.n_max,
    });
    if seed_check {
        let disjoint = EnsembleConfig { first_stream: opts.ensemble.first_stream + opts.ensemble.trajectories as u64, ..opts.ensemble };
        let (_, other) = optimize::optimize_mcwf(&p, &disjoint, &opts.quantum, &[])?;
        report.checks.push(Check::rel("disjoint ensemble L_min", other.minimum.l_min, opt.minimum.l_min, SEED_REL_TOL));
        summary["disjoint"] = json!(other.minimum);
    }
    let coherent_trace = run.values.clone();
    report.file("trace_gamma238.csv".into(), trace_csv(&opt.trace.times, &opt.trace.values));
    report.file("trace_gamma0.csv".into(), trace_csv(&coherent.trace.times, &coherent_trace));
    report.file("density_gamma238.csv".into(), density_csv(&ens.densities[0]));
    report.file(
        "density_gamma0.csv".into(),
        density_csv(&quantum::density_from_modes(&run.state_at(t_c)?, opts.ensemble.density_samples)),
    );
    report.summary = summary;
    Ok(())
}
