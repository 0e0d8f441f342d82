//! Optimal squeezing times and detuning scans.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{self, ClassicalEnsemble};
use crate::error::{Error, Result};
use crate::mask::{detuning_sign, MaskParams, PULSE_CUTOFF};
use crate::mcwf::{self, EnsembleConfig, EnsembleResult};
use crate::quantum::{self, CoherentRun, QuantumOptions};
use crate::trace::{uniform_grid, LocalizationTrace, Minimum};
use crate::units::{TimeUnit, UnitSystem};

/// Samples of the classical search grids.
pub const CLASSICAL_POINTS: usize = 2000;
/// Samples over one revival period for quantum traces.
pub const QUANTUM_POINTS: usize = 4000;
/// Extra samples across the lit part of `[0, t_R]`.
pub const PULSE_POINTS: usize = 400;
/// Samples of an MCWF search window.
pub const MCWF_POINTS: usize = 401;
pub const SCAN_POINTS_PER_SIGN: usize = 40;
pub const SCAN_MIN_RATIO: f64 = 0.05;
pub const SCAN_MAX_RATIO: f64 = 10.0;
const GOLDEN_REL_TOL: f64 = 1e-7;

/// Solver used to produce a trace or scan row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    ClassicalThin,
    ClassicalThick,
    Quantum,
    Mcwf,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::ClassicalThin => "classical-thin",
            Tier::ClassicalThick => "classical-thick",
            Tier::Quantum => "quantum",
            Tier::Mcwf => "mcwf",
        }
    }

    pub fn time_unit(self) -> TimeUnit {
        match self {
            Tier::ClassicalThin | Tier::ClassicalThick => TimeUnit::ClassicalScaled,
            Tier::Quantum | Tier::Mcwf => TimeUnit::Recoil,
        }
    }
}

/// Paraxial focal time in recoil units.
///
/// Blue detuning: `(pi / 2) sqrt(Delta) / Omega_0`; red detuning:
/// `(pi / 2) sqrt(sqrt(Delta^2 + Omega_0^2)) / Omega_0`.
pub fn focal_length(p: &MaskParams) -> Result<f64> {
    let sign = p.detuning_sign()?;
    let delta = p.detuning().abs();
    let curvature = if sign > 0.0 { delta } else { delta.hypot(p.omega0) };
    Ok(0.5 * PI * curvature.sqrt() / p.omega0)
}

/// Paraxial focal time in classical scaled units for pulse width `s`.
pub fn focal_length_scaled(r: f64, s: f64) -> Result<f64> {
    let sign = detuning_sign(r)?;
    let curvature = if sign > 0.0 { r.abs() } else { r.hypot(1.0) };
    Ok(0.5 * PI * (curvature * s).sqrt())
}

/// Thin-lens focal time: the larger of the inverse kick slopes at the node and
/// the antinode, so that either focusing site lies inside `3x` this time.
pub fn thin_focal_time(r: f64) -> Result<f64> {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for x in [0.0, 0.5 * PI] {
        let slope = (classical::thin_lens_kick(x + h, r)? - classical::thin_lens_kick(x - h, r)?) / (2.0 * h);
        worst = worst.max(1.0 / slope.abs());
    }
    Ok(worst)
}

/// Golden-section search for a minimum of `f` on `[a, b]`. Returns the best
/// evaluated point, so the reported value is exactly `f(t)`.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Vertex of the parabola through three points; falls back to the middle
/// point when the samples are not convex.
pub fn parabolic_vertex(t: [f64; 3], v: [f64; 3]) -> (f64, f64) {
    let d1 = (v[1] - v[0]) / (t[1] - t[0]);
    let d2 = (v[2] - v[1]) / (t[2] - t[1]);
    let curv = (d2 - d1) / (t[2] - t[0]);
    if curv <= 0.0 || !curv.is_finite() {
        return (t[1], v[1]);
    }
    let tv = 0.5 * (t[0] + t[1]) - d1 / (2.0 * curv);
    let tv = tv.clamp(t[0], t[2]);
    let val = v[1] + d1 * (tv - t[1]) + curv * (tv - t[0]) * (tv - t[1]);
    (tv, val)
}

/// How the grid minimum of a trace is refined.
pub enum Refine<'a> {
    /// Golden-section search on the underlying solver.
    Solver(&'a mut dyn FnMut(f64) -> Result<f64>),
    /// Parabola through the grid minimum and its neighbours.
    Parabolic,
}

/// Global minimum of a sampled trace, refined inside the bracket around the
/// grid minimum. Errors if the grid minimum sits on the first or last sample.
pub fn find_minimum(trace: &LocalizationTrace, refine: Refine<'_>) -> Result<Minimum> {
    let i = trace.argmin().ok_or(Error::InvalidParameter { field: "trace", reason: "no finite samples".into() })?;
    let n = trace.times.len();
    let (lo, hi) = (trace.times[0], trace.times[n - 1]);
    if i == 0 {
        return Err(Error::WindowTooNarrow { edge: "left", lo, hi });
    }
    if i == n - 1 {
        return Err(Error::WindowTooNarrow { edge: "right", lo, hi });
    }
    let (a, b) = (trace.times[i - 1], trace.times[i + 1]);
    let (t_m, l_min) = match refine {
        Refine::Solver(f) => {
            let (t, v) = golden_section(&mut *f, a, b, GOLDEN_REL_TOL * (hi - lo))?;
            if v <= trace.values[i] {
                (t, v)
            } else {
                (trace.times[i], trace.values[i])
            }
        }
        Refine::Parabolic => parabolic_vertex(
            [a, trace.times[i], b],
            [trace.values[i - 1], trace.values[i], trace.values[i + 1]],
        ),
    };
    Ok(Minimum { t_m, l_min })
}

/// Search window `[lo, hi]` sampled at `points` times. A minimum on the right
/// edge doubles `hi` once; one on the left edge moves `lo` to `floor` once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub floor: f64,
}

impl SearchWindow {
    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.lo, self.hi, self.points)
    }

    fn expanded(&self, edge: &str) -> Option<Self> {
        match edge {
            "right" => Some(Self { hi: self.lo + 2.0 * (self.hi - self.lo), ..*self }),
            _ if self.floor < self.lo => Some(Self { lo: self.floor, ..*self }),
            _ => None,
        }
    }
}

/// A located minimum together with the trace it came from.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub trace: LocalizationTrace,
    pub minimum: Minimum,
    pub window: SearchWindow,
    /// Bootstrap error of `L` at the grid minimum (MCWF only).
    pub stderr: f64,
}

/// Samples `window`, locates the minimum, and retries once with an expanded
/// window when it lands on an edge.
fn search<S, R>(mut window: SearchWindow, unit: TimeUnit, mut sample: S, mut refine: R) -> Result<Optimum>
where
    S: FnMut(&[f64]) -> Result<Vec<f64>>,
    R: FnMut(&[f64], f64) -> Result<f64>,
{
    let mut expanded = false;
    loop {
        let times = window.times();
        let values = sample(&times)?;
        let mut trace = LocalizationTrace::new(times.clone(), values, unit);
        let mut f = |t: f64| refine(&times, t);
        match find_minimum(&trace, Refine::Solver(&mut f)) {
            Ok(m) => {
                trace.minimum = Some(m);
                return Ok(Optimum { trace, minimum: m, window, stderr: 0.0 });
            }
            Err(Error::WindowTooNarrow { edge, .. }) if !expanded => match window.expanded(edge) {
                Some(w) => {
                    window = w;
                    expanded = true;
                }
                None => return Err(Error::WindowTooNarrow { edge, lo: window.lo, hi: window.hi }),
            },
            Err(e) => return Err(e),
        }
    }
}

/// Default thin-lens search window in scaled time.
pub fn thin_window(r: f64) -> Result<SearchWindow> {
    let hi = 3.0 * thin_focal_time(r)?;
    Ok(SearchWindow { lo: 0.0, hi, points: CLASSICAL_POINTS, floor: 0.0 })
}

/// Default thick-lens search window in scaled time for pulse width `s`.
pub fn thick_window(r: f64, s: f64) -> Result<SearchWindow> {
    let hi = 3.0 * focal_length_scaled(r, s)?.max(thin_focal_time(r)?);
    Ok(SearchWindow { lo: 0.0, hi, points: CLASSICAL_POINTS, floor: -PULSE_CUTOFF * s })
}

/// Classical thin-lens optimum for detuning ratio `r` on an ensemble of `grid` atoms.
pub fn optimize_classical_thin(r: f64, grid: usize) -> Result<(ClassicalEnsemble, Optimum)> {
    let ens = classical::thin_lens_ensemble(grid, r)?;
    let window = thin_window(r)?;
    let opt = search(
        window,
        TimeUnit::ClassicalScaled,
        |ts| Ok(ts.par_iter().map(|&t| classical::thin_lens_localization(&ens, t)).collect()),
        |_, t| Ok(classical::thin_lens_localization(&ens, t)),
    )?;
    Ok((ens, opt))
}

/// Classical thick-lens optimum; `p.sigma_t` holds the scaled width `s`.
pub fn optimize_classical_thick(p: &MaskParams, grid: usize, tol: f64) -> Result<Optimum> {
    let window = thick_window(p.detuning_ratio, p.sigma_t)?;
    search(
        window,
        TimeUnit::ClassicalScaled,
        |ts| classical::thick_lens_trace(p, grid, ts, tol),
        |_, t| Ok(classical::thick_lens_trace(p, grid, &[t], tol)?[0]),
    )
}

/// Quantum search grid: `QUANTUM_POINTS` over `[0, t_R]` merged with
/// `PULSE_POINTS` over the lit part of it.
pub fn quantum_window_times(p: &MaskParams, window: &SearchWindow) -> Vec<f64> {
    let mut times = window.times();
    let (_, t_off) = p.pulse_window();
    let lit_hi = t_off.min(window.hi);
    if lit_hi > window.lo {
        times.extend(uniform_grid(window.lo, lit_hi, PULSE_POINTS));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

pub fn quantum_window(p: &MaskParams) -> SearchWindow {
    SearchWindow {
        lo: 0.0,
        hi: UnitSystem::REVIVAL_PERIOD,
        points: QUANTUM_POINTS,
        floor: p.pulse_window().0,
    }
}

/// Coherent quantum optimum over one revival period.
pub fn optimize_quantum(p: &MaskParams, opts: &QuantumOptions) -> Result<(CoherentRun, Optimum)> {
    let mut window = quantum_window(p);
    let mut expanded = false;
    loop {
        let times = quantum_window_times(p, &window);
        let run = quantum::coherent_run(p, &times, opts)?;
        let mut trace = LocalizationTrace::new(times, run.values.clone(), TimeUnit::Recoil);
        let mut f = |t: f64| run.localization_at(t);
        match find_minimum(&trace, Refine::Solver(&mut f)) {
            Ok(m) => {
                trace.minimum = Some(m);
                return Ok((run, Optimum { trace, minimum: m, window, stderr: 0.0 }));
            }
            Err(Error::WindowTooNarrow { edge, .. }) if !expanded => match window.expanded(edge) {
                Some(w) => {
                    window = w;
                    expanded = true;
                }
                None => return Err(Error::WindowTooNarrow { edge, lo: window.lo, hi: window.hi }),
            },
            Err(e) => return Err(e),
        }
    }
}

/// MCWF window: `[0, 2 t_m]` around the coherent optimum `t_m`.
pub fn mcwf_window(p: &MaskParams, coherent_t_m: f64) -> SearchWindow {
    let hi = if coherent_t_m > 0.0 { 2.0 * coherent_t_m } else { PULSE_CUTOFF * p.sigma_t };
    SearchWindow { lo: 0.0, hi, points: MCWF_POINTS, floor: p.pulse_window().0 }
}

/// MCWF optimum: the ensemble trace is sampled on a window around the coherent
/// optimum, and the minimum is refined parabolically (the ensemble is not
/// re-run per point). Densities are recorded at `density_times`.
pub fn optimize_mcwf(
    p: &MaskParams,
    cfg: &EnsembleConfig,
    opts: &QuantumOptions,
    density_times: &[f64],
) -> Result<(EnsembleResult, Optimum)> {
    let (_, coherent) = optimize_quantum(&p.with_gamma(0.0), opts)?;
    let mut window = mcwf_window(p, coherent.minimum.t_m);
    let mut expanded = false;
    loop {
        let times = window.times();
        let ens = mcwf::ensemble_trace(p, &times, density_times, cfg, opts)?;
        let mut trace = LocalizationTrace::new(ens.times.clone(), ens.localization.clone(), TimeUnit::Recoil);
        match find_minimum(&trace, Refine::Parabolic) {
            Ok(m) => {
                trace.minimum = Some(m);
                let i = trace.argmin().unwrap_or(0);
                let stderr = ens.stderr[i];
                return Ok((ens, Optimum { trace, minimum: m, window, stderr }));
            }
            Err(Error::WindowTooNarrow { edge, .. }) if !expanded => match window.expanded(edge) {
                Some(w) => {
                    window = w;
                    expanded = true;
                }
                None => return Err(Error::WindowTooNarrow { edge, lo: window.lo, hi: window.hi }),
            },
            Err(e) => return Err(e),
        }
    }
}

/// Fixed parameters of a detuning scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub tier: Tier,
    /// Recoil-unit pulse width for quantum tiers; scaled width `s` for classical ones.
    pub sigma_t: f64,
    pub omega0: f64,
    pub gamma: f64,
    pub grid: usize,
    pub tol: f64,
    pub quantum: QuantumOptions,
    pub ensemble: EnsembleConfig,
}

impl ScanSettings {
    pub fn params(&self, r: f64) -> Result<MaskParams> {
        MaskParams::new(self.omega0, self.sigma_t, r, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub r: f64,
    pub t_m: f64,
    pub l_min: f64,
    pub stderr: f64,
    /// Set when the row failed; the other fields are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub tier: Tier,
    pub time_unit: TimeUnit,
    pub settings: ScanSettings,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    pub fn row(&self, r: f64) -> Option<&ScanRow> {
        self.rows.iter().find(|row| row.r == r)
    }
}

/// `points` log-spaced ratios per sign over `|r| in [lo, hi]`, red side first,
/// both sides ascending in `r`.
pub fn log_detuning_grid(points: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mags: Vec<f64> = match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let mut m: Vec<f64> =
                (0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).collect();
            m[points - 1] = hi;
            m
        }
    };
    mags.iter().rev().map(|m| -m).chain(mags.iter().copied()).collect()
}

pub fn default_detuning_grid() -> Vec<f64> {
    log_detuning_grid(SCAN_POINTS_PER_SIGN, SCAN_MIN_RATIO, SCAN_MAX_RATIO)
}

/// Optimum for one detuning ratio under the scan settings.
pub fn optimize_row(r: f64, settings: &ScanSettings) -> Result<(Minimum, f64)> {
    match settings.tier {
        Tier::ClassicalThin => {
            let (_, opt) = optimize_classical_thin(r, settings.grid)?;
            Ok((opt.minimum, 0.0))
        }
        Tier::ClassicalThick => {
            let p = MaskParams::new(1.0, settings.sigma_t, r, 0.0)?;
            let opt = optimize_classical_thick(&p, settings.grid, settings.tol)?;
            Ok((opt.minimum, 0.0))
        }
        Tier::Quantum => {
            let (_, opt) = optimize_quantum(&settings.params(r)?.with_gamma(0.0), &settings.quantum)?;
            Ok((opt.minimum, 0.0))
        }
        Tier::Mcwf => {
            let (_, opt) = optimize_mcwf(&settings.params(r)?, &settings.ensemble, &settings.quantum, &[])?;
            Ok((opt.minimum, opt.stderr))
        }
    }
}

/// Per-ratio optimum over `rs`. Rows run in parallel and are assembled in
/// input order; a failing row records its error and the scan continues.
pub fn scan_detuning(rs: &[f64], settings: &ScanSettings) -> ScanResult {
    let rows = rs
        .par_iter()
        .map(|&r| match optimize_row(r, settings) {
            Ok((m, stderr)) => ScanRow { r, t_m: m.t_m, l_min: m.l_min, stderr, error: None },
            Err(e) => ScanRow { r, t_m: f64::NAN, l_min: f64::NAN, stderr: f64::NAN, error: Some(e.to_string()) },
        })
        .collect();
    ScanResult { tier: settings.tier, time_unit: settings.tier.time_unit(), settings: *settings, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn red_focal_length_exceeds_blue() {
        for r in [0.01, 0.125, 1.0, 10.0] {
            let blue = MaskParams::new(4e4, 0.01, r, 0.0).unwrap();
            let red = blue.with_detuning_ratio(-r);
            assert!(focal_length(&red).unwrap() >= focal_length(&blue).unwrap());
        }
    }

    #[test]
    fn blue_focal_length_scales_as_root() {
        let p = MaskParams::new(4e4, 0.01, 0.5, 0.0).unwrap();
        let ratio = focal_length(&p.with_detuning_ratio(2.0)).unwrap() / focal_length(&p).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn red_focal_length_near_resonance() {
        let p = MaskParams::new(4e4, 0.01, -1e-9, 0.0).unwrap();
        let f = focal_length(&p).unwrap();
        assert!((f - 0.5 * PI / 4e4f64.sqrt()).abs() < 1e-9 * f);
        assert!(matches!(focal_length_scaled(0.0, 1.0), Err(Error::ZeroDetuning)));
    }

    #[test]
    fn scaled_and_recoil_focal_lengths_agree() {
        let (omega0, sigma) = (4e4, 0.01);
        let s = omega0 * sigma * sigma;
        for r in [-2.0, -0.1, 0.3, 5.0] {
            let p = MaskParams::new(omega0, sigma, r, 0.0).unwrap();
            let recoil = focal_length(&p).unwrap() * omega0 * sigma;
            assert!((recoil - focal_length_scaled(r, s).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_trace_fails_after_expansion() {
        let window = SearchWindow { lo: 0.0, hi: 1.0, points: 11, floor: 0.0 };
        let err = search(window, TimeUnit::Recoil, |ts| Ok(ts.iter().map(|t| 2.0 - t).collect()), |_, t| Ok(2.0 - t));
        assert!(matches!(err, Err(Error::WindowTooNarrow { edge: "right", .. })));
        let err = search(window, TimeUnit::Recoil, |ts| Ok(ts.to_vec()), |_, t| Ok(t));
        assert!(matches!(err, Err(Error::WindowTooNarrow { edge: "left", .. })));
    }

    #[test]
    fn right_edge_expansion_recovers_minimum() {
        let window = SearchWindow { lo: 0.0, hi: 1.0, points: 21, floor: 0.0 };
        let f = |t: f64| (t - 1.3).powi(2);
        let opt = search(window, TimeUnit::Recoil, |ts| Ok(ts.iter().map(|&t| f(t)).collect()), |_, t| Ok(f(t)))
            .unwrap();
        assert!((opt.minimum.t_m - 1.3).abs() < 1e-6);
        assert_eq!(opt.window.hi, 2.0);
    }

    #[test]
    fn golden_section_on_parabola() {
        let (t, v) = golden_section(|t| Ok((t - 0.3).powi(2) + 1.0), 0.0, 1.0, 1e-10).unwrap();
        assert!((t - 0.3).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parabolic_vertex_is_exact_for_quadratics() {
        let f = |t: f64| 3.0 * (t - 0.42).powi(2) + 0.1;
        let (t, v) = parabolic_vertex([0.3, 0.4, 0.5], [f(0.3), f(0.4), f(0.5)]);
        assert!((t - 0.42).abs() < 1e-12);
        assert!((v - 0.1).abs() < 1e-12);
    }

    #[test]
    fn detuning_grid_layout() {
        let g = default_detuning_grid();
        assert_eq!(g.len(), 80);
        assert!((g[0] + 10.0).abs() < 1e-12);
        assert!((g[39] + 0.05).abs() < 1e-12);
        assert!((g[40] - 0.05).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
