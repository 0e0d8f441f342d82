//! Monte Carlo wave-function treatment of spontaneous emission.
//!
//! Each trajectory evolves under the non-Hermitian ladder Hamiltonian (decay
//! `-i Gamma/2` on the excited ladder) until its norm falls to `1 - eps`, then
//! collapses onto the ground ladder with a photon recoil `1 - k'` added to the
//! continuous momentum offset. Densities and localization factors are
//! equal-weight averages over normalized trajectories.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::MaskParams;
use crate::ode::{Control, Dopri5, StepView, Tolerance};
use crate::quantum::{
    self, free_propagate, next_truncation, norm_sqr, period_density, pulse_segment, ModeState,
    QuantumOptions, SegmentEnd,
};
use crate::rng::{Stream, BOOTSTRAP_STREAM};
use crate::trace::DensityProfile;
use crate::units::{TimeUnit, UnitSystem};
use std::f64::consts::PI;

pub const DEFAULT_TRAJECTORIES: usize = 5000;
pub const DEFAULT_BOOTSTRAP: usize = 200;

/// Inverse CDF of the recoil distribution `N(k') = (3/8k)(1 + (k'/k)^2)`,
/// returned as `k'/k`.
///
/// Solves `v^3 + 3 v = 8u - 4` through `v = 2 sinh(asinh(4u - 2)/3)` and polishes
/// with one Newton step.
pub fn sample_photon_momentum(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let c = 4.0 * u - 2.0;
    let mut v = 2.0 * (c.asinh() / 3.0).sinh();
    let f = v * v * v + 3.0 * v - 2.0 * c;
    v -= f / (3.0 * v * v + 3.0);
    v.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpRecord {
    pub t: f64,
    /// Emitted photon momentum along the standing wave, in units of `hbar k`.
    pub k_prime: f64,
}

/// One quantum trajectory between collapses.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub state: ModeState,
    /// Pending jump threshold: the next jump happens when the norm reaches `1 - eps`.
    pub epsilon: f64,
    pub jumps: Vec<JumpRecord>,
    pub stream: Stream,
}

impl TrajectoryState {
    /// Ground-state plane wave at the pulse start with a fresh threshold.
    pub fn start(p: &MaskParams, n_max: usize, mut stream: Stream) -> Self {
        let (t_on, _) = p.pulse_window();
        let epsilon = stream.open_uniform();
        Self { state: ModeState::uniform_ground(n_max, t_on), epsilon, jumps: Vec::new(), stream }
    }

    pub fn threshold(&self) -> f64 {
        1.0 - self.epsilon
    }
}

/// Outcome of [`detect_jump`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpOutcome {
    /// Norm reached the threshold at this time; the state is evaluated there.
    Jump(f64),
    /// `t_final` reached without a jump.
    NoJump,
}

/// Evolves a trajectory under the non-Hermitian Hamiltonian until its norm
/// hits the pending threshold or `t_final` is reached.
pub fn detect_jump(
    traj: &mut TrajectoryState,
    p: &MaskParams,
    t_final: f64,
    opts: &QuantumOptions,
) -> Result<JumpOutcome> {
    let mut stepper = Dopri5::new(traj.state.amplitudes().len(), Tolerance::new(opts.tol, opts.tol * 1e-2));
    match advance(traj, p, opts, &mut stepper, t_final, &[], &mut |_, _| {})? {
        Advance::Jump(t) => Ok(JumpOutcome::Jump(t)),
        Advance::Done => Ok(JumpOutcome::NoJump),
        Advance::Overflow(pop) => Err(Error::TruncationOverflow { n_max: traj.state.n_max, population: pop }),
    }
}

enum Advance {
    Jump(f64),
    Done,
    Overflow(f64),
}

/// Advances to the next jump or `t_final`, handing the unnormalized state to
/// `sample` at each of the sorted `wanted` times passed on the way.
fn advance<F>(
    traj: &mut TrajectoryState,
    p: &MaskParams,
    opts: &QuantumOptions,
    stepper: &mut Dopri5<Complex64>,
    t_final: f64,
    wanted: &[f64],
    sample: &mut F,
) -> Result<Advance>
where
    F: FnMut(f64, &ModeState),
{
    let (t_on, t_off) = p.pulse_window();
    let threshold = traj.threshold();
    let decays = p.gamma > 0.0;
    let s = &mut traj.state;
    if s.t < t_on {
        // The initial ground state cannot decay before the light arrives.
        let stop = t_on.min(t_final);
        sample_dark(s, p, stop, wanted, sample);
        free_propagate(s, p, stop - s.t);
    }
    if s.t < t_off && t_final > s.t {
        let end = t_final.min(t_off);
        let sigma_tol = 1e-3 * p.sigma_t;
        let p0 = s.p0;
        let mut buf = vec![Complex64::new(0.0, 0.0); s.amplitudes().len()];
        let result = pulse_segment(s, p, end, opts, stepper, |view, nm| {
            let crossing = if decays && norm_sqr(view.y_new) <= threshold {
                Some(bisect_crossing(view, threshold, sigma_tol, &mut buf))
            } else {
                None
            };
            let limit = crossing.unwrap_or(view.t_new);
            sample_in_step(view, nm, p0, limit, wanted, &mut buf, sample);
            match crossing {
                Some(tc) => Control::StopAt(tc),
                None => Control::Continue,
            }
        })?;
        match result {
            SegmentEnd::Overflow(pop) => return Ok(Advance::Overflow(pop)),
            SegmentEnd::Stopped(t) => return Ok(Advance::Jump(t)),
            SegmentEnd::Reached => {}
        }
    }
    if t_final > s.t {
        // Light off: norm(t) = N_g + N_e exp(-Gamma (t - t1)).
        let t1 = s.t;
        let n_g = s.ground_population();
        let n_e = s.excited_population();
        let t_jump = if decays && n_e > 0.0 && threshold > n_g {
            let ratio = (threshold - n_g) / n_e;
            if ratio < 1.0 {
                t1 - ratio.ln() / p.gamma
            } else {
                t1
            }
        } else {
            f64::INFINITY
        };
        let stop = t_final.min(t_jump);
        sample_dark(s, p, stop, wanted, sample);
        free_propagate(s, p, stop - t1);
        s.t = stop;
        if t_jump <= t_final {
            return Ok(Advance::Jump(t_jump));
        }
    }
    Ok(Advance::Done)
}

/// Locates `norm(t) = threshold` inside an accepted step by bisection on the
/// dense output.
fn bisect_crossing(view: &StepView<'_, Complex64>, threshold: f64, tol: f64, buf: &mut [Complex64]) -> f64 {
    let (mut lo, mut hi) = (view.t_old, view.t_new);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        view.interpolate(mid, buf);
        if norm_sqr(buf) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn sample_in_step<F>(
    view: &StepView<'_, Complex64>,
    n_max: usize,
    p0: f64,
    limit: f64,
    wanted: &[f64],
    buf: &mut [Complex64],
    sample: &mut F,
) where
    F: FnMut(f64, &ModeState),
{
    let first = wanted.partition_point(|&t| t <= view.t_old);
    for &t in wanted[first..].iter().take_while(|&&t| t <= limit) {
        view.interpolate(t, buf);
        let mut s = ModeState::zeros(n_max, p0, t);
        s.amplitudes_mut().copy_from_slice(buf);
        sample(t, &s);
    }
}

fn sample_dark<F>(s: &ModeState, p: &MaskParams, stop: f64, wanted: &[f64], sample: &mut F)
where
    F: FnMut(f64, &ModeState),
{
    let first = wanted.partition_point(|&t| t <= s.t);
    for &t in wanted[first..].iter().take_while(|&&t| t <= stop) {
        let mut c = s.clone();
        free_propagate(&mut c, p, t - s.t);
        c.t = t;
        sample(t, &c);
    }
}

/// Collapses the wave function onto the ground ladder after emitting a photon
/// with momentum `k_prime` (units of `hbar k`).
pub fn collapse(traj: &mut TrajectoryState, k_prime: f64) -> Result<()> {
    let s = &mut traj.state;
    let pe = s.excited_population();
    if pe <= 0.0 || !pe.is_finite() {
        return Err(Error::EmptyExcited { t: s.t });
    }
    let scale = 1.0 / pe.sqrt();
    let n_max = s.n_max;
    let excited: Vec<Complex64> = s.excited().to_vec();
    let mut next = ModeState::zeros(n_max, s.p0 + 1.0 - k_prime, s.t);
    // Excited mode n (momentum p0 + 2n + 1) becomes ground mode n of the
    // shifted ladder (momentum p0 + 1 - k' + 2n). The lowest excited mode has
    // no ground counterpart and must be empty for a valid truncation.
    for (i, c) in excited.iter().enumerate().skip(1) {
        next.ground_slice_mut()[i - 1] = c * scale;
    }
    *s = next;
    traj.jumps.push(JumpRecord { t: s.t, k_prime });
    traj.epsilon = traj.stream.open_uniform();
    Ok(())
}

/// Sorted sample times for a trajectory or ensemble run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePlan {
    /// Times at which `<cos 2kx>` is recorded.
    pub times: Vec<f64>,
    /// Times at which the density is recorded.
    pub density_times: Vec<f64>,
    /// Points per period for densities.
    pub density_samples: usize,
}

impl SamplePlan {
    pub fn new(times: &[f64], density_times: &[f64], density_samples: usize) -> Self {
        let mut times = times.to_vec();
        times.sort_by(f64::total_cmp);
        let mut density_times = density_times.to_vec();
        density_times.sort_by(f64::total_cmp);
        Self { times, density_times, density_samples }
    }

    fn merged(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.times.iter().chain(&self.density_times).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    fn end(&self) -> f64 {
        let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NEG_INFINITY);
        last(&self.times).max(last(&self.density_times))
    }
}

/// Collects `<cos 2kx>` and densities at the planned times.
struct Recorder<'a> {
    plan: &'a SamplePlan,
    cos2: Vec<f64>,
    dens: Vec<Vec<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(plan: &'a SamplePlan) -> Self {
        Self { plan, cos2: vec![f64::NAN; plan.times.len()], dens: vec![Vec::new(); plan.density_times.len()] }
    }

    fn record(&mut self, t: f64, s: &ModeState) {
        if let Ok(i) = self.plan.times.binary_search_by(|x| x.total_cmp(&t)) {
            self.cos2[i] = s.mean_cos2();
        }
        if let Ok(i) = self.plan.density_times.binary_search_by(|x| x.total_cmp(&t)) {
            self.dens[i] = period_density(s.n_max, s.amplitudes(), self.plan.density_samples);
        }
    }
}

fn tolerance(opts: &QuantumOptions) -> Tolerance {
    Tolerance::new(opts.tol, opts.tol * 1e-2)
}

/// Jump/collapse loop from the current trajectory state to `t_end`. Returns
/// the boundary population if the truncation overflowed.
fn run_jumps(
    traj: &mut TrajectoryState,
    p: &MaskParams,
    opts: &QuantumOptions,
    t_end: f64,
    wanted: &[f64],
    rec: &mut Recorder<'_>,
) -> Result<Option<f64>> {
    let mut stepper = Dopri5::new(traj.state.amplitudes().len(), tolerance(opts));
    let mut sink = |t: f64, s: &ModeState| rec.record(t, s);
    loop {
        stepper.reset_step();
        match advance(traj, p, opts, &mut stepper, t_end, wanted, &mut sink)? {
            Advance::Done => return Ok(None),
            Advance::Overflow(pop) => return Ok(Some(pop)),
            Advance::Jump(_) => {
                let k = sample_photon_momentum(traj.stream.uniform());
                collapse(traj, k)?;
            }
        }
    }
}

/// Per-trajectory output on the planned sample times.
#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    /// `<cos 2kx>` of the normalized state at each sample time.
    pub mean_cos2: Vec<f64>,
    /// Unit-mean densities at each density time.
    pub densities: Vec<Vec<f64>>,
    pub jumps: Vec<JumpRecord>,
    pub final_state: ModeState,
}

/// Runs one trajectory from the pulse start to `max(t_final, plan end)`.
///
/// The trajectory is restarted from scratch with a wider truncation whenever
/// the boundary modes fill up, so the outcome depends only on `(base_seed, index)`.
pub fn simulate_trajectory(
    p: &MaskParams,
    plan: &SamplePlan,
    t_final: f64,
    base_seed: u64,
    index: u64,
    opts: &QuantumOptions,
) -> Result<TrajectoryOutput> {
    let all = plan.merged();
    let t_end = plan.end().max(t_final);
    let (t_on, _) = p.pulse_window();
    let ahead = all.partition_point(|&t| t <= t_on);
    let mut n_max = opts.n_max;
    loop {
        let mut traj = TrajectoryState::start(p, n_max, Stream::new(base_seed, index));
        let mut rec = Recorder::new(plan);
        for &t in &all[..ahead] {
            rec.record(t, &traj.state);
        }
        match run_jumps(&mut traj, p, opts, t_end, &all[ahead..], &mut rec)? {
            Some(pop) => n_max = next_truncation(n_max, opts, pop)?,
            None => {
                return Ok(TrajectoryOutput {
                    mean_cos2: rec.cos2,
                    densities: rec.dens,
                    jumps: traj.jumps,
                    final_state: traj.state.normalized(),
                })
            }
        }
    }
}

/// Single trajectory to `t_final`; returns the normalized wave function and
/// its jump log.
pub fn run_trajectory(
    p: &MaskParams,
    t_final: f64,
    base_seed: u64,
    index: u64,
    opts: &QuantumOptions,
) -> Result<(ModeState, Vec<JumpRecord>)> {
    let out = simulate_trajectory(p, &SamplePlan::default(), t_final, base_seed, index, opts)?;
    Ok((out.final_state, out.jumps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub base_seed: u64,
    /// Index of the first trajectory stream; disjoint ensembles use disjoint ranges.
    pub first_stream: u64,
    pub bootstrap: usize,
    pub density_samples: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            trajectories: DEFAULT_TRAJECTORIES,
            base_seed: 0,
            first_stream: 0,
            bootstrap: DEFAULT_BOOTSTRAP,
            density_samples: 256,
        }
    }
}

/// Departure of one trajectory from the shared no-jump evolution.
#[derive(Debug, Clone)]
struct Deviation {
    cos2: Vec<f64>,
    dens: Vec<Vec<f64>>,
    jumps: usize,
}

/// Ensemble sums, kept as the shared no-jump reference plus per-trajectory
/// deviations so that trajectories that never jump add exactly nothing.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    pub count: usize,
    reference_cos2: Vec<f64>,
    reference_density: Vec<Vec<f64>>,
    deviation_cos2: Vec<f64>,
    deviation_density: Vec<Vec<f64>>,
    rows: Vec<Option<Vec<f64>>>,
    pub jump_counts: Vec<usize>,
}

impl EnsembleAccumulator {
    fn new(reference_cos2: Vec<f64>, reference_density: Vec<Vec<f64>>) -> Self {
        Self {
            count: 0,
            deviation_cos2: vec![0.0; reference_cos2.len()],
            deviation_density: reference_density.iter().map(|d| vec![0.0; d.len()]).collect(),
            reference_cos2,
            reference_density,
            rows: Vec::new(),
            jump_counts: Vec::new(),
        }
    }

    fn push(&mut self, dev: Option<Deviation>) {
        self.count += 1;
        let Some(dev) = dev else {
            self.rows.push(None);
            self.jump_counts.push(0);
            return;
        };
        let row: Vec<f64> = dev.cos2.iter().zip(&self.reference_cos2).map(|(x, r)| x - r).collect();
        for (acc, d) in self.deviation_cos2.iter_mut().zip(&row) {
            *acc += d;
        }
        for ((acc, d), r) in self.deviation_density.iter_mut().zip(&dev.dens).zip(&self.reference_density) {
            for ((a, x), y) in acc.iter_mut().zip(d).zip(r) {
                *a += x - y;
            }
        }
        self.rows.push(Some(row));
        self.jump_counts.push(dev.jumps);
    }

    /// Ensemble mean of `<cos 2kx>` at every sample time.
    pub fn mean_cos2(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.reference_cos2.iter().zip(&self.deviation_cos2).map(|(r, d)| r + d / n).collect()
    }

    /// Equal-weight mean of the per-trajectory densities.
    pub fn densities(&self) -> Vec<Vec<f64>> {
        let n = self.count as f64;
        self.reference_density
            .iter()
            .zip(&self.deviation_density)
            .map(|(r, d)| r.iter().zip(d).map(|(a, b)| a + b / n).collect())
            .collect()
    }

    pub fn mean_jumps(&self) -> f64 {
        self.jump_counts.iter().sum::<usize>() as f64 / self.count.max(1) as f64
    }

    /// Bootstrap standard error of the ensemble mean at every sample time.
    pub fn bootstrap_stderr(&self, resamples: usize, base_seed: u64) -> Vec<f64> {
        let samples = self.reference_cos2.len();
        if self.count < 2 || resamples < 2 {
            return vec![0.0; samples];
        }
        let mut stream = Stream::new(base_seed, BOOTSTRAP_STREAM);
        let n = self.count as f64;
        let means: Vec<Vec<f64>> = (0..resamples)
            .map(|_| {
                let mut acc = vec![0.0; samples];
                for _ in 0..self.count {
                    if let Some(row) = &self.rows[stream.index(self.count)] {
                        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                }
                acc.iter_mut().for_each(|a| *a /= n);
                acc
            })
            .collect();
        (0..samples)
            .map(|k| {
                let mu = means.iter().map(|m| m[k]).sum::<f64>() / resamples as f64;
                let var = means.iter().map(|m| (m[k] - mu).powi(2)).sum::<f64>() / (resamples - 1) as f64;
                var.sqrt()
            })
            .collect()
    }
}

/// Where a trajectory first leaves the shared no-jump evolution.
#[derive(Debug, Clone)]
enum FirstJump {
    Lit(ModeState),
    Dark(f64),
}

/// The deterministic no-jump evolution common to every trajectory up to its
/// first emission.
struct SharedPrefix {
    cos2: Vec<f64>,
    dens: Vec<Vec<f64>>,
    first: Vec<Option<FirstJump>>,
    /// State at the end of the lit phase (or at `t_end` if earlier).
    dark_start: ModeState,
}

fn shared_prefix(
    p: &MaskParams,
    plan: &SamplePlan,
    t_end: f64,
    thresholds: &[f64],
    n_max: usize,
    opts: &QuantumOptions,
) -> Result<std::result::Result<SharedPrefix, f64>> {
    let all = plan.merged();
    let (t_on, t_off) = p.pulse_window();
    let mut rec = Recorder::new(plan);
    let mut s = ModeState::uniform_ground(n_max, t_on);
    let ahead = all.partition_point(|&t| t <= t_on);
    for &t in &all[..ahead] {
        rec.record(t, &s);
    }
    let wanted = &all[ahead..];
    let mut first: Vec<Option<FirstJump>> = vec![None; thresholds.len()];
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&a, &b| thresholds[b].total_cmp(&thresholds[a]).then(a.cmp(&b)));
    let mut next = 0;
    let decays = p.gamma > 0.0;
    if t_end > s.t {
        // Always integrate the whole pulse so the step sequence, and hence every
        // sample, matches the coherent solver exactly.
        let mut stepper = Dopri5::new(s.amplitudes().len(), tolerance(opts));
        let p0 = s.p0;
        let mut buf = vec![Complex64::new(0.0, 0.0); s.amplitudes().len()];
        let tol = 1e-3 * p.sigma_t;
        let result = pulse_segment(&mut s, p, t_off, opts, &mut stepper, |view, nm| {
            let mut sink = |t: f64, st: &ModeState| rec.record(t, st);
            sample_in_step(view, nm, p0, view.t_new, wanted, &mut buf, &mut sink);
            if decays {
                let norm = norm_sqr(view.y_new);
                while next < order.len() && thresholds[order[next]] >= norm {
                    let tc = bisect_crossing(view, thresholds[order[next]], tol, &mut buf);
                    if tc > t_end {
                        next = order.len();
                        break;
                    }
                    view.interpolate(tc, &mut buf);
                    let mut st = ModeState::zeros(nm, p0, tc);
                    st.amplitudes_mut().copy_from_slice(&buf);
                    first[order[next]] = Some(FirstJump::Lit(st));
                    next += 1;
                }
            }
            Control::Continue
        })?;
        if let SegmentEnd::Overflow(pop) = result {
            return Ok(Err(pop));
        }
    }
    let dark_start = s.clone();
    if t_end > s.t {
        let n_g = s.ground_population();
        let n_e = s.excited_population();
        if decays && n_e > 0.0 {
            for &i in &order[next..] {
                let thr = thresholds[i];
                if thr <= n_g {
                    break;
                }
                let ratio = (thr - n_g) / n_e;
                let t_jump = if ratio < 1.0 { s.t - ratio.ln() / p.gamma } else { s.t };
                if t_jump <= t_end {
                    first[i] = Some(FirstJump::Dark(t_jump));
                }
            }
        }
        let mut sink = |t: f64, st: &ModeState| rec.record(t, st);
        sample_dark(&s, p, t_end, wanted, &mut sink);
    }
    Ok(Ok(SharedPrefix { cos2: rec.cos2, dens: rec.dens, first, dark_start }))
}

/// Continues trajectory `index` from its first emission.
#[allow(clippy::too_many_arguments)]
fn branch(
    p: &MaskParams,
    plan: &SamplePlan,
    prefix: &SharedPrefix,
    t_end: f64,
    base_seed: u64,
    index: u64,
    slot: usize,
    opts: &QuantumOptions,
) -> Result<Option<Deviation>> {
    let Some(first) = &prefix.first[slot] else {
        return Ok(None);
    };
    let mut stream = Stream::new(base_seed, index);
    let epsilon = stream.open_uniform();
    let state = match first {
        FirstJump::Lit(s) => s.clone(),
        FirstJump::Dark(t) => {
            let mut s = prefix.dark_start.clone();
            let dt = t - s.t;
            free_propagate(&mut s, p, dt);
            s.t = *t;
            s
        }
    };
    let mut traj = TrajectoryState { state, epsilon, jumps: Vec::new(), stream };
    let mut rec = Recorder { plan, cos2: prefix.cos2.clone(), dens: prefix.dens.clone() };
    let k = sample_photon_momentum(traj.stream.uniform());
    collapse(&mut traj, k)?;
    let all = plan.merged();
    match run_jumps(&mut traj, p, opts, t_end, &all, &mut rec)? {
        None => Ok(Some(Deviation { cos2: rec.cos2, dens: rec.dens, jumps: traj.jumps.len() })),
        Some(pop) => {
            // Rare: the branch needs more modes than the shared evolution.
            let wider = QuantumOptions { n_max: next_truncation(traj.state.n_max, opts, pop)?, ..*opts };
            let out = simulate_trajectory(p, plan, t_end, base_seed, index, &wider)?;
            Ok(Some(Deviation { cos2: out.mean_cos2, dens: out.densities, jumps: out.jumps.len() }))
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub params: MaskParams,
    pub config: EnsembleConfig,
    pub n_max: usize,
    pub times: Vec<f64>,
    pub localization: Vec<f64>,
    pub stderr: Vec<f64>,
    pub densities: Vec<DensityProfile>,
    pub mean_jumps: f64,
    pub jump_counts: Vec<usize>,
}

impl EnsembleResult {
    /// Grid minimum `(index, t, L)`; ties within 1e-6 go to the earliest sample.
    pub fn grid_minimum(&self) -> Option<(usize, f64, f64)> {
        let min = self.localization.iter().copied().fold(f64::INFINITY, f64::min);
        let i = self.localization.iter().position(|&v| v <= min + 1e-6)?;
        Some((i, self.times[i], self.localization[i]))
    }
}

/// Truncation needed by the coherent (no-jump) dynamics of `p`.
pub fn coherent_truncation(p: &MaskParams, opts: &QuantumOptions) -> Result<usize> {
    let coherent = p.with_gamma(0.0);
    let (_, t_off) = coherent.pulse_window();
    let run = quantum::coherent_run(&coherent, &[t_off], opts)?;
    Ok(run.pulse_end.n_max)
}

/// Averages `cfg.trajectories` trajectories and reports `L(t)` on the sample
/// `times` with bootstrap errors, plus ensemble densities at `density_times`.
///
/// All trajectories share the no-jump evolution up to their first emission,
/// which is integrated once. The result is independent of the worker count.
pub fn ensemble_trace(
    p: &MaskParams,
    times: &[f64],
    density_times: &[f64],
    cfg: &EnsembleConfig,
    opts: &QuantumOptions,
) -> Result<EnsembleResult> {
    if cfg.trajectories == 0 {
        return Err(Error::InvalidParameter { field: "trajectories", reason: "need at least one trajectory".into() });
    }
    let sign = p.detuning_sign()?;
    let plan = SamplePlan::new(times, density_times, cfg.density_samples);
    let t_end = plan.end();
    let indices: Vec<u64> = (0..cfg.trajectories as u64).map(|i| cfg.first_stream + i).collect();
    let thresholds: Vec<f64> =
        indices.iter().map(|&i| 1.0 - Stream::new(cfg.base_seed, i).open_uniform()).collect();
    let mut n_max = coherent_truncation(p, opts)?;
    let prefix = loop {
        match shared_prefix(p, &plan, t_end, &thresholds, n_max, opts)? {
            Ok(prefix) => break prefix,
            Err(pop) => n_max = next_truncation(n_max, opts, pop)?,
        }
    };
    let topts = QuantumOptions { n_max, ..*opts };
    let deviations: Vec<Option<Deviation>> = indices
        .par_iter()
        .enumerate()
        .map(|(slot, &i)| branch(p, &plan, &prefix, t_end, cfg.base_seed, i, slot, &topts))
        .collect::<Result<_>>()?;
    let mut acc = EnsembleAccumulator::new(prefix.cos2.clone(), prefix.dens.clone());
    for dev in deviations {
        acc.push(dev);
    }
    let localization: Vec<f64> = acc.mean_cos2().iter().map(|m| 1.0 + sign * m).collect();
    let stderr = acc.bootstrap_stderr(cfg.bootstrap, cfg.base_seed ^ cfg.first_stream);
    let m = cfg.density_samples;
    let x: Vec<f64> = (0..m).map(|j| UnitSystem::to_wavelengths(-0.5 * PI + PI * j as f64 / m as f64)).collect();
    let densities = plan
        .density_times
        .iter()
        .zip(acc.densities())
        .map(|(&t, p)| DensityProfile { x: x.clone(), p, time: t, time_unit: TimeUnit::Recoil })
        .collect();
    Ok(EnsembleResult {
        params: *p,
        config: *cfg,
        n_max,
        times: plan.times,
        localization,
        stderr,
        mean_jumps: acc.mean_jumps(),
        jump_counts: acc.jump_counts,
        densities,
    })
}

/// Ensemble density at a single time with `L` and its bootstrap error.
pub fn ensemble_density(
    p: &MaskParams,
    cfg: &EnsembleConfig,
    t: f64,
    opts: &QuantumOptions,
) -> Result<(DensityProfile, f64, f64)> {
    let r = ensemble_trace(p, &[t], &[t], cfg, opts)?;
    Ok((r.densities[0].clone(), r.localization[0], r.stderr[0]))
}
