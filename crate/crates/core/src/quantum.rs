//! Coherent two-level dynamics in the bare-state momentum ladder.
//!
//! The ground ladder holds momenta `p0 + 2n` and the excited ladder
//! `p0 + 2n + 1` (units of `hbar k`). Amplitudes are stored scaled so that a
//! uniformly spread ground-state atom has `C^g_0 = 1` and the total norm is
//! `sum |C|^2`. Time is in recoil units.
//!
//! Inside the truncated pulse the ladder equations are integrated with an
//! adaptive Dormand-Prince scheme. Outside it the Hamiltonian is diagonal and
//! the amplitudes are propagated exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::mask::MaskParams;
use crate::ode::{Control, Dopri5, StepView, Tolerance};
use crate::trace::DensityProfile;
use crate::units::{TimeUnit, UnitSystem};

pub const DEFAULT_N_MAX: usize = 64;
pub const N_MAX_CAP: usize = 4096;
pub const BOUNDARY_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 5e-12;
/// Modes on each end of each ladder counted as "boundary".
const EDGE_MODES: usize = 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantumOptions {
    pub tol: f64,
    pub n_max: usize,
    pub n_max_cap: usize,
    pub boundary_threshold: f64,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            n_max: DEFAULT_N_MAX,
            n_max_cap: N_MAX_CAP,
            boundary_threshold: BOUNDARY_THRESHOLD,
        }
    }
}

impl QuantumOptions {
    fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.tol, self.tol * 1e-2)
    }
}

/// Truncated two-ladder wave function.
///
/// Ground modes run over `n in [-n_max, n_max]`, excited modes over
/// `n in [-n_max - 1, n_max]`, so both ladders are symmetric in momentum when
/// `p0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub n_max: usize,
    /// Excited amplitudes followed by ground amplitudes.
    amps: Vec<Complex64>,
    pub p0: f64,
    pub t: f64,
}

impl ModeState {
    pub fn zeros(n_max: usize, p0: f64, t: f64) -> Self {
        Self { n_max, amps: vec![ZERO; excited_len(n_max) + ground_len(n_max)], p0, t }
    }

    /// Ground-state plane wave with zero transverse momentum.
    pub fn uniform_ground(n_max: usize, t: f64) -> Self {
        let mut s = Self::zeros(n_max, 0.0, t);
        *s.ground_mut(0) = Complex64::new(1.0, 0.0);
        s
    }

    pub fn excited(&self) -> &[Complex64] {
        &self.amps[..excited_len(self.n_max)]
    }

    pub fn ground(&self) -> &[Complex64] {
        &self.amps[excited_len(self.n_max)..]
    }

    pub fn excited_slice_mut(&mut self) -> &mut [Complex64] {
        let ne = excited_len(self.n_max);
        &mut self.amps[..ne]
    }

    pub fn ground_slice_mut(&mut self) -> &mut [Complex64] {
        let ne = excited_len(self.n_max);
        &mut self.amps[ne..]
    }

    pub(crate) fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// `C^g_n`; panics if `|n| > n_max`.
    pub fn ground_amp(&self, n: i64) -> Complex64 {
        self.ground()[ground_index(self.n_max, n)]
    }

    /// `C^e_n`; panics if `n` is outside `[-n_max - 1, n_max]`.
    pub fn excited_amp(&self, n: i64) -> Complex64 {
        self.excited()[excited_index(self.n_max, n)]
    }

    pub fn ground_mut(&mut self, n: i64) -> &mut Complex64 {
        let i = ground_index(self.n_max, n);
        &mut self.ground_slice_mut()[i]
    }

    pub fn excited_mut(&mut self, n: i64) -> &mut Complex64 {
        let i = excited_index(self.n_max, n);
        &mut self.excited_slice_mut()[i]
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn excited_population(&self) -> f64 {
        norm_sqr(self.excited())
    }

    pub fn ground_population(&self) -> f64 {
        norm_sqr(self.ground())
    }

    /// Population held by the outermost modes of both ladders.
    pub fn boundary_population(&self) -> f64 {
        boundary_population(self.n_max, &self.amps)
    }

    /// Copy with a wider truncation; new modes are empty.
    pub fn padded(&self, n_max: usize) -> Self {
        assert!(n_max >= self.n_max);
        let mut out = Self::zeros(n_max, self.p0, self.t);
        let shift = n_max - self.n_max;
        for (i, &c) in self.excited().iter().enumerate() {
            out.excited_slice_mut()[i + shift] = c;
        }
        for (i, &c) in self.ground().iter().enumerate() {
            out.ground_slice_mut()[i + shift] = c;
        }
        out
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        let n = self.norm();
        if n > 0.0 {
            let s = 1.0 / n.sqrt();
            out.amps.iter_mut().for_each(|c| *c *= s);
        }
        out
    }

    /// `<cos 2kx>` of the normalized state.
    pub fn mean_cos2(&self) -> f64 {
        mean_cos2(self.n_max, &self.amps)
    }
}

pub(crate) fn excited_len(n_max: usize) -> usize {
    2 * n_max + 2
}

pub(crate) fn ground_len(n_max: usize) -> usize {
    2 * n_max + 1
}

fn ground_index(n_max: usize, n: i64) -> usize {
    let i = n + n_max as i64;
    assert!(i >= 0 && i <= 2 * n_max as i64, "ground mode {n} outside truncation {n_max}");
    i as usize
}

fn excited_index(n_max: usize, n: i64) -> usize {
    let i = n + n_max as i64 + 1;
    assert!(i >= 0 && i <= 2 * n_max as i64 + 1, "excited mode {n} outside truncation {n_max}");
    i as usize
}

pub(crate) fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

fn boundary_population(n_max: usize, amps: &[Complex64]) -> f64 {
    let ne = excited_len(n_max);
    let (e, g) = amps.split_at(ne);
    let k = EDGE_MODES.min(n_max);
    let ends = |v: &[Complex64]| -> f64 { norm_sqr(&v[..k]) + norm_sqr(&v[v.len() - k..]) };
    ends(e) + ends(g)
}

/// `Re sum_n [C^e_n C^e*_{n+1} + C^g_n C^g*_{n+1}] / norm`.
pub(crate) fn mean_cos2(n_max: usize, amps: &[Complex64]) -> f64 {
    let ne = excited_len(n_max);
    let (e, g) = amps.split_at(ne);
    let overlap = |v: &[Complex64]| -> f64 { v.windows(2).map(|w| (w[0] * w[1].conj()).re).sum() };
    let norm = norm_sqr(amps);
    if norm == 0.0 {
        return 0.0;
    }
    (overlap(e) + overlap(g)) / norm
}

/// Diagonal of the ladder Hamiltonian (recoil units), excited then ground.
pub(crate) fn diagonal_energies(n_max: usize, p0: f64, delta: f64, gamma: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(excited_len(n_max) + ground_len(n_max));
    for i in 0..excited_len(n_max) {
        let n = i as f64 - n_max as f64 - 1.0;
        let k = p0 + 2.0 * n + 1.0;
        out.push(Complex64::new(k * k - 0.5 * delta, -0.5 * gamma));
    }
    for j in 0..ground_len(n_max) {
        let n = j as f64 - n_max as f64;
        let k = p0 + 2.0 * n;
        out.push(Complex64::new(k * k + 0.5 * delta, 0.0));
    }
    out
}

/// Exact propagation over `dt` with the light off.
pub fn free_propagate(state: &mut ModeState, p: &MaskParams, dt: f64) {
    if dt == 0.0 {
        return;
    }
    let energies = diagonal_energies(state.n_max, state.p0, p.detuning(), p.gamma);
    for (c, e) in state.amps.iter_mut().zip(&energies) {
        *c *= (Complex64::new(0.0, -dt) * e).exp();
    }
    state.t += dt;
}

/// Ladder right-hand side `dC/dt = -i H C` for coupling `w = Omega(t)/4`.
#[inline]
pub(crate) fn ladder_rhs(n_max: usize, energies: &[Complex64], w: f64, y: &[Complex64], dy: &mut [Complex64]) {
    let ne = excited_len(n_max);
    let ng = ground_len(n_max);
    let (ye, yg) = y.split_at(ne);
    let (ee, eg) = energies.split_at(ne);
    let (dye, dyg) = dy.split_at_mut(ne);
    // excited n couples to ground n (index i - 1) and ground n + 1 (index i)
    {
        let c = ee[0] * ye[0] + yg[0] * w;
        dye[0] = Complex64::new(c.im, -c.re);
    }
    for i in 1..ng {
        let c = ee[i] * ye[i] + (yg[i - 1] + yg[i]) * w;
        dye[i] = Complex64::new(c.im, -c.re);
    }
    {
        let c = ee[ng] * ye[ng] + yg[ng - 1] * w;
        dye[ng] = Complex64::new(c.im, -c.re);
    }
    // ground n couples to excited n (index j + 1) and excited n - 1 (index j)
    for j in 0..ng {
        let c = eg[j] * yg[j] + (ye[j] + ye[j + 1]) * w;
        dyg[j] = Complex64::new(c.im, -c.re);
    }
}

/// How an in-pulse segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SegmentEnd {
    Reached,
    Stopped(f64),
    Overflow(f64),
}

/// Integrates `state` through the lit part of `[state.t, t_end]`, which must lie
/// inside the pulse window. The observer sees every accepted step.
pub(crate) fn pulse_segment<O>(
    state: &mut ModeState,
    p: &MaskParams,
    t_end: f64,
    opts: &QuantumOptions,
    stepper: &mut Dopri5<Complex64>,
    mut observer: O,
) -> Result<SegmentEnd>
where
    O: FnMut(&StepView<'_, Complex64>, usize) -> Control,
{
    if t_end <= state.t {
        return Ok(SegmentEnd::Reached);
    }
    let n_max = state.n_max;
    let energies = diagonal_energies(n_max, state.p0, p.detuning(), p.gamma);
    let quarter = 0.25 * p.omega0;
    let threshold = opts.boundary_threshold;
    let mut overflow = None;
    let t0 = state.t;
    let (t_reached, _) = stepper.integrate(
        |t, y: &[Complex64], dy: &mut [Complex64]| ladder_rhs(n_max, &energies, quarter * p.envelope(t), y, dy),
        t0,
        &mut state.amps,
        t_end,
        |view| {
            let pop = boundary_population(n_max, view.y_new);
            if pop > threshold {
                overflow = Some(pop);
                return Control::StopAt(view.t_new);
            }
            observer(view, n_max)
        },
    )?;
    state.t = t_reached;
    if let Some(pop) = overflow {
        return Ok(SegmentEnd::Overflow(pop));
    }
    if t_reached < t_end {
        Ok(SegmentEnd::Stopped(t_reached))
    } else {
        Ok(SegmentEnd::Reached)
    }
}

pub(crate) fn next_truncation(n_max: usize, opts: &QuantumOptions, population: f64) -> Result<usize> {
    let next = n_max * 2;
    if next > opts.n_max_cap {
        return Err(Error::TruncationOverflow { n_max, population });
    }
    Ok(next)
}

/// Evolves `state` to `t_end`, widening the truncation whenever the boundary
/// modes become populated.
pub fn evolve_modes(state: &ModeState, p: &MaskParams, t_end: f64, opts: &QuantumOptions) -> Result<ModeState> {
    if t_end < state.t {
        return Err(Error::InvalidParameter {
            field: "t_end",
            reason: format!("cannot evolve backwards from {} to {}", state.t, t_end),
        });
    }
    let mut n_max = state.n_max.max(opts.n_max);
    loop {
        let mut s = state.padded(n_max);
        let mut stepper = Dopri5::new(s.amps.len(), opts.tolerance());
        match evolve_once(&mut s, p, t_end, opts, &mut stepper, |_, _| Control::Continue)? {
            SegmentEnd::Overflow(pop) => n_max = next_truncation(n_max, opts, pop)?,
            _ => return Ok(s),
        }
    }
}

/// One pass through pre-pulse, pulse and post-pulse phases at fixed truncation.
pub(crate) fn evolve_once<O>(
    s: &mut ModeState,
    p: &MaskParams,
    t_end: f64,
    opts: &QuantumOptions,
    stepper: &mut Dopri5<Complex64>,
    observer: O,
) -> Result<SegmentEnd>
where
    O: FnMut(&StepView<'_, Complex64>, usize) -> Control,
{
    let (t_on, t_off) = p.pulse_window();
    if s.t < t_on {
        let dt = t_on.min(t_end) - s.t;
        free_propagate(s, p, dt);
    }
    if s.t < t_off && t_end > s.t {
        let end = t_end.min(t_off);
        match pulse_segment(s, p, end, opts, stepper, observer)? {
            SegmentEnd::Reached => {}
            other => return Ok(other),
        }
    }
    if t_end > s.t {
        let dt = t_end - s.t;
        free_propagate(s, p, dt);
    }
    if s.boundary_population() > opts.boundary_threshold {
        return Ok(SegmentEnd::Overflow(s.boundary_population()));
    }
    Ok(SegmentEnd::Reached)
}

/// Initial condition: ground-state plane wave at the start of the truncated pulse.
pub fn init_uniform_ground(p: &MaskParams) -> ModeState {
    ModeState::uniform_ground(DEFAULT_N_MAX, p.pulse_window().0)
}

/// Largest violation of the `x -> -x` mirror symmetry: `C^g_n` against
/// `C^g_{-n}` and `C^e_n` against `C^e_{-n-1}`. Meaningful for `p0 = 0`.
pub fn parity_defect(state: &ModeState) -> f64 {
    let e = state.excited();
    let g = state.ground();
    let ge = g.iter().zip(g.iter().rev()).map(|(a, b)| (a - b).norm());
    let ee = e.iter().zip(e.iter().rev()).map(|(a, b)| (a - b).norm());
    ge.chain(ee).fold(0.0, f64::max)
}

/// `L = 1 + sgn <cos 2kx>` on the normalized state.
pub fn quantum_localization(state: &ModeState, detuning_sign: f64) -> f64 {
    1.0 + detuning_sign * state.mean_cos2()
}

/// Evaluates both ladder sums on `samples` points over one period and returns
/// `|psi_e|^2 + |psi_g|^2` normalized to unit mean.
pub fn density_from_modes(state: &ModeState, samples: usize) -> DensityProfile {
    let p = period_density(state.n_max, state.amplitudes(), samples);
    let x = (0..samples).map(|j| UnitSystem::to_wavelengths(-0.5 * PI + PI * j as f64 / samples as f64)).collect();
    DensityProfile { x, p, time: state.t, time_unit: TimeUnit::Recoil }
}

/// Unit-mean density on the grid `x_j = -pi/2 + j pi / m`.
pub(crate) fn period_density(n_max: usize, amps: &[Complex64], m: usize) -> Vec<f64> {
    let ne = excited_len(n_max);
    let (e, g) = amps.split_at(ne);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(m);
    // psi(x_j) = sum_n c_n e^{i q_n x_j}; with q_n = 2n + offset and
    // x_j = -pi/2 + j pi/m this is a length-m inverse DFT in the index n.
    let field = |ladder: &[Complex64], first_n: i64, offset: f64| -> Vec<Complex64> {
        let mut buf = vec![ZERO; m];
        for (i, &c) in ladder.iter().enumerate() {
            let n = first_n + i as i64;
            let q = 2.0 * n as f64 + offset;
            let phase = Complex64::from_polar(1.0, -0.5 * PI * q);
            buf[n.rem_euclid(m as i64) as usize] += c * phase;
        }
        fft.process(&mut buf);
        if offset != 0.0 {
            for (j, v) in buf.iter_mut().enumerate() {
                *v *= Complex64::from_polar(1.0, offset * PI * j as f64 / m as f64);
            }
        }
        buf
    };
    let pe = field(e, -(n_max as i64) - 1, 1.0);
    let pg = field(g, -(n_max as i64), 0.0);
    let mut dens: Vec<f64> = pe.iter().zip(&pg).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
    let mean = dens.iter().sum::<f64>() / m as f64;
    if mean > 0.0 {
        dens.iter_mut().for_each(|d| *d /= mean);
    }
    dens
}

/// Result of a coherent run sampled at a set of times.
#[derive(Debug, Clone)]
pub struct CoherentRun {
    pub params: MaskParams,
    pub options: QuantumOptions,
    /// Requested times, in the order given.
    pub times: Vec<f64>,
    /// `L(t)` at each requested time.
    pub values: Vec<f64>,
    /// State when the pulse switches off.
    pub pulse_end: ModeState,
}

/// Runs the coherent ladder from the initial plane wave and samples `L(t)`.
pub fn coherent_run(p: &MaskParams, times: &[f64], opts: &QuantumOptions) -> Result<CoherentRun> {
    let sign = p.detuning_sign()?;
    let (t_on, t_off) = p.pulse_window();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut n_max = opts.n_max;
    loop {
        let mut values = vec![f64::NAN; times.len()];
        let mut s = ModeState::uniform_ground(n_max, t_on);
        let mut stepper = Dopri5::new(s.amps.len(), opts.tolerance());
        let mut next = 0;
        while next < order.len() && times[order[next]] <= t_on {
            values[order[next]] = 1.0;
            next += 1;
        }
        let mut buf = vec![ZERO; s.amps.len()];
        let end = pulse_segment(&mut s, p, t_off, opts, &mut stepper, |view, nm| {
            while next < order.len() && times[order[next]] <= view.t_new {
                view.interpolate(times[order[next]], &mut buf);
                values[order[next]] = 1.0 + sign * mean_cos2(nm, &buf);
                next += 1;
            }
            Control::Continue
        })?;
        if let SegmentEnd::Overflow(pop) = end {
            n_max = next_truncation(n_max, opts, pop)?;
            continue;
        }
        let pulse_end = s;
        for &k in &order[next..] {
            values[k] = post_pulse_localization(&pulse_end, p, times[k], sign);
        }
        return Ok(CoherentRun { params: *p, options: *opts, times: times.to_vec(), values, pulse_end });
    }
}

/// `L(t)` after the pulse from the exact diagonal propagator.
pub fn post_pulse_localization(pulse_end: &ModeState, p: &MaskParams, t: f64, sign: f64) -> f64 {
    let mut s = pulse_end.clone();
    free_propagate(&mut s, p, t - pulse_end.t);
    1.0 + sign * s.mean_cos2()
}

impl CoherentRun {
    pub fn detuning_sign(&self) -> f64 {
        self.params.detuning_ratio.signum()
    }

    /// `L` at an arbitrary time; re-integrates the pulse if `t` falls inside it.
    pub fn localization_at(&self, t: f64) -> Result<f64> {
        if t >= self.pulse_end.t {
            Ok(post_pulse_localization(&self.pulse_end, &self.params, t, self.detuning_sign()))
        } else {
            Ok(self.state_at(t)?.mean_cos2() * self.detuning_sign() + 1.0)
        }
    }

    /// Full state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<ModeState> {
        if t >= self.pulse_end.t {
            let mut s = self.pulse_end.clone();
            let dt = t - s.t;
            free_propagate(&mut s, &self.params, dt);
            return Ok(s);
        }
        let (t_on, _) = self.params.pulse_window();
        let init = ModeState::uniform_ground(self.pulse_end.n_max, t_on);
        if t <= t_on {
            return Ok(init);
        }
        let opts = QuantumOptions { n_max: self.pulse_end.n_max, ..self.options };
        evolve_modes(&init, &self.params, t, &opts)
    }
}
