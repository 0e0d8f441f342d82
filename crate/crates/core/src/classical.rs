//! Point-particle focusing in the adiabatic potential.
//!
//! Time is measured in `1/(omega_rec Omega_0 sigma_t)` and the pulse width is
//! the dimensionless `s = omega_rec Omega_0 sigma_t^2` (stored in
//! `MaskParams::sigma_t`). In these units the equation of motion is
//!
//! ```text
//! X'' = -(sgn r / s) d/dX sqrt(r^2 + exp(-2 tau^2 / s^2) cos^2 X)
//! ```
//!
//! so the dynamics depend on `(r, s)` only.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::{detuning_sign, MaskParams, PULSE_CUTOFF};
use crate::ode::{Control, Dopri5, Tolerance};
use crate::quadrature;
use crate::trace::DensityProfile;
use crate::units::{TimeUnit, UnitSystem};

pub const DEFAULT_GRID: usize = 4096;
pub const MIN_GRID: usize = 512;
pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Half-width of the kick integral in units of `sigma_t`.
pub const KICK_HALF_WIDTH: f64 = 3.0;

const CHUNK: usize = 64;

/// Ensemble of atoms that started at rest on a uniform grid over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    pub x0: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub tau: f64,
    pub detuning_sign: f64,
}

impl ClassicalEnsemble {
    /// Atoms at rest on `[-pi/2, pi/2)`.
    pub fn uniform(size: usize, detuning_sign: f64) -> Result<Self> {
        if size < MIN_GRID {
            return Err(Error::InvalidParameter {
                field: "grid",
                reason: format!("at least {MIN_GRID} initial positions are required, got {size}"),
            });
        }
        let x0: Vec<f64> = (0..size).map(|j| -0.5 * PI + PI * j as f64 / size as f64).collect();
        Ok(Self { x: x0.clone(), v: vec![0.0; size], x0, tau: 0.0, detuning_sign })
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }
}

/// Scaled velocity imparted by an infinitely short pass through the pulse.
pub fn thin_lens_kick(x0: f64, r: f64) -> Result<f64> {
    let sign = detuning_sign(r)?;
    let s2 = (2.0 * x0).sin();
    if s2 == 0.0 {
        return Ok(0.0);
    }
    let c2 = x0.cos().powi(2);
    let r2 = r * r;
    let integrand = |u: f64| {
        let g2 = (-2.0 * u * u).exp();
        g2 / (r2 + g2 * c2).sqrt()
    };
    let (val, _) = quadrature::integrate(integrand, -KICK_HALF_WIDTH, KICK_HALF_WIDTH, 1e-14, 1e-13);
    Ok(sign * 0.5 * s2 * val)
}

/// Ensemble right after a thin lens: positions unchanged, velocities kicked.
pub fn thin_lens_ensemble(size: usize, r: f64) -> Result<ClassicalEnsemble> {
    let sign = detuning_sign(r)?;
    let mut ens = ClassicalEnsemble::uniform(size, sign)?;
    ens.v = ens.x0.par_iter().map(|&x| thin_lens_kick(x, r)).collect::<Result<Vec<_>>>()?;
    Ok(ens)
}

/// Ballistic drift of a kicked ensemble to time `tau` after the lens.
pub fn evolve_thin(ensemble: &ClassicalEnsemble, tau: f64) -> ClassicalEnsemble {
    let x = ensemble.x0.iter().zip(&ensemble.v).map(|(&x0, &v)| x0 + v * tau).collect();
    ClassicalEnsemble { x, tau, ..ensemble.clone() }
}

/// `L = 1 + sgn <cos 2X>` over the grid.
pub fn classical_localization(ensemble: &ClassicalEnsemble) -> f64 {
    1.0 + ensemble.detuning_sign * mean_cos2(&ensemble.x)
}

fn mean_cos2(x: &[f64]) -> f64 {
    x.iter().map(|&x| (2.0 * x).cos()).sum::<f64>() / x.len() as f64
}

/// Thin-lens `L(tau)` without materializing the ensemble.
pub fn thin_lens_localization(ensemble: &ClassicalEnsemble, tau: f64) -> f64 {
    let s: f64 = ensemble.x0.iter().zip(&ensemble.v).map(|(&x0, &v)| (2.0 * (x0 + v * tau)).cos()).sum();
    1.0 + ensemble.detuning_sign * s / ensemble.len() as f64
}

/// Histogram of positions folded into one period, normalized to unit mean.
pub fn classical_density(ensemble: &ClassicalEnsemble, bins: usize) -> Result<DensityProfile> {
    if bins < 64 {
        return Err(Error::InvalidParameter { field: "bins", reason: format!("need at least 64 bins, got {bins}") });
    }
    let mut counts = vec![0usize; bins];
    for &x in &ensemble.x {
        let folded = UnitSystem::wrap_period(x) + 0.5 * PI;
        let idx = ((folded / PI) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let scale = bins as f64 / ensemble.len() as f64;
    let p = counts.into_iter().map(|c| c as f64 * scale).collect();
    let x = (0..bins)
        .map(|i| UnitSystem::to_wavelengths(-0.5 * PI + PI * (i as f64 + 0.5) / bins as f64))
        .collect();
    Ok(DensityProfile { x, p, time: ensemble.tau, time_unit: TimeUnit::ClassicalScaled })
}

/// Force of the scaled equation of motion.
#[inline]
pub fn scaled_force(x: f64, tau: f64, r: f64, sign: f64, s: f64) -> f64 {
    let u = tau / s;
    if u.abs() > PULSE_CUTOFF {
        return 0.0;
    }
    envelope_force(x, (-2.0 * u * u).exp(), r, sign, s)
}

/// Force for a given squared envelope `g^2`.
#[inline]
pub fn envelope_force(x: f64, g2: f64, r: f64, sign: f64, s: f64) -> f64 {
    let c = x.cos();
    sign / s * g2 * (2.0 * x).sin() / (2.0 * (r * r + g2 * c * c).sqrt())
}

/// Phase-space samples of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySamples {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Integrates one atom from rest at `x0` (at `tau = -5 s`) and samples it at
/// the requested, ascending `times`.
pub fn integrate_trajectory(x0: f64, p: &MaskParams, times: &[f64], tol: f64) -> Result<TrajectorySamples> {
    let mut xs = Vec::with_capacity(times.len());
    let mut vs = Vec::with_capacity(times.len());
    let mut stepper = Dopri5::new(2, Tolerance::new(tol, tol * 1e-3));
    trajectory_samples(&mut stepper, x0, p, times, |_, x, v| {
        xs.push(x);
        vs.push(v);
    })?;
    Ok(TrajectorySamples { times: times.to_vec(), x: xs, v: vs })
}

/// Core of [`integrate_trajectory`]: calls `sink(i, X, V)` for every sample.
fn trajectory_samples<S: FnMut(usize, f64, f64)>(
    stepper: &mut Dopri5<f64>,
    x0: f64,
    p: &MaskParams,
    times: &[f64],
    mut sink: S,
) -> Result<()> {
    let r = p.detuning_ratio;
    let sign = detuning_sign(r)?;
    let s = p.sigma_t;
    let (t_start, t_stop) = (-PULSE_CUTOFF * s, PULSE_CUTOFF * s);
    debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    let mut y = [x0, 0.0];
    let mut next = 0;
    while next < times.len() && times[next] <= t_start {
        sink(next, x0, 0.0);
        next += 1;
    }
    let last_needed = times.last().copied().unwrap_or(t_start).min(t_stop);
    let mut t = t_start;
    if next < times.len() && last_needed > t_start {
        stepper.reset_step();
        let mut buf = [0.0; 2];
        let (t_end, _) = stepper.integrate(
            |tau, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = scaled_force(y[0], tau, r, sign, s);
            },
            t_start,
            &mut y,
            last_needed,
            |view| {
                while next < times.len() && times[next] <= view.t_new {
                    view.interpolate(times[next], &mut buf);
                    sink(next, buf[0], buf[1]);
                    next += 1;
                }
                Control::Continue
            },
        )?;
        t = t_end;
    }
    while next < times.len() {
        let dt = times[next] - t;
        sink(next, y[0] + y[1] * dt, y[1]);
        next += 1;
    }
    Ok(())
}

/// Full-trajectory ensemble evaluated at each of `times`: returns `L(tau)` for
/// every requested time. Deterministic for any worker count.
pub fn thick_lens_trace(p: &MaskParams, grid: usize, times: &[f64], tol: f64) -> Result<Vec<f64>> {
    let sign = p.detuning_sign()?;
    let ens = ClassicalEnsemble::uniform(grid, sign)?;
    let mut sorted: Vec<(usize, f64)> = times.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let sorted_times: Vec<f64> = sorted.iter().map(|s| s.1).collect();
    let partial: Vec<Vec<f64>> = ens
        .x0
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; sorted_times.len()];
            let mut stepper = Dopri5::new(2, Tolerance::new(tol, tol * 1e-3));
            for &x0 in chunk {
                trajectory_samples(&mut stepper, x0, p, &sorted_times, |i, x, _| acc[i] += (2.0 * x).cos())?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; sorted_times.len()];
    for part in &partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let mut out = vec![0.0; times.len()];
    for (k, &(orig, _)) in sorted.iter().enumerate() {
        out[orig] = 1.0 + sign * total[k] / grid as f64;
    }
    Ok(out)
}

/// Full-trajectory ensemble state at a single time.
pub fn thick_lens_ensemble(p: &MaskParams, grid: usize, tau: f64, tol: f64) -> Result<ClassicalEnsemble> {
    let sign = p.detuning_sign()?;
    let mut ens = ClassicalEnsemble::uniform(grid, sign)?;
    let states: Vec<(f64, f64)> = ens
        .x0
        .par_iter()
        .map(|&x0| {
            let s = integrate_trajectory(x0, p, &[tau], tol)?;
            Ok((s.x[0], s.v[0]))
        })
        .collect::<Result<_>>()?;
    ens.x = states.iter().map(|s| s.0).collect();
    ens.v = states.iter().map(|s| s.1).collect();
    ens.tau = tau;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kick_vanishes_at_extremum_and_is_odd() {
        assert_eq!(thin_lens_kick(0.0, 0.3).unwrap(), 0.0);
        for &x in &[0.1, 0.4, 1.2] {
            let a = thin_lens_kick(x, -0.125).unwrap();
            let b = thin_lens_kick(-x, -0.125).unwrap();
            assert!((a + b).abs() < 1e-15);
        }
        assert_eq!(thin_lens_kick(0.2, 0.0), Err(Error::ZeroDetuning));
    }

    #[test]
    fn kick_far_detuned_limit() {
        // sqrt(pi/2) sin(2 x0) / (2 r) with the cos^2 correction vanishing as r grows
        let x0 = PI / 8.0;
        let r = 100.0;
        let closed = (PI / 2.0).sqrt() * (2.0 * x0).sin() / (2.0 * r);
        assert!((closed - 4.431e-3).abs() < 1e-6);
        let kick = thin_lens_kick(x0, r).unwrap();
        assert!(((kick - closed) / closed).abs() < 1e-4, "{kick} vs {closed}");
    }

    #[test]
    fn drift_is_linear() {
        let ens = thin_lens_ensemble(512, 0.7).unwrap();
        let e0 = evolve_thin(&ens, 0.0);
        assert_eq!(e0.x, e0.x0);
        let e1 = evolve_thin(&ens, 1.3);
        let e2 = evolve_thin(&ens, 2.6);
        for i in 0..ens.len() {
            let d1 = e1.x[i] - e1.x0[i];
            let d2 = e2.x[i] - e2.x0[i];
            assert!((d2 - 2.0 * d1).abs() <= 1e-15 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn localization_limits() {
        let ens = ClassicalEnsemble::uniform(1024, 1.0).unwrap();
        assert!((classical_localization(&ens) - 1.0).abs() < 1e-14);
        let mut focused = ens.clone();
        focused.x.iter_mut().for_each(|x| *x = PI / 2.0);
        assert!(classical_localization(&focused).abs() < 1e-14);
        assert!(ClassicalEnsemble::uniform(100, 1.0).is_err());
    }

    #[test]
    fn density_of_uniform_ensemble() {
        let ens = ClassicalEnsemble::uniform(4096, -1.0).unwrap();
        let d = classical_density(&ens, 256).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        for &p in &d.p {
            assert!((p - 1.0).abs() < 0.3);
        }
        assert!(classical_density(&ens, 32).is_err());
        assert!((d.x[0] + 0.25).abs() < 0.01 && (d.x[255] - 0.25).abs() < 0.01);
    }

    #[test]
    fn symmetric_point_stays_put_and_trajectories_are_odd() {
        let p = MaskParams::new(1.0, 0.5, -0.3, 0.0).unwrap();
        let times = [-1.0, 0.0, 1.0, 4.0];
        let s = integrate_trajectory(0.0, &p, &times, 1e-9).unwrap();
        assert!(s.x.iter().all(|&x| x == 0.0));
        let a = integrate_trajectory(0.4, &p, &times, 1e-9).unwrap();
        let b = integrate_trajectory(-0.4, &p, &times, 1e-9).unwrap();
        for i in 0..times.len() {
            assert!((a.x[i] + b.x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_envelope_conserves_energy() {
        // g = 1: V^2/2 + (sgn/s) sqrt(r^2 + cos^2 X) is conserved
        let (r, s) = (0.4f64, 0.7);
        let sign = r.signum();
        let energy = |x: f64, v: f64| 0.5 * v * v + sign / s * (r * r + x.cos().powi(2)).sqrt();
        let mut st = Dopri5::new(2, Tolerance::new(1e-11, 1e-13));
        let mut y = [0.9, 0.0];
        let e0 = energy(y[0], y[1]);
        let mut worst: f64 = 0.0;
        st.integrate(
            |_, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = envelope_force(y[0], 1.0, r, sign, s);
            },
            0.0,
            &mut y,
            10.0,
            |v| {
                worst = worst.max(((energy(v.y_new[0], v.y_new[1]) - e0) / e0).abs());
                Control::Continue
            },
        )
        .unwrap();
        assert!(worst < 1e-6, "{worst}");
    }
}
