//! Single-potential Schrodinger evolution in the dressed-state potential.
//!
//! A split-operator solver on a periodic grid, valid only when the atom
//! follows one dressed state adiabatically. It exists to cross-check the
//! momentum-ladder solver.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::mask::{adiabatic_potential, MaskParams};
use crate::trace::DensityProfile;
use crate::units::{TimeUnit, UnitSystem};

pub const DEFAULT_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReferenceOptions {
    /// Grid points per period.
    pub grid: usize,
    /// Initial time step, in units of `sigma_t`.
    pub step: f64,
    /// Largest accepted change of `L` between a run and its half-step rerun.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, step: 1e-3, tol: 1e-4, max_halvings: 6 }
    }
}

struct Solver {
    grid: usize,
    x: Vec<f64>,
    kinetic: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Solver {
    fn new(grid: usize) -> Self {
        let mut planner = FftPlanner::new();
        let x = (0..grid).map(|j| -0.5 * PI + PI * j as f64 / grid as f64).collect();
        // Period pi: the DFT index j carries momentum 2n with n the signed frequency.
        let kinetic = (0..grid)
            .map(|j| {
                let n = if j <= grid / 2 { j as f64 } else { j as f64 - grid as f64 };
                4.0 * n * n
            })
            .collect();
        Self { grid, x, kinetic, fft: planner.plan_fft_forward(grid), ifft: planner.plan_fft_inverse(grid) }
    }

    fn potential_phase(&self, p: &MaskParams, t: f64, dt: f64, out: &mut [Complex64]) -> Result<()> {
        let offset = 0.5 * p.detuning();
        for (o, &x) in out.iter_mut().zip(&self.x) {
            let u = adiabatic_potential(x, t, p)? - offset;
            *o = Complex64::from_polar(1.0, -u * dt);
        }
        Ok(())
    }

    fn kinetic(&self, psi: &mut [Complex64], dt: f64) {
        self.fft.process(psi);
        let scale = 1.0 / self.grid as f64;
        for (c, &e) in psi.iter_mut().zip(&self.kinetic) {
            *c *= Complex64::from_polar(scale, -e * dt);
        }
        self.ifft.process(psi);
    }

    /// Strang steps of size at most `dt` from `t0` to `t1`, potential sampled at
    /// each step midpoint.
    fn evolve(&self, p: &MaskParams, psi: &mut [Complex64], t0: f64, t1: f64, dt: f64) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        let (t_on, t_off) = p.pulse_window();
        let mut phase = vec![Complex64::new(0.0, 0.0); self.grid];
        let lit_lo = t0.max(t_on);
        let lit_hi = t1.min(t_off);
        if t0 < lit_lo {
            self.kinetic(psi, lit_lo.min(t1) - t0);
        }
        if lit_hi > lit_lo {
            let steps = ((lit_hi - lit_lo) / dt).ceil().max(1.0) as usize;
            let h = (lit_hi - lit_lo) / steps as f64;
            for k in 0..steps {
                let tm = lit_lo + (k as f64 + 0.5) * h;
                self.potential_phase(p, tm, 0.5 * h, &mut phase)?;
                psi.iter_mut().zip(&phase).for_each(|(c, f)| *c *= f);
                self.kinetic(psi, h);
                psi.iter_mut().zip(&phase).for_each(|(c, f)| *c *= f);
            }
        }
        let dark_from = lit_hi.max(lit_lo).max(t0);
        if t1 > dark_from {
            self.kinetic(psi, t1 - dark_from);
        }
        Ok(())
    }
}

fn mean_cos2(x: &[f64], psi: &[Complex64]) -> f64 {
    let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    psi.iter().zip(x).map(|(c, &x)| c.norm_sqr() * (2.0 * x).cos()).sum::<f64>() / norm
}

/// Wave functions at the sorted `times` for a fixed step size.
fn run(p: &MaskParams, times: &[f64], solver: &Solver, dt: f64) -> Result<Vec<Vec<Complex64>>> {
    let (t_on, _) = p.pulse_window();
    let mut psi = vec![Complex64::new(1.0, 0.0); solver.grid];
    let mut t = t_on;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target > t {
            solver.evolve(p, &mut psi, t, target, dt)?;
            t = target;
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// Wave functions at the sorted `times`, halving the step until `L` agrees
/// with the previous step size to `opts.tol`.
fn converged(p: &MaskParams, times: &[f64], opts: &ReferenceOptions) -> Result<(Solver, Vec<Vec<Complex64>>)> {
    p.detuning_sign()?;
    if opts.grid < 16 {
        return Err(Error::InvalidParameter { field: "grid", reason: format!("need at least 16 points, got {}", opts.grid) });
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter { field: "times", reason: "must be ascending".into() });
    }
    let solver = Solver::new(opts.grid);
    let mut dt = opts.step * p.sigma_t;
    let mut prev = run(p, times, &solver, dt)?;
    for _ in 0..opts.max_halvings {
        dt *= 0.5;
        let next = run(p, times, &solver, dt)?;
        let worst = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (mean_cos2(&solver.x, a) - mean_cos2(&solver.x, b)).abs())
            .fold(0.0, f64::max);
        if worst <= opts.tol {
            return Ok((solver, next));
        }
        prev = next;
    }
    Err(Error::ToleranceNotMet { t: times.last().copied().unwrap_or(0.0), h: dt })
}

/// Density at `t_end` from the adiabatic single-potential evolution.
pub fn adiabatic_reference_evolve(p: &MaskParams, t_end: f64, opts: &ReferenceOptions) -> Result<DensityProfile> {
    let (solver, mut psi) = converged(p, &[t_end], opts)?;
    let psi = psi.pop().unwrap_or_default();
    let mut dens: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
    let mean = dens.iter().sum::<f64>() / dens.len() as f64;
    dens.iter_mut().for_each(|d| *d /= mean);
    Ok(DensityProfile {
        x: solver.x.iter().map(|&x| UnitSystem::to_wavelengths(x)).collect(),
        p: dens,
        time: t_end,
        time_unit: TimeUnit::Recoil,
    })
}

/// `L(t)` at the ascending `times` from the adiabatic evolution.
pub fn adiabatic_reference_trace(p: &MaskParams, times: &[f64], opts: &ReferenceOptions) -> Result<Vec<f64>> {
    let sign = p.detuning_sign()?;
    let (solver, psis) = converged(p, times, opts)?;
    Ok(psis.iter().map(|psi| 1.0 + sign * mean_cos2(&solver.x, psi)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_plane_wave_is_stationary() {
        let p = MaskParams::new(1e-12, 0.01, 1.0, 0.0).unwrap();
        let d = adiabatic_reference_evolve(&p, 0.3, &ReferenceOptions::default()).unwrap();
        assert!(d.p.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn free_evolution_revives() {
        let solver = Solver::new(64);
        let psi0: Vec<Complex64> = solver.x.iter().map(|&x| Complex64::new(1.0 + 0.3 * (2.0 * x).cos(), 0.2 * (4.0 * x).sin())).collect();
        let mut psi = psi0.clone();
        solver.kinetic(&mut psi, UnitSystem::REVIVAL_PERIOD);
        let overlap: Complex64 = psi0.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
        let norm: f64 = psi0.iter().map(|c| c.norm_sqr()).sum();
        assert!((overlap.norm() / norm - 1.0).abs() < 1e-10);
    }
}
