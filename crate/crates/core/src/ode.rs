//! Dormand-Prince 5(4) integrator with embedded error control and the
//! 4th-order continuous extension used for dense output.
//!
//! The state is a slice of any [`OdeScalar`] (real or complex). An observer is
//! called after every accepted step with a [`StepView`] that can interpolate
//! inside the step; it may ask the integrator to stop at a time inside that
//! step, in which case the returned state is the interpolated one.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeScalar:
    Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(self) -> f64;
}

impl OdeScalar for f64 {
    #[inline]
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for Complex64 {
    #[inline]
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Continue,
    /// Stop at the given time, which must lie inside the current step.
    StopAt(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// View of one accepted step, with dense output.
pub struct StepView<'a, T> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_new: &'a [T],
    r: &'a [Vec<T>; 5],
}

impl<T: OdeScalar> StepView<'_, T> {
    pub fn interpolate(&self, t: f64, out: &mut [T]) {
        let h = self.t_new - self.t_old;
        let theta = if h == 0.0 { 1.0 } else { (t - self.t_old) / h };
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * theta1) * theta) * theta1) * theta;
        }
    }
}

/// Adaptive Dormand-Prince stepper with reusable work buffers.
pub struct Dopri5<T> {
    tol: Tolerance,
    pub h_max: f64,
    pub max_steps: usize,
    k: [Vec<T>; 7],
    y_stage: Vec<T>,
    y_new: Vec<T>,
    err: Vec<T>,
    dense: [Vec<T>; 5],
    /// Step size carried over to the next call.
    h_next: Option<f64>,
}

impl<T: OdeScalar> Dopri5<T> {
    pub fn new(dim: usize, tol: Tolerance) -> Self {
        let buf = || vec![T::default(); dim];
        Self {
            tol,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
            k: std::array::from_fn(|_| buf()),
            y_stage: buf(),
            y_new: buf(),
            err: buf(),
            dense: std::array::from_fn(|_| buf()),
            h_next: None,
        }
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    /// Forgets the carried step size, e.g. after a discontinuous state change.
    pub fn reset_step(&mut self) {
        self.h_next = None;
    }

    #[allow(clippy::needless_range_loop)]
    fn error_norm(&self, y: &[T]) -> f64 {
        let n = y.len().max(1);
        let mut acc = 0.0;
        for i in 0..y.len() {
            let sc = self.tol.atol + self.tol.rtol * y[i].magnitude().max(self.y_new[i].magnitude());
            let e = self.err[i].magnitude() / sc;
            acc += e * e;
        }
        (acc / n as f64).sqrt()
    }

    #[allow(clippy::needless_range_loop)]
    fn initial_step<F>(&mut self, rhs: &mut F, t: f64, y: &[T], span: f64) -> f64
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        // Hairer & Wanner's starting-step heuristic.
        let n = y.len().max(1) as f64;
        let sc = |v: T, yi: T| v.magnitude() / (self.tol.atol + self.tol.rtol * yi.magnitude());
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..y.len() {
            d0 += sc(y[i], y[i]).powi(2);
            d1 += sc(self.k[0][i], y[i]).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span).min(self.h_max);
        for i in 0..y.len() {
            self.y_stage[i] = y[i] + self.k[0][i] * h0;
        }
        let (k0, rest) = self.k.split_first_mut().unwrap();
        rhs(t + h0, &self.y_stage, &mut rest[0]);
        let mut d2 = 0.0;
        for i in 0..y.len() {
            d2 += sc(rest[0][i] - k0[i], y[i]).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.h_max)
    }

    /// Integrates `y' = rhs(t, y)` from `t0` to `t_end` (`t_end >= t0`), updating
    /// `y` in place. Returns the time actually reached, which is `t_end` unless the
    /// observer requested an earlier stop.
    pub fn integrate<F, O>(
        &mut self,
        mut rhs: F,
        t0: f64,
        y: &mut [T],
        t_end: f64,
        mut observer: O,
    ) -> Result<(f64, Stats)>
    where
        F: FnMut(f64, &[T], &mut [T]),
        O: FnMut(&StepView<'_, T>) -> Control,
    {
        let dim = y.len();
        debug_assert_eq!(dim, self.y_new.len());
        let mut stats = Stats::default();
        let mut t = t0;
        if t_end <= t0 {
            return Ok((t0, stats));
        }
        rhs(t, y, &mut self.k[0]);
        stats.evaluations += 1;
        let mut h = match self.h_next {
            Some(h) => h.min(t_end - t0),
            None => {
                stats.evaluations += 1;
                self.initial_step(&mut rhs, t, y, t_end - t0)
            }
        };
        let mut last_rejected = false;
        loop {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::ToleranceNotMet { t, h });
            }
            let h_min = 16.0 * f64::EPSILON * t.abs().max(t_end.abs()).max(1e-300);
            if h < h_min {
                return Err(Error::ToleranceNotMet { t, h });
            }
            let last = t + 1.01 * h >= t_end;
            if last {
                h = t_end - t;
            }
            self.stages(&mut rhs, t, y, h);
            stats.evaluations += 6;
            let err = self.error_norm(y);
            if !err.is_finite() {
                h *= 0.1;
                stats.rejected += 1;
                last_rejected = true;
                continue;
            }
            if err <= 1.0 {
                stats.accepted += 1;
                let t_new = if last { t_end } else { t + h };
                self.build_dense(y, h);
                let control = {
                    let view = StepView { t_old: t, t_new, y_new: &self.y_new, r: &self.dense };
                    observer(&view)
                };
                let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                self.h_next = Some((h * fac).min(self.h_max));
                match control {
                    Control::StopAt(ts) => {
                        let ts = ts.clamp(t, t_new);
                        let view = StepView { t_old: t, t_new, y_new: &self.y_new, r: &self.dense };
                        view.interpolate(ts, y);
                        return Ok((ts, stats));
                    }
                    Control::Continue => {}
                }
                y.copy_from_slice(&self.y_new);
                let (k0, rest) = self.k.split_first_mut().unwrap();
                k0.copy_from_slice(&rest[5]);
                t = t_new;
                if last {
                    return Ok((t, stats));
                }
                h = self.h_next.unwrap();
                last_rejected = false;
            } else {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                last_rejected = true;
            }
        }
    }

    fn stages<F>(&mut self, rhs: &mut F, t: f64, y: &[T], h: f64)
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ys = &mut self.y_stage;
        for i in 0..n {
            ys[i] = y[i] + k1[i] * (h * A21);
        }
        rhs(t + C2 * h, ys, k2);
        for i in 0..n {
            ys[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        rhs(t + C3 * h, ys, k3);
        for i in 0..n {
            ys[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        rhs(t + C4 * h, ys, k4);
        for i in 0..n {
            ys[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        rhs(t + C5 * h, ys, k5);
        for i in 0..n {
            ys[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        rhs(t + h, ys, k6);
        let yn = &mut self.y_new;
        for i in 0..n {
            yn[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        rhs(t + h, yn, k7);
        let err = &mut self.err;
        for i in 0..n {
            err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        }
    }

    fn build_dense(&mut self, y: &[T], h: f64) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let [r1, r2, r3, r4, r5] = &mut self.dense;
        for i in 0..y.len() {
            let dy = self.y_new[i] - y[i];
            let bspl = k1[i] * h - dy;
            r1[i] = y[i];
            r2[i] = dy;
            r3[i] = bspl;
            r4[i] = dy - k7[i] * h - bspl;
            r5[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_and_dense_output() {
        let mut s = Dopri5::new(2, Tolerance::new(1e-10, 1e-12));
        let mut y = [1.0, 0.0];
        let mut max_dense_err: f64 = 0.0;
        let (t, stats) = s
            .integrate(
                |_, y: &[f64], dy: &mut [f64]| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                0.0,
                &mut y,
                10.0,
                |v| {
                    let mut out = [0.0; 2];
                    let tm = 0.5 * (v.t_old + v.t_new);
                    v.interpolate(tm, &mut out);
                    max_dense_err = max_dense_err.max((out[0] - tm.cos()).abs());
                    Control::Continue
                },
            )
            .unwrap();
        assert_eq!(t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-8, "{}", y[0]);
        assert!((y[1] + 10f64.sin()).abs() < 1e-8);
        assert!(max_dense_err < 1e-8, "{max_dense_err}");
        assert!(stats.accepted > 10);
    }

    #[test]
    fn complex_rotation_and_stop() {
        let mut s = Dopri5::new(1, Tolerance::new(1e-10, 1e-12));
        let mut y = [Complex64::new(1.0, 0.0)];
        let w = 3.0;
        let (t, _) = s
            .integrate(
                |_, y: &[Complex64], dy: &mut [Complex64]| dy[0] = Complex64::new(0.0, -w) * y[0],
                0.0,
                &mut y,
                5.0,
                |v| if v.t_new > 1.0 { Control::StopAt(1.0) } else { Control::Continue },
            )
            .unwrap();
        assert_eq!(t, 1.0);
        assert!((y[0] - Complex64::new(0.0, -w).exp()).norm() < 1e-8);
    }

    #[test]
    fn step_budget_exhaustion_reports_tolerance() {
        let mut s = Dopri5::new(1, Tolerance::new(1e-12, 1e-14));
        s.max_steps = 5;
        let mut y = [1.0];
        let r = s.integrate(|_, y: &[f64], dy: &mut [f64]| dy[0] = -50.0 * y[0].sin(), 0.0, &mut y, 100.0, |_| Control::Continue);
        assert!(matches!(r, Err(Error::ToleranceNotMet { .. })));
    }
}
