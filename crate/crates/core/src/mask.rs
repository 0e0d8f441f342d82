//! Physical configuration of the standing-wave light mask and the fields it
//! produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulse support in units of `sigma_t`; the Rabi frequency is exactly zero
/// outside `|t| <= PULSE_CUTOFF * sigma_t`.
pub const PULSE_CUTOFF: f64 = 5.0;

/// Complete physical configuration of the mask.
///
/// `omega0` and `gamma` are in recoil frequencies. `sigma_t` is in whatever
/// time unit the consuming solver uses: classical solvers read it as the
/// dimensionless width `omega_rec Omega_0 sigma_t^2`, the quantum solvers as
/// recoil times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub omega0: f64,
    pub sigma_t: f64,
    pub detuning_ratio: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl MaskParams {
    pub fn new(omega0: f64, sigma_t: f64, detuning_ratio: f64, gamma: f64) -> Result<Self> {
        let p = Self { omega0, sigma_t, detuning_ratio, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "omega0",
                reason: format!("must be positive and finite, got {}", self.omega0),
            });
        }
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "sigma_t",
                reason: format!("must be positive and finite, got {}", self.sigma_t),
            });
        }
        if !self.detuning_ratio.is_finite() {
            return Err(Error::InvalidParameter {
                field: "detuning_ratio",
                reason: "must be finite".into(),
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "gamma",
                reason: format!("must be non-negative, got {}", self.gamma),
            });
        }
        Ok(())
    }

    /// Detuning `Delta = r Omega_0`.
    pub fn detuning(&self) -> f64 {
        self.detuning_ratio * self.omega0
    }

    /// `Sgn(Delta)`; fails for exactly resonant light.
    pub fn detuning_sign(&self) -> Result<f64> {
        detuning_sign(self.detuning_ratio)
    }

    /// Gaussian envelope `exp(-t^2/sigma_t^2)`, truncated outside the pulse support.
    pub fn envelope(&self, t: f64) -> f64 {
        let u = t / self.sigma_t;
        if u.abs() > PULSE_CUTOFF {
            0.0
        } else {
            (-u * u).exp()
        }
    }

    /// Start and end of the truncated pulse.
    pub fn pulse_window(&self) -> (f64, f64) {
        (-PULSE_CUTOFF * self.sigma_t, PULSE_CUTOFF * self.sigma_t)
    }

    pub fn with_detuning_ratio(mut self, r: f64) -> Self {
        self.detuning_ratio = r;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

pub(crate) fn detuning_sign(r: f64) -> Result<f64> {
    if r > 0.0 {
        Ok(1.0)
    } else if r < 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::ZeroDetuning)
    }
}

/// Rabi frequency `Omega_0 exp(-t^2/sigma_t^2) cos(kx)` with `x` given as `kx`.
pub fn rabi(x: f64, t: f64, p: &MaskParams) -> f64 {
    p.omega0 * p.envelope(t) * x.cos()
}

/// Dressed-state potential `Sgn(Delta) (1/2) sqrt(Delta^2 + Omega^2)` in units of
/// `hbar omega_rec`.
pub fn adiabatic_potential(x: f64, t: f64, p: &MaskParams) -> Result<f64> {
    let sign = p.detuning_sign()?;
    let delta = p.detuning();
    let omega = rabi(x, t, p);
    Ok(sign * 0.5 * delta.hypot(omega))
}

/// Regime diagnostics for a parameter set with `sigma_t` in recoil times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticityMargin {
    /// `|Delta| / sqrt(Omega_0/sigma_t)`; adiabatic following needs this `>> 1`.
    pub ratio: f64,
    /// `Gamma sigma_t`, the expected order of spontaneous emissions per pulse.
    pub gamma_sigma: f64,
}

pub fn adiabaticity_margin(p: &MaskParams) -> AdiabaticityMargin {
    AdiabaticityMargin {
        ratio: p.detuning().abs() / (p.omega0 / p.sigma_t).sqrt(),
        gamma_sigma: p.gamma * p.sigma_t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(omega0: f64, r: f64) -> MaskParams {
        MaskParams::new(omega0, 1.0, r, 0.0).unwrap()
    }

    #[test]
    fn rabi_peak_node_and_tail() {
        let p = MaskParams::new(1.92e5, 6e-4, -0.125, 0.0).unwrap();
        assert_eq!(rabi(0.0, 0.0, &p), 1.92e5);
        assert!(rabi(PI / 2.0, 0.0, &p).abs() < 1e-10);
        let q = params(1.0, 1.0);
        let tail = rabi(0.0, 5.0, &q);
        assert!((tail - (-25.0f64).exp()).abs() < 1e-25);
        assert!((tail - 1.39e-11).abs() < 1e-13);
        assert_eq!(rabi(0.0, 5.0 + 1e-9, &q), 0.0);
    }

    #[test]
    fn potential_at_node_and_three_four_five() {
        let blue = params(800.0, 0.125);
        let red = params(800.0, -0.125);
        assert!((adiabatic_potential(PI / 2.0, 0.0, &blue).unwrap() - 50.0).abs() < 1e-9);
        assert!((adiabatic_potential(PI / 2.0, 0.0, &red).unwrap() + 50.0).abs() < 1e-9);
        let p = params(400.0, 0.75);
        assert!((adiabatic_potential(0.0, 0.0, &p).unwrap() - 250.0).abs() < 1e-12);
    }

    #[test]
    fn zero_detuning_is_rejected() {
        let p = params(1.0, 0.0);
        assert_eq!(adiabatic_potential(0.0, 0.0, &p), Err(Error::ZeroDetuning));
    }

    #[test]
    fn invalid_parameters() {
        assert!(MaskParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(MaskParams::new(1.0, -1.0, 1.0, 0.0).is_err());
        assert!(MaskParams::new(1.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn margin_examples() {
        let p = MaskParams::new(1.92e5, 6e-4, 0.125, 238.0).unwrap();
        let m = adiabaticity_margin(&p);
        assert!((m.ratio - 24000.0 / 3.2e8f64.sqrt()).abs() < 1e-12);
        assert!((m.ratio - 1.34).abs() < 0.01);
        assert!((m.gamma_sigma - 0.1428).abs() < 1e-12);
        let q = MaskParams::new(4e4, 0.01, -0.125, 238.0).unwrap();
        assert!((adiabaticity_margin(&q).gamma_sigma - 2.38).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetry_and_bounds(x in -10.0f64..10.0, t in -3.0f64..3.0, r in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0]) {
            let p = MaskParams::new(100.0, 1.0, r, 0.0).unwrap();
            prop_assert!((rabi(x, t, &p) - rabi(-x, t, &p)).abs() < 1e-9);
            prop_assert!((rabi(x, t, &p) - rabi(x, -t, &p)).abs() < 1e-9);
            let u = adiabatic_potential(x, t, &p).unwrap();
            prop_assert!((u - adiabatic_potential(-x, t, &p).unwrap()).abs() < 1e-9);
            prop_assert!((u - adiabatic_potential(x + PI, t, &p).unwrap()).abs() < 1e-9);
            prop_assert!(u.abs() >= 0.5 * p.detuning().abs() - 1e-12);
            let far = adiabatic_potential(x, 6.0, &p).unwrap();
            prop_assert_eq!(far, r.signum() * 0.5 * p.detuning().abs());
        }
    }
}
