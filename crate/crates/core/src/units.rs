//! Internal unit convention.
//!
//! Everything is expressed with `hbar = k = omega_rec = 1`, so the atomic mass
//! is `1/2`, the optical wavelength is `2 pi` and one recoil time is `1`.
//! Positions inside the solvers are the phase `k x`; the standing-wave
//! intensity (and every adiabatic potential) repeats after `pi` in that
//! coordinate, i.e. after half a wavelength.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem;

impl UnitSystem {
    pub const HBAR: f64 = 1.0;
    pub const K: f64 = 1.0;
    pub const MASS: f64 = 0.5;
    pub const OMEGA_REC: f64 = Self::HBAR * Self::K * Self::K / (2.0 * Self::MASS);
    pub const WAVELENGTH: f64 = 2.0 * PI / Self::K;
    pub const RECOIL_TIME: f64 = 1.0 / Self::OMEGA_REC;
    /// Free ground-state Talbot revival, `pi t_rec / 2`.
    pub const REVIVAL_PERIOD: f64 = PI * Self::RECOIL_TIME / 2.0;
    /// Period of the light-shift potential in the `k x` coordinate.
    pub const PERIOD: f64 = PI;

    /// Converts an internal `k x` phase into wavelengths.
    pub fn to_wavelengths(kx: f64) -> f64 {
        kx / (Self::K * Self::WAVELENGTH)
    }

    /// Wraps a `k x` phase into `[-pi/2, pi/2)`.
    pub fn wrap_period(kx: f64) -> f64 {
        let half = 0.5 * Self::PERIOD;
        (kx + half).rem_euclid(Self::PERIOD) - half
    }
}

/// Time axis used by a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    /// `1 / (omega_rec Omega_0 sigma_t)`, used by the classical solvers.
    ClassicalScaled,
    /// `1 / omega_rec`.
    Recoil,
}

impl TimeUnit {
    pub fn label(self) -> &'static str {
        match self {
            TimeUnit::ClassicalScaled => "classical-scaled",
            TimeUnit::Recoil => "recoil",
        }
    }
}

/// Dimensionless classical pulse width `omega_rec Omega_0 sigma_t^2` for a pulse
/// given in recoil units.
pub fn scaled_pulse_width(omega0: f64, sigma_t_recoil: f64) -> f64 {
    UnitSystem::OMEGA_REC * omega0 * sigma_t_recoil * sigma_t_recoil
}

/// Length of one classical time unit measured in recoil times.
pub fn classical_time_unit(omega0: f64, sigma_t_recoil: f64) -> f64 {
    1.0 / (UnitSystem::OMEGA_REC * omega0 * sigma_t_recoil)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recoil_relation_is_exact() {
        assert_eq!(UnitSystem::OMEGA_REC, 1.0);
        assert_eq!(UnitSystem::MASS, 0.5);
        assert_eq!(UnitSystem::REVIVAL_PERIOD, PI / 2.0);
    }

    #[test]
    fn period_maps_to_half_wavelength() {
        assert!((UnitSystem::to_wavelengths(PI) - 0.5).abs() < 1e-15);
        assert!((UnitSystem::wrap_period(PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((UnitSystem::wrap_period(-3.0 * PI / 4.0) - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn figure_widths_map_to_classical_values() {
        assert!((scaled_pulse_width(1.92e5, 6e-4) - 0.06912).abs() < 1e-12);
        assert!((scaled_pulse_width(4e4, 0.01) - 4.0).abs() < 1e-12);
    }
}
