//! Result containers shared by every solver tier.

use serde::{Deserialize, Serialize};

use crate::units::{TimeUnit, UnitSystem};

/// Spatial probability density over one potential period.
///
/// `x` is in wavelengths and spans `[-1/4, 1/4)`; `p` is normalized to unit
/// mean over the period, so a uniform distribution reads `P = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub time: f64,
    pub time_unit: TimeUnit,
}

impl DensityProfile {
    /// Integral of `P` over the period, measured in units of the period.
    pub fn integral(&self) -> f64 {
        if self.p.is_empty() {
            return 0.0;
        }
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }

    /// `<cos 2kx>` by direct quadrature over the sampled profile.
    pub fn mean_cos2(&self) -> f64 {
        let n = self.p.len() as f64;
        self.x
            .iter()
            .zip(&self.p)
            .map(|(&x, &p)| p * (2.0 * x * UnitSystem::WAVELENGTH).cos())
            .sum::<f64>()
            / n
    }

    /// Localization factor `1 + sgn <cos 2kx>` of the sampled profile.
    pub fn localization(&self, detuning_sign: f64) -> f64 {
        1.0 + detuning_sign * self.mean_cos2()
    }

    /// Indices of strict local maxima on the periodic grid.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.p.len();
        (0..n)
            .filter(|&i| {
                let prev = self.p[(i + n - 1) % n];
                let next = self.p[(i + 1) % n];
                self.p[i] > prev && self.p[i] >= next
            })
            .collect()
    }
}

/// Sampled localization factor `L(t)` with its located global minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub time_unit: TimeUnit,
    pub minimum: Option<Minimum>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub t_m: f64,
    pub l_min: f64,
}

impl LocalizationTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, time_unit: TimeUnit) -> Self {
        assert_eq!(times.len(), values.len());
        Self { times, values, time_unit, minimum: None }
    }

    /// Index of the smallest sample; ties within `1e-6` go to the earliest time.
    pub fn argmin(&self) -> Option<usize> {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return None;
        }
        self.values.iter().position(|&v| v <= min + 1e-6)
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_resolves_to_earliest() {
        let t = LocalizationTrace::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.5, 0.2, 0.3, 0.2 - 5e-7], TimeUnit::Recoil);
        assert_eq!(t.argmin(), Some(1));
    }

    #[test]
    fn grid_endpoints() {
        let g = uniform_grid(0.0, 1.0, 5);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
