//! Atom lithography with a pulsed standing-wave light mask.
//!
//! Classical, coherent quantum and Monte Carlo wave-function models of atoms
//! focused by a near-resonant standing wave, plus focal-point search tools.

pub mod adiabatic;
pub mod classical;
pub mod config;
pub mod error;
pub mod figures;
pub mod mask;
pub mod mcwf;
pub mod ode;
pub mod optimize;
pub mod output;
pub mod quadrature;
pub mod quantum;
pub mod rng;
pub mod trace;
pub mod units;

pub use error::{Error, Result};
pub use mask::MaskParams;
pub use trace::{DensityProfile, LocalizationTrace, Minimum};
pub use units::{TimeUnit, UnitSystem};
