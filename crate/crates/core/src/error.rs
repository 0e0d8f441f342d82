use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("detuning ratio is zero; the sign of the adiabatic potential is undefined")]
    ZeroDetuning,
    #[error("adaptive integration could not meet the tolerance at t = {t:e} (step {h:e})")]
    ToleranceNotMet { t: f64, h: f64 },
    #[error("momentum ladder truncation overflow: boundary population {population:e} with n_max = {n_max}")]
    TruncationOverflow { n_max: usize, population: f64 },
    #[error("collapse requested with an empty excited ladder at t = {t:e}")]
    EmptyExcited { t: f64 },
    #[error("global minimum sits on the {edge} edge of the search window [{lo}, {hi}]")]
    WindowTooNarrow { edge: &'static str, lo: f64, hi: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
