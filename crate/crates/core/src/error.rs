use thiserror::Error;

use crate::fields::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel {family} is singular at u1 = 0; grazing collisions must be treated separately")]
    GrazingSingular { family: &'static str },

    #[error("quadrature on [{lo}, {hi}] did not converge: partial sum {partial}, error estimate {error}")]
    Quadrature { lo: f64, hi: f64, partial: f64, error: f64 },

    #[error("characteristic step size underflow at s = {s} (last good x1 = {x1}, v1 = {v1})")]
    StepUnderflow { s: f64, x1: f64, v1: f64 },

    #[error("configuration rejected:\n{0}")]
    Validation(ValidationReport),

    #[error("body force E = {e} outside the attained drag range [{lo}, {hi}]")]
    EquilibriumOutOfRange { e: f64, lo: f64, hi: f64 },

    #[error("relaxation rate b(t) = {b} is not positive at t = {t}")]
    NonPositiveRate { t: f64, b: f64 },

    #[error("fixed-point iteration diverged; residual history {history:?}")]
    Divergence { history: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time {t} outside path span [0, {end}]")]
    OutOfSpan { t: f64, end: f64 },

    #[error("particle crossed the disk plane more than {max} times in one step")]
    TooManySubsteps { max: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
