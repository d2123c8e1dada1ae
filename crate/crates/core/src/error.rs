use thiserror::Error;

/// Errors produced by the numerical routines of the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight is singular at the evaluation point {0:?}")]
    SingularPoint(Vec<f64>),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },

    #[error("inadmissible weight: {0}")]
    InadmissibleWeight(String),

    #[error("envelope violation: {0}")]
    EnvelopeViolation(String),

    #[error("kernel sandwich could not be fitted: {0}")]
    SandwichViolation(String),

    #[error("boundary contamination: shell mass {shell_mass:e} exceeds {limit:e} at t = {time}")]
    BoundaryContamination { shell_mass: f64, limit: f64, time: f64 },

    #[error("time step underflow at t = {time} (dt = {dt:e})")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("explicit step dt = {dt:e} exceeds the stability limit {limit:e}")]
    UnstableStep { dt: f64, limit: f64 },

    #[error("Picard iterate {iterate} exceeded the cap at t = {time}")]
    IterateOverflow { iterate: usize, time: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("insufficient fit window: {0}")]
    InsufficientWindow(String),

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
