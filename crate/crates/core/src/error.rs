use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation order must be at least 2, got {0}")]
    InvalidTruncationOrder(usize),
    #[error("{field}: negative amplitude {value}")]
    NegativeAmplitude { field: &'static str, value: f64 },
    #[error("{field}: {reason}")]
    InvalidFamily { field: &'static str, reason: String },
    #[error("invalid model parameter {field}: {value}")]
    InvalidParams { field: &'static str, value: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("weight g_{index} = {value} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} (h = {h}); the problem may need the stiff method")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("component {index} fell to {value} at t = {t}, below the negativity floor {floor}")]
    NegativityViolation {
        t: f64,
        index: usize,
        value: f64,
        floor: f64,
    },
    #[error("step budget of {0} steps exhausted")]
    TooManySteps(usize),
    #[error("t = {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("accumulator not recorded: {0}")]
    MissingAccumulator(String),
    #[error("invalid moment weights: {0}")]
    InvalidWeights(String),
    #[error("equilibrium residual does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("degenerate denominator in steady-state recursion at cohort {index} (x = {x})")]
    DegenerateDenominator { index: usize, x: f64 },
    #[error("truncation n = {n}: {source}")]
    Rung { n: usize, source: Box<Error> },
}

impl Error {
    /// Stable identifier used in reports and CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidTruncationOrder(_) => "InvalidTruncationOrder",
            Error::NegativeAmplitude { .. } => "NegativeAmplitude",
            Error::InvalidFamily { .. } => "InvalidFamily",
            Error::InvalidParams { .. } => "InvalidParams",
            Error::InvalidState(_) => "InvalidState",
            Error::NegativeWeight { .. } => "NegativeWeight",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NegativityViolation { .. } => "NegativityViolation",
            Error::TooManySteps(_) => "TooManySteps",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::MissingAccumulator(_) => "MissingAccumulator",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::NoBracket { .. } => "NoBracket",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::Rung { source, .. } => source.name(),
        }
    }

    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidTruncationOrder(_)
            | Error::NegativeAmplitude { .. }
            | Error::InvalidFamily { .. }
            | Error::InvalidParams { .. }
            | Error::InvalidState(_)
            | Error::NegativeWeight { .. } => "model",
            Error::DimensionMismatch { .. } => "truncation",
            Error::InvalidConfig(_)
            | Error::StepSizeUnderflow { .. }
            | Error::NegativityViolation { .. }
            | Error::TooManySteps(_)
            | Error::OutOfRange { .. } => "integrator",
            Error::MissingAccumulator(_) | Error::InvalidWeights(_) => "moments",
            Error::NoBracket { .. } | Error::DegenerateDenominator { .. } => "analysis",
            Error::Rung { source, .. } => source.module(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepSizeUnderflow { .. }
            | Error::NegativityViolation { .. }
            | Error::TooManySteps(_)
            | Error::NoBracket { .. }
            | Error::DegenerateDenominator { .. } => true,
            Error::Rung { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
