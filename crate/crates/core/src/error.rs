use thiserror::Error;

use crate::bounds::XiDistribution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{active} active devices exceed the {antennas} spatial degrees of freedom")]
    TooManyActive { active: usize, antennas: usize },

    #[error("support of length {given} is too small, need at least {required}")]
    SupportTooSmall { given: usize, required: usize },

    #[error("observation {observation} is inconsistent with belief ({k}, {m}, {u})")]
    InvalidObservation {
        observation: String,
        k: u32,
        m: u32,
        u: u32,
    },

    #[error("device {target} is not part of the scheduled action")]
    TargetNotScheduled { target: usize },

    #[error("length mismatch for `{what}`: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("action of size {size} exceeds the exact-enumeration limit of {limit}")]
    EnumerationTooLarge { size: usize, limit: usize },

    #[error("action space of {size} actions exceeds the cap of {cap}")]
    ActionSpaceTooLarge { size: u128, cap: usize },

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<XiDistribution>,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("only {found} runs matched the target observation summary, need {required}")]
    InsufficientMatches { found: usize, required: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
