use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates its invariant, or scene placement
    /// could not be satisfied.
    Config(String),
    /// An input had the wrong shape or a non-finite value.
    Input(String),
    /// An operation was invoked in a state that does not allow it.
    State(String),
    /// Pretraining did not reach its validation threshold.
    Pretrain {
        stage: u8,
        validation_error: f64,
        threshold: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Pretrain {
                stage,
                validation_error,
                threshold,
            } => write!(
                f,
                "pretraining stage {stage} failed: validation error {validation_error:.6} \
                 exceeds threshold {threshold:.6}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;
