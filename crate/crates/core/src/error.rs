use thiserror::Error;

/// Errors raised by the trackers, the association kernels and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("association index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("singular innovation covariance: degenerate track")]
    DegenerateTrack,

    #[error("joint event count exceeds cap of {cap}; tighten the gate")]
    EventCapExceeded { cap: usize },

    #[error("unknown scenario id {0} (expected 1, 2 or 3)")]
    UnknownScenario(u8),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TrackError {
    fn from(e: std::io::Error) -> Self {
        TrackError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TrackError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> TrackError {
    TrackError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
