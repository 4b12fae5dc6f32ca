use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Invalid user input: bad shapes, non-finite samples, out-of-range knobs.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("periodicity error: {0}")]
    Periodicity(String),

    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    #[error("unstable periodic error dynamics: {0}")]
    Stability(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("evaluation failed at t = {t}: {reason}")]
    Eval { t: f64, reason: String },

    #[error("no admissible observer gain: {0}")]
    GainSelection(String),

    #[error("time {t} outside [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Invalid(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Invalid(format!("csv: {e}")),
        }
    }
}
