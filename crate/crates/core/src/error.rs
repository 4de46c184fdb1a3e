use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular normal matrix (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("graph is not connected")]
    Disconnected,

    #[error("no connected geometric graph after {attempts} attempts")]
    ConnectivityFailure { attempts: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("traffic mismatch: simulated {simulated} scalars, predicted {predicted}")]
    TrafficMismatch { simulated: u64, predicted: u64 },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        })
    }
}
