use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid approximator spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("goal unreachable from ({x}, {y})")]
    Unreachable { x: i64, y: i64 },
    #[error("expert controller failed: {0}")]
    ExpertFailed(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
