use thiserror::Error as ThisError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(ThisError, Debug)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed tree file at byte {offset}: {reason}")]
    TreeFormat { offset: usize, reason: String },

    #[error("malformed bitstream: {0}")]
    Bitstream(String),

    #[error("truncated bitstream")]
    Truncated,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no feasible solution: {0}")]
    Infeasible(String),
}
