use thiserror::Error;

/// Errors raised by the regression and experiment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A kernel or experiment configuration violates one of its constraints.
    #[error("configuration error: {0}")]
    Config(String),
    /// A point lies outside the domain of the kernel.
    #[error("domain error: {0}")]
    Domain(String),
    /// An argument is out of range or has the wrong length.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An input does not satisfy an operation's contract (e.g. a non-symmetric matrix).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The computation produced a value outside its numerically admissible band.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An external feature file could not be read.
    #[error("ingestion error: {0}")]
    Ingestion(String),
    /// A Monte-Carlo replicate failed; carries the replicate's derived seed.
    #[error("replicate {index} (seed {seed:#018x}) failed: {cause}")]
    Replicate {
        index: usize,
        seed: u64,
        cause: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
