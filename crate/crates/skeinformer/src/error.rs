//! Error type shared by every module in the crate.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix file did not follow the MATF layout. `offset` is the byte
    /// position at which decoding failed.
    #[error("format error in {path} at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// An operation that materializes O(n^2) state was asked to exceed its cap.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// A statistical check or output sanity bound did not hold.
    #[error("verification failed: {0}")]
    Verification(String),

    /// An invariant the implementation is supposed to maintain was broken.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    /// 0 success, 1 usage, 2 i/o or format, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::ResourceLimit(_) => 1,
            Error::Format { .. } | Error::Io(_) | Error::Internal(_) => 2,
            Error::Verification(_) => 3,
        }
    }
}
