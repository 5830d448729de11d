//! Crate-level error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::matrix::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("channel of user {user} is rank deficient")]
    RankDeficientChannel { user: usize },
    #[error("dimension mismatch: {context}")]
    Dimension { context: String },
    #[error("invalid {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("infeasible allocation: {message}")]
    Infeasible { message: String },
    #[error("fixture parse error at line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("failed writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("experiment batch aborted: {failed} of {total} trials failed")]
    BatchAborted { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
