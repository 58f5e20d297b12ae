use thiserror::Error;

use crate::dynamic::IdentifiabilityViolation;
use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: u64,
        message: String,
    },

    #[error("LP for DMU {dmu} (period {period}) ended with status {status:?}")]
    Model {
        dmu: String,
        period: String,
        status: LpStatus,
    },

    #[error("ranking model is not identifiable: {0}")]
    Identifiability(IdentifiabilityViolation),

    #[error("optimization did not converge: {0}")]
    Convergence(String),

    #[error("rank-deficient design, collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("bootstrap failed: {failed} of {total} replicates did not converge")]
    Bootstrap { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Data { .. } | Error::Io(_) | Error::Csv(_) => 2,
            Error::Model { .. }
            | Error::Identifiability(_)
            | Error::Convergence(_)
            | Error::RankDeficient { .. }
            | Error::Bootstrap { .. } => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
