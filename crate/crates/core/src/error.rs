use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("reuse factor {rf} is not legal for layer (k={k}, n={n})")]
    IllegalReuseFactor { rf: u64, k: u64, n: u64 },

    /// No legal reuse factor fits the budget, even fully serialized.
    #[error("layer (k={k}, n={n}) does not fit the PL budget even at reuse factor {max_rf}")]
    ResourceWall { k: u64, n: u64, max_rf: u64 },

    #[error("non-monotone trade-off curve for {group}: {detail}")]
    NonMonotone { group: String, detail: String },

    #[error("{0} tiles exceed the usable array")]
    ArrayOverflow(String),

    #[error("per-tile workload (m={m}, q_k={q_k}, q_n={q_n}) needs {footprint} bytes, budget is {budget}")]
    MemoryInfeasible {
        m: u64,
        q_k: u64,
        q_n: u64,
        footprint: u64,
        budget: u64,
    },

    #[error("no feasible tiling: {0}")]
    Infeasible(String),

    #[error("search space of {size} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u64, cap: u64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("illegal plan: {0}")]
    IllegalPlan(String),

    #[error("missing cost: {0}")]
    MissingCost(String),

    #[error("pin conflict: {0}")]
    PinConflict(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }
}
