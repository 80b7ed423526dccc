use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("need ≥2 values")]
    NeedTwoValues,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix not positive definite")]
    NotPositiveDefinite,
    #[error("simplex stalled after {0} iterations")]
    SimplexStalled(usize),
    #[error("oracle scale exceeded: {0}")]
    OracleScale(String),
    #[error("target return infeasible")]
    TargetReturnInfeasible,
    #[error("need at least two batches (n = {n}, k = {k})")]
    TooFewBatches { n: usize, k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible decision: {0}")]
    InfeasibleDecision(String),
    #[error("SAA solve failed on {context} {index}: {source}")]
    Indexed {
        context: IndexKind,
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown problem key `{0}` (expected cvar, portfolio, ip or toylp)")]
    UnknownProblem(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Resample,
    Batch,
    Replication,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Resample => "resample",
            IndexKind::Batch => "batch",
            IndexKind::Replication => "replication",
        })
    }
}

impl Error {
    pub(crate) fn at(self, context: IndexKind, index: usize) -> Error {
        Error::Indexed {
            context,
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidParameter(msg.into())
    }
}
