use thiserror::Error;

/// Everything that can go wrong while building, extracting or verifying models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed phase `{0}`: expected `p/r` or `rad:θ`")]
    PhaseSyntax(String),
    #[error("invalid q-matrix: {0}")]
    InvalidQMatrix(String),
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid truncation window: cap {cap}, band {band}")]
    InvalidWindow { cap: usize, band: usize },
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("operator is not isometric on the safe window (column {column}, residual {residual:.3e})")]
    NotIsometric { column: String, residual: f64 },
    #[error("limit did not stabilise within {iterations} iterations (last residual {residual:.3e})")]
    Inconclusive { iterations: usize, residual: f64 },
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("pair is not q-commutative (residual {residual:.3e})")]
    NotQCommutative { residual: f64 },
    #[error("no unimodular q satisfies V1 V2 = q V2 V1 (best residual {residual:.3e})")]
    NoUnimodularQ { residual: f64 },
    #[error("inconsistent q: {0}")]
    InconsistentQ(String),
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("invalid model tuple: {0}")]
    InvalidTuple(String),
    #[error("hypothesis failure: {0}")]
    Hypothesis(String),
    #[error("exact arithmetic requires rational-rotation phases")]
    IrrationalPhase,
    #[error("word syntax: {0}")]
    WordSyntax(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("operator syntax: {0}")]
    OperatorSyntax(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
