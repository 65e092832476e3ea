use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input at coordinate {0}")]
    NonFinite(usize),

    #[error("invalid term {index}: {reason}")]
    InvalidTerm { index: usize, reason: String },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("set function does not vanish on the {which} set (value {value})")]
    NonVanishing { which: &'static str, value: f64 },

    #[error("set function is not symmetric")]
    Asymmetric,

    #[error("direction lies in the kernel of the norm")]
    KernelDirection,

    #[error("chord search failed to converge (residual {0:e})")]
    ChordFailure(f64),

    #[error("norm is not ({r}, {big_r})-rounded: ratio {ratio} observed")]
    NotRounded { r: f64, big_r: f64, ratio: f64 },

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error("sample point has zero norm")]
    ZeroNormSample,

    #[error("all importance masses are zero")]
    ZeroMass,

    #[error("matrix is rank deficient (rank {rank} < {n})")]
    RankDeficient { rank: usize, n: usize },

    #[error("stage {stage} failed after {attempts} attempts: {reason}")]
    StageFailure {
        stage: usize,
        attempts: usize,
        reason: String,
    },

    #[error("weight sum exceeded 2m on every one of {0} attempts")]
    WeightSumBudget(usize),

    #[error("instance too large for exhaustive enumeration (n = {0}, limit 20)")]
    TooLarge(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
