use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every weight handed to a normalization was zero (or underflowed).
    #[error("probability weights are all zero")]
    AllZero,

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("channel specification mismatch: {0}")]
    SpecMismatch(String),

    #[error("brute-force enumeration of {assignments} assignments exceeds the cap of {cap}")]
    TooLarge { assignments: u128, cap: u128 },

    #[error("joint trellis with {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: u128 },

    #[error("exact factor needs {evaluations} evaluations, budget is {budget}; use the approximate detector")]
    ComplexityCap { evaluations: u128, budget: u128 },

    #[error("unknown preset scenario `{0}`")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
