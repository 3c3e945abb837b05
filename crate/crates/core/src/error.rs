use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("observation is impossible under the current belief (evidence {evidence:e})")]
    ZeroEvidence { evidence: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {class} has degenerate total likelihood mass {total:e}")]
    DegenerateClass { class: usize, total: f64 },

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid likelihood model: {0}")]
    InvalidModel(String),

    #[error("invalid world design: {0}")]
    InvalidDesign(String),

    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),

    #[error("instance too large for exact solving: {0}")]
    InstanceTooLarge(String),

    #[error("behavior policy assigned zero probability to the action taken at step {step}")]
    ZeroBehaviorProb { step: usize },

    #[error("no value is available for image {image}")]
    MissingValue { image: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
