use thiserror::Error;

/// Errors produced by the network simulator, learner and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    InputShape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class balance error: class {class} has no training samples")]
    Balance { class: usize },

    #[error("bounded-flux violation: s0 - w^j * flux = {margin} < 0 for subset {subset}")]
    BoundedFlux { subset: String, margin: f64 },

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("value out of range at line {line}: {message}")]
    Range { line: usize, message: String },

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("model load error: {0}")]
    Load(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for configuration/validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Balance { .. }
            | Error::Domain(_)
            | Error::InputShape(_)
            | Error::Parse { .. }
            | Error::Range { .. }
            | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
