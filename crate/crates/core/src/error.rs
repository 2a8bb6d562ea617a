use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("positivity violation: behavior probability {mu} at subject {subject}, stage {stage} is outside (0, 1]")]
    Positivity {
        subject: String,
        stage: usize,
        mu: f64,
    },

    #[error("malformed trajectory for subject {subject}: {reason}")]
    MalformedTrajectory { subject: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("Dantzig program infeasible at lambda_w = {lambda}; smallest feasible lambda_w is about {min_feasible}")]
    DantzigInfeasible { lambda: f64, min_feasible: f64 },

    #[error("degenerate information {info:e} for coordinate {coordinate}")]
    DegenerateInformation { coordinate: usize, info: f64 },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
