use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid recruitment plan: {0}")]
    Plan(String),

    #[error("allocation ratio of arm {arm} to control changes across stages ({detail}); the weighted Z reconstruction requires a constant ratio within each phase")]
    RatioInconsistent { arm: usize, detail: String },

    #[error("calibration failed for hypothesis {hypothesis}: {reason}")]
    Calibration { hypothesis: String, reason: String },

    #[error("target level {level:e} is below the Monte Carlo resolution of {replicates} replicates; increase the replicate count")]
    NoiseFloor { level: f64, replicates: u64 },

    #[error("no amendment: trial concluded ({0})")]
    TrialStopped(String),

    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn plan(msg: impl Into<String>) -> Self {
        Error::Plan(msg.into())
    }
}
