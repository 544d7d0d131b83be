use ndtt_autodiff::AutodiffError;
use ndtt_logic::{EngineError, ProgramError};

pub type Result<T, E = NdttError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum NdttError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Numeric(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(
        "{sequence}: token {index} `{event}` at time {time} is not possible; possible events: [{}]",
        possible.join(", ")
    )]
    ImpossibleEvent { sequence: String, index: usize, time: f64, event: String, possible: Vec<String> },
    #[error("non-finite log-likelihood on sequence {sequence}")]
    NonFiniteLoss { sequence: String },
    #[error("thinning bound violated at time {time}: intensity {intensity} exceeds bound {bound}")]
    BoundViolation { time: f64, intensity: f64, bound: f64 },
    #[error("no possible events at step {step}")]
    NoPossibleEvents { step: usize },
    #[error("cannot predict: {0}")]
    Prediction(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl NdttError {
    /// Process exit status for this failure: 1 usage, 2 validation,
    /// 3 data mismatch, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            NdttError::Config(_) => 1,
            NdttError::Program(_) => 2,
            NdttError::Engine(_)
            | NdttError::Data(_)
            | NdttError::ImpossibleEvent { .. }
            | NdttError::NoPossibleEvents { .. }
            | NdttError::Prediction(_)
            | NdttError::Checkpoint(_)
            | NdttError::Io { .. } => 3,
            NdttError::Numeric(_) | NdttError::NonFiniteLoss { .. } | NdttError::BoundViolation { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        NdttError::Io { path: path.as_ref().display().to_string(), source }
    }
}
