use std::io;

use thiserror::Error;

/// Errors raised anywhere in the inverse-problem pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss must be a scalar, got a {rows}x{cols} value")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter out of bounds: {0}")]
    OutOfBounds(String),

    #[error("unstable time step: {0}")]
    Stability(String),

    #[error("simulation blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("grid budget exceeded: {required} nodes requested, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("{skipped} of {total} samples failed to simulate (limit 1%)")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("problem {problem}: {source}")]
    Problem {
        problem: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Attach the id of the inverse problem being processed.
    pub fn in_problem(self, problem: u64) -> Self {
        Error::Problem {
            problem,
            source: Box::new(self),
        }
    }

    /// True for failures rooted in numerics rather than configuration or IO.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::NonFiniteGradient { .. }
            | Error::BlowUp { .. }
            | Error::TrainingDiverged { .. }
            | Error::TooManySkipped { .. }
            | Error::Stability(_) => true,
            Error::Problem { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::Format(_) | Error::Csv(_) => true,
            Error::Problem { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
