use thiserror::Error;

use crate::data::Arm;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row could not be parsed. `row` is 1-based and counts data rows
    /// after the header.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The censoring curve needed by a subject with a nonzero weight numerator
    /// is (numerically) zero, so the requested time lies beyond reliable
    /// follow-up.
    #[error("positivity violated for subject {id}: censoring survival {value:e} at time {time}")]
    Positivity { id: String, time: f64, value: f64 },

    #[error("arm {arm} has zero total weight")]
    DegenerateArm { arm: Arm },

    #[error("degenerate bandwidth sample: {0}")]
    DegenerateSample(String),

    #[error("empty stratum: {stratum} (arm 0: {arm0} contributors, arm 1: {arm1} contributors)")]
    EmptyStratum {
        stratum: String,
        arm0: usize,
        arm1: usize,
    },

    #[error("treatment effect on the primary outcome is {delta:.3e}; the proportion explained is ill-defined")]
    IllDefinedPte { delta: f64 },

    #[error("time-grid node t = {t}: {source}")]
    Node {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("perturbation inference unreliable: {failures} of {replicates} replicates failed")]
    UnreliableInference {
        failures: usize,
        replicates: usize,
        /// Replicate values that did succeed.
        partial: Vec<f64>,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse classification used by the command-line front end to pick an
    /// exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Argument(_) | Error::Io(_) => {
                ErrorKind::Input
            }
            Error::UnreliableInference { .. } => ErrorKind::Inference,
            Error::Node { source, .. } => source.kind(),
            _ => ErrorKind::Estimation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Estimation,
    Inference,
}
