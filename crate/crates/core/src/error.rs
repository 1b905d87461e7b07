use std::fmt;

use thiserror::Error;

/// A single violated invariant, tagged with the offending item.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Issue {
    /// Kernel label, device-type name or field path.
    pub subject: String,
    pub message: String,
}

impl Issue {
    pub fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn join(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", join(.0))]
    Validation(Vec<Issue>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no feasible schedule; blocking kernels: {}", .kernels.join(", "))]
    Infeasible { kernels: Vec<String> },

    #[error("kernel `{kernel}` is not eligible on device type `{device}`")]
    Ineligible { kernel: String, device: String },

    #[error("instance too large for exhaustive search: {0}")]
    OracleGuard(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("energy contract violated: period {period} s is shorter than the longest stage {longest} s")]
    PeriodTooShort { period: f64, longest: f64 },

    #[error("transfer conflict on stage {stage}: [{a_start}, {a_end}) overlaps [{b_start}, {b_end})")]
    TransferConflict {
        stage: usize,
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },

    #[error("simulation precondition: {0}")]
    Simulation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation(vec![Issue::new(subject, message)])
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
