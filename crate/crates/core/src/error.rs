use thiserror::Error;

use crate::oscillator::StabilityClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("potential with mu1 = {mu1}, mu3 = {mu3} is outside the stability taxonomy")]
    Unclassifiable { mu1: f64, mu3: f64 },

    #[error("parameters classified as {0:?}; only monostable or linear systems are admissible")]
    NotAdmissible(StabilityClass),

    #[error("moment set is missing entry ({0}, {1})")]
    IncompleteMomentSet(usize, usize),

    #[error("requested time {t} lies beyond the recorded history (ends at {end})")]
    HistoryTooShort { t: f64, end: f64 },

    #[error("correction cycles did not converge on coarse step {step} within {max_cycles} cycles")]
    NoConvergence { step: usize, max_cycles: usize },

    #[error("instability at t = {t}: variance became {value}")]
    InstabilityDetected { t: f64, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel is not localizable: {0}")]
    NotLocalizable(String),

    #[error("interval mismatch: [{a0}, {a1}] vs [{b0}, {b1}]")]
    IntervalMismatch { a0: f64, a1: f64, b0: f64, b1: f64 },

    #[error("integrator failure{}: {reason}", sample.map(|s| format!(" on sample {s}")).unwrap_or_default())]
    IntegratorFailure { sample: Option<usize>, reason: String },

    #[error("denominator C_xy = {value} is within {ratio:.2} standard errors of zero")]
    DegenerateDenominator { value: f64, ratio: f64 },

    #[error("histogram range excludes every sample")]
    EmptyBins,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
