use thiserror::Error;

pub type Result<T, E = SbarError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SbarError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("capacity exceeded: {requested} ports requested but only {available} available")]
    Capacity { requested: usize, available: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("numerical failure in {context} (condition estimate {condition_estimate:e})")]
    NumericalFailure {
        context: String,
        condition_estimate: f64,
    },

    #[error("all ports already measured")]
    ExhaustedSchedule,

    #[error("measurement failed: {0}")]
    Measurement(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SbarError {
    pub(crate) fn numerical(context: impl Into<String>, condition_estimate: f64) -> Self {
        SbarError::NumericalFailure {
            context: context.into(),
            condition_estimate,
        }
    }
}
