use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Refused because full enumeration would be infeasible.
    #[error("state space too large: {what} has {size} entries (limit {limit})")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("unobserved realization: variable {var}, realization rank {rank}, action {action}")]
    Unobserved {
        var: usize,
        rank: usize,
        action: usize,
    },

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("behavior policy assigns probability 0 to logged action {action} (trajectory {trajectory}, step {step})")]
    LoggingInconsistency {
        trajectory: usize,
        step: usize,
        action: usize,
    },

    #[error("normalized error undefined: |truth| = {0} is below 1e-12")]
    UndefinedMetric(f64),

    #[error("unknown domain `{0}`")]
    UnknownDomain(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for refusals caused by infeasible sizes (flat model on a huge
    /// state space, exact enumeration beyond the guard, ...).
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::TooLarge { .. })
    }
}
