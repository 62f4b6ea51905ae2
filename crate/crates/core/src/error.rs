use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gcd({a}, {b}) != 1")]
    NotCoprime { a: i64, b: u64 },

    #[error("no admissible scale: bucket for M = {m} is empty")]
    NoAdmissibleScale { m: u64 },

    #[error("window exhausted{}", exhausted_detail(*largest_tried, *gap))]
    WindowExhausted {
        largest_tried: Option<u64>,
        gap: Option<f64>,
    },

    #[error("bandwidth budget exceeded: {requested} coefficients requested, budget {budget}")]
    BandwidthExceeded { requested: u64, budget: u64 },

    #[error("operation needs a complete series, got a windowed one")]
    WindowedOperand,

    #[error("malformed stage artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

fn exhausted_detail(m: Option<u64>, gap: Option<f64>) -> String {
    match (m, gap) {
        (Some(m), Some(g)) => format!(": largest M tried = {m}, gap = {g}"),
        (Some(m), None) => format!(": largest M tried = {m}"),
        _ => ": no candidate scale".into(),
    }
}
