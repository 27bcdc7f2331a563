use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A profile field failed validation. `layer` is `None` for model-level fields.
    #[error("invalid profile: {}{field}: {message}", layer.as_deref().map(|l| format!("layer `{l}`: ")).unwrap_or_default())]
    Profile {
        layer: Option<String>,
        field: &'static str,
        message: String,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("batch size {batch} was not measured (nearest measured: {})", fmt_nearest(*lower, *upper))]
    UnmeasuredBatch {
        batch: u32,
        lower: Option<u32>,
        upper: Option<u32>,
    },

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("not a candidate split: layer {layer} (candidates: {candidates:?})")]
    NotCandidate { layer: usize, candidates: Vec<usize> },

    #[error("invalid channel state: {0}")]
    InvalidState(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid generator parameters: {0}")]
    Generator(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    /// An `Error` frame received from the peer.
    #[error("peer reported error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("network error: {0}")]
    Network(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn profile(layer: Option<&str>, field: &'static str, message: impl Into<String>) -> Self {
        Error::Profile {
            layer: layer.map(str::to_owned),
            field,
            message: message.into(),
        }
    }

    /// Whether the error comes from the network or the peer rather than from
    /// the caller's inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Network(_) | Error::Remote { .. } | Error::Protocol(_))
    }
}

fn fmt_nearest(lower: Option<u32>, upper: Option<u32>) -> String {
    match (lower, upper) {
        (Some(l), Some(u)) => format!("{l} and {u}"),
        (Some(b), None) | (None, Some(b)) => b.to_string(),
        (None, None) => "none".to_string(),
    }
}
