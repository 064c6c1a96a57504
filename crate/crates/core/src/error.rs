use thiserror::Error;

/// Errors raised while loading or validating a scenario.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed scenario document: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("unknown preset `{0}` (expected single_event or multi_event)")]
    UnknownPreset(String),
    #[error("invalid override `{0}`")]
    Override(String),
}

/// Errors raised by the engine, the sweep runner and the output writers.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol fault: {0}")]
    Protocol(String),
    #[error("sweep error: {0}")]
    Sweep(String),
    #[error("run log error: {0}")]
    Log(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
