use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid tree structure at node {index}: {reason}")]
    Structure { index: usize, reason: String },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown type name `{name}`; valid names: {valid}")]
    UnknownType { name: String, valid: String },
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("observer failed: {0}")]
    Observer(String),
}
