use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("state corruption: {0}")]
    Logic(String),
    #[error("graph validation failed: {}", join(.0))]
    Validation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("gram factor is stale; refresh the network state before sampling")]
    StaleGram,
}

fn join(items: &[String]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(item);
    }
    out
}
