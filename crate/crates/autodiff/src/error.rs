use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value produced by layer {layer}")]
    NonFiniteLayer { layer: usize },
    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),
    #[error("operation `{0}` has no forward-mode tangent rule")]
    UnsupportedOp(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AdError>;
