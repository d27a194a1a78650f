//! Small dense autodiff engine for training MLPs and differentiating through
//! physics-structured models.
//!
//! Reverse mode lives in [`Graph::backward`]. Forward-mode tangents
//! ([`Graph::jvp`]) are recorded as ordinary nodes, so a loss built from
//! input Jacobians can itself be differentiated.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod jvp;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{AdError, Result};
pub use graph::{sigmoid, softplus, wrap_angle, Gradients, Graph, NodeId, UnaryFn};
pub use jvp::input_jacobian;
pub use mlp::{mlp_forward, Activation, Layer, MlpNodes, MlpParams};
pub use optim::{clip_grad_norm, global_norm, AdamWConfig, OptState};
pub use tensor::Tensor;
