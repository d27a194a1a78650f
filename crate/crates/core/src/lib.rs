//! Physics-informed model-based reinforcement learning.
//!
//! Ground-truth Lagrangian simulators, learned DNN and Lagrangian dynamics
//! models, an actor-critic trained through imagined rollouts, finite-time
//! Lyapunov analysis and imagined-trajectory diagnostics.

pub mod algebra;
pub mod diagnostics;
pub mod error;
pub mod lyapunov;
pub mod mbrl;
pub mod models;
pub mod parallel;
pub mod physics;

pub use error::{Error, Result};
