//! Ground-truth simulators built from the closed-form Lagrangian of each linkage.

pub mod dynamics;
pub mod env;
pub mod spec;
pub mod trajectory;

pub use env::{Env, GoalTracker, State};
pub use spec::{EnvSpec, InitDistribution, ENV_NAMES};
pub use trajectory::{TrajectoryLog, TrajectoryRow};
