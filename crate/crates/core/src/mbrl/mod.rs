//! Model-based actor-critic: replay, imagination and the training loop.

pub mod actor;
pub mod behaviour;
pub mod imagine;
pub mod policy;
pub mod replay;
pub mod returns;
pub mod training;

pub use actor::{critic_value, ActionSample, Actor, SampleMode};
pub use behaviour::{BehaviourConfig, BehaviourLearner, BehaviourStats};
pub use imagine::{actor_loss, actuation_matrix, critic_loss, imagine, Imagination, ImaginedTrajectory};
pub use policy::{FnPolicy, LinearPolicy, Policy, ZeroPolicy};
pub use replay::{ReplayBuffer, Transition};
pub use returns::{lambda_return, lambda_return_graph};
pub use training::{
    load_actor, load_spec, put_opt, CsvMetrics, EpisodeMetrics, TrainConfig, TrainObserver, TrainSummary, Trainer,
    METRICS_HEADER,
};
