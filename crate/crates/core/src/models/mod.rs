//! Learned dynamics and reward models.
//!
//! Both dynamics models map a batch of states `B×2n` and generalized forces
//! `B×n` to next states. The DNN regresses the next state directly; the LNN
//! learns `L(q)` (with `M̂ = L Lᵀ`) and a potential `V̂(q)`, derives `q̈`
//! through the Euler-Lagrange equations and integrates with explicit
//! midpoint RK2.

mod checkpoint;
mod dnn;
mod dynamics;
mod lnn;
mod loss;
mod normalize;
mod oracle;
mod reward;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{get_mlp, get_norm, load_models, put_mlp, put_norm, save_models, ModelMeta};
pub use dnn::DnnModel;
pub use dynamics::{DynNodes, Dynamics};
pub use lnn::{tril_index, tril_len, LnnModel, LnnTerms};
pub use loss::{l1_reward_loss, l1_state_loss};
pub use normalize::Normalizer;
pub use oracle::OracleModel;
pub use reward::{OracleReward, RewardModel, RewardNodes, Rewards};
pub use train::{evaluate_losses, ModelLosses, ModelTrainer, TransitionBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dnn,
    Lnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Lnn => "lnn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(ModelKind::Dnn),
            "lnn" => Ok(ModelKind::Lnn),
            other => Err(Error::Config(format!("unknown model kind `{other}` (expected dnn or lnn)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths of the DNN, the L and V networks and the reward network.
    pub dnn_hidden: Vec<usize>,
    pub lnn_hidden: Vec<usize>,
    pub reward_hidden: Vec<usize>,
    /// DNN predicts `s + Δ` instead of `s'`.
    pub dnn_residual: bool,
    /// Standardize network inputs with statistics from the first data.
    pub normalize_inputs: bool,
    /// Added to the softplus diagonal of `L`.
    pub lnn_eps: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    /// Reject batches whose size differs from `batch_size`.
    pub strict_batch: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dnn_hidden: vec![64, 64],
            lnn_hidden: vec![64, 64],
            reward_hidden: vec![64, 64],
            dnn_residual: false,
            normalize_inputs: false,
            lnn_eps: 1e-4,
            lr: 3e-4,
            weight_decay: 1e-2,
            grad_clip: 100.0,
            batch_size: 64,
            strict_batch: false,
        }
    }
}
