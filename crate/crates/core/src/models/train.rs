use lagrl_autodiff::{clip_grad_norm, AdamWConfig, Graph, OptState, Tensor};

use super::dynamics::Dynamics;
use super::loss::{l1_reward_loss, l1_state_loss};
use super::reward::RewardModel;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::physics::EnvSpec;

/// Rows are transitions: `states`/`next` are `B×2n`, `taus` `B×n`, `rewards` `B×1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub states: Tensor,
    pub taus: Tensor,
    pub rewards: Tensor,
    pub next: Tensor,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelLosses {
    pub dyn_loss: f64,
    pub rew_loss: f64,
    /// Global gradient norms before clipping.
    pub dyn_grad_norm: f64,
    pub rew_grad_norm: f64,
}

/// AdamW state for the dynamics and reward models.
#[derive(Clone, Debug)]
pub struct ModelTrainer {
    pub config: ModelConfig,
    dyn_opt: OptState,
    rew_opt: OptState,
    pub updates: u64,
    pub skipped: u64,
}

fn adamw(cfg: &ModelConfig) -> AdamWConfig {
    AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    }
}

impl ModelTrainer {
    pub fn new(config: ModelConfig, dynamics: &Dynamics, reward: &RewardModel) -> Self {
        let dyn_opt = OptState::new(adamw(&config), dynamics.params());
        let rew_opt = OptState::new(adamw(&config), reward.net.tensors());
        ModelTrainer {
            config,
            dyn_opt,
            rew_opt,
            updates: 0,
            skipped: 0,
        }
    }

    pub fn opt_states(&self) -> (&OptState, &OptState) {
        (&self.dyn_opt, &self.rew_opt)
    }

    /// One AdamW step on both models. A numeric failure leaves the
    /// parameters untouched, counts the batch as skipped and returns the error.
    pub fn update(
        &mut self,
        dynamics: &mut Dynamics,
        reward: &mut RewardModel,
        spec: &EnvSpec,
        batch: &TransitionBatch,
    ) -> Result<ModelLosses> {
        if self.config.strict_batch && batch.len() != self.config.batch_size {
            return Err(Error::Contract(format!(
                "batch has {} transitions, strict mode requires {}",
                batch.len(),
                self.config.batch_size
            )));
        }
        match self.try_update(dynamics, reward, spec, batch) {
            Ok(l) => {
                self.updates += 1;
                Ok(l)
            }
            Err(e) => {
                self.skipped += 1;
                Err(e)
            }
        }
    }

    fn try_update(
        &mut self,
        dynamics: &mut Dynamics,
        reward: &mut RewardModel,
        spec: &EnvSpec,
        batch: &TransitionBatch,
    ) -> Result<ModelLosses> {
        let mut g = Graph::new();
        let dn = dynamics.register(&mut g, true);
        let rn = reward.net.register(&mut g, true);
        let s = g.constant(batch.states.clone());
        let tau = g.constant(batch.taus.clone());
        let next = g.constant(batch.next.clone());
        let r = g.constant(batch.rewards.clone());
        let pred = dynamics.predict(&mut g, &dn, spec, s, tau)?;
        let dl = l1_state_loss(&mut g, pred, next, &spec.state_angle_mask());
        let rp = reward.predict(&mut g, &rn, next)?;
        let rl = l1_reward_loss(&mut g, rp, r);
        let (dyn_loss, rew_loss) = (g.value(dl).item(), g.value(rl).item());
        if !dyn_loss.is_finite() {
            return Err(Error::Numeric("dynamics loss is not finite".into()));
        }
        if !rew_loss.is_finite() {
            return Err(Error::Numeric("reward loss is not finite".into()));
        }
        let total = g.add(dl, rl);
        let grads = g.backward(total)?;
        let mut dg = dn.grads(&g, &grads);
        let mut rg = rn.grads(&g, &grads);
        if let Some(i) = dg.iter().position(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("dynamics gradient tensor {i} is not finite")));
        }
        if let Some(i) = rg.iter().position(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("reward gradient tensor {i} is not finite")));
        }
        let dyn_grad_norm = clip_grad_norm(&mut dg, self.config.grad_clip);
        let rew_grad_norm = clip_grad_norm(&mut rg, self.config.grad_clip);
        if !dg.is_empty() {
            self.dyn_opt.adamw_step(&mut dynamics.params_mut(), &dg)?;
        }
        self.rew_opt.adamw_step(&mut reward.net.tensors_mut(), &rg)?;
        Ok(ModelLosses {
            dyn_loss,
            rew_loss,
            dyn_grad_norm,
            rew_grad_norm,
        })
    }
}

/// Held-out one-step L1 losses, no parameter update.
pub fn evaluate_losses(dynamics: &Dynamics, reward: &RewardModel, spec: &EnvSpec, batch: &TransitionBatch) -> Result<ModelLosses> {
    let mut g = Graph::new();
    let dn = dynamics.register(&mut g, false);
    let rn = reward.net.register(&mut g, false);
    let s = g.constant(batch.states.clone());
    let tau = g.constant(batch.taus.clone());
    let next = g.constant(batch.next.clone());
    let r = g.constant(batch.rewards.clone());
    let pred = dynamics.predict(&mut g, &dn, spec, s, tau)?;
    let dl = l1_state_loss(&mut g, pred, next, &spec.state_angle_mask());
    let rp = reward.predict(&mut g, &rn, next)?;
    let rl = l1_reward_loss(&mut g, rp, r);
    Ok(ModelLosses {
        dyn_loss: g.value(dl).item(),
        rew_loss: g.value(rl).item(),
        ..ModelLosses::default()
    })
}
