use lagrl_autodiff::{clip_grad_norm, AdamWConfig, Graph, MlpParams, OptState, Tensor, Activation};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actor::Actor;
use super::imagine::{actor_loss, actuation_matrix, critic_loss, imagine, Imagination};
use crate::error::{Error, Result};
use crate::models::{Dynamics, Rewards};
use crate::parallel::Workers;
use crate::physics::EnvSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviourConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Entropy weight η.
    pub eta: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Critic updates between hard copies into the target.
    pub target_every: u64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Fixed split of each batch into independently recorded chunks. The
    /// split does not depend on the worker count, so results do not either.
    pub chunks: usize,
}

impl Default for BehaviourConfig {
    fn default() -> Self {
        BehaviourConfig {
            horizon: 16,
            gamma: 0.99,
            lambda: 0.95,
            eta: 1e-4,
            batch_size: 64,
            lr: 3e-4,
            weight_decay: 1e-2,
            grad_clip: 100.0,
            target_every: 100,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            sigma_min: 1e-3,
            sigma_max: 2.0,
            chunks: 4,
        }
    }
}

impl BehaviourConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.batch_size == 0 || self.chunks == 0 || self.target_every == 0 {
            return Err(Error::Config("horizon, batch size, chunks and target period must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("need γ ∈ (0,1] and λ ∈ [0,1]".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(Error::Config("need 0 < sigma_min < sigma_max".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BehaviourStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Global norms before clipping.
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    /// Global norms actually applied.
    pub actor_grad_norm_clipped: f64,
    pub critic_grad_norm_clipped: f64,
}

/// Actor, critic and target critic with their optimizers.
#[derive(Clone, Debug)]
pub struct BehaviourLearner {
    pub config: BehaviourConfig,
    pub actor: Actor,
    pub critic: MlpParams,
    pub target: MlpParams,
    pub actor_opt: OptState,
    pub critic_opt: OptState,
    pub updates: u64,
    pub syncs: u64,
    /// Batches discarded after a numeric failure in imagination.
    pub incidents: u64,
    pub clamped: u64,
}

struct ChunkOut {
    actor_grads: Vec<Tensor>,
    critic_grads: Vec<Tensor>,
    actor_loss: f64,
    critic_loss: f64,
    clamped: usize,
}

impl BehaviourLearner {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: BehaviourConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut actor = Actor::new(spec.state_dim(), spec.action_dim(), &config.actor_hidden, rng);
        actor.sigma_min = config.sigma_min;
        actor.sigma_max = config.sigma_max;
        let mut widths = config.critic_hidden.clone();
        widths.push(1);
        let critic = MlpParams::new(spec.state_dim(), &widths, Activation::Tanh, rng);
        let target = critic.clone();
        let actor_opt = OptState::new(config.adamw(), actor.net.tensors());
        let critic_opt = OptState::new(config.adamw(), critic.tensors());
        Ok(BehaviourLearner {
            config,
            actor,
            critic,
            target,
            actor_opt,
            critic_opt,
            updates: 0,
            syncs: 0,
            incidents: 0,
            clamped: 0,
        })
    }

    /// Noise for one update: `horizon` tensors of `batch×m`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Tensor> {
        (0..self.config.horizon)
            .map(|_| self.actor.noise(self.config.batch_size, rng))
            .collect()
    }

    /// Losses and gradients for the whole batch, without updating anything.
    pub fn gradients(
        &self,
        spec: &EnvSpec,
        dynamics: &Dynamics,
        rewards: &Rewards,
        starts: &Tensor,
        noise: &[Tensor],
        workers: &Workers,
    ) -> Result<(BehaviourStats, Vec<Tensor>, Vec<Tensor>, usize)> {
        let rows = starts.rows();
        let chunks = self.config.chunks.min(rows).max(1);
        let bounds: Vec<(usize, usize)> = (0..chunks)
            .map(|c| (c * rows / chunks, (c + 1) * rows / chunks))
            .collect();
        let actuation = actuation_matrix(spec);
        let outs = workers.map(&bounds, |&(lo, hi)| -> Result<ChunkOut> {
            let mut g = Graph::new();
            let actor_nodes = self.actor.net.register(&mut g, true);
            let critic_nodes = self.critic.register(&mut g, true);
            let target_nodes = self.target.register(&mut g, false);
            let dyn_nodes = dynamics.register(&mut g, false);
            let rew_nodes = rewards.register(&mut g, false);
            let act = g.constant(actuation.clone());
            let ctx = Imagination {
                spec,
                dynamics,
                dyn_nodes: &dyn_nodes,
                rewards,
                rew_nodes: &rew_nodes,
                actor: &self.actor,
                actor_nodes: &actor_nodes,
                target_nodes: &target_nodes,
                actuation: act,
                gamma: self.config.gamma,
                lambda: self.config.lambda,
            };
            let start = g.constant(starts.slice_rows(lo, hi - lo));
            let chunk_noise: Vec<Tensor> = noise.iter().map(|e| e.slice_rows(lo, hi - lo)).collect();
            let tr = imagine(&mut g, &ctx, start, &chunk_noise, self.config.horizon)?;
            let al = actor_loss(&mut g, &tr, self.config.eta, rows as f64);
            let cl = critic_loss(&mut g, &critic_nodes, &tr, rows as f64)?;
            let total = g.add(al, cl);
            let grads = g.backward(total)?;
            Ok(ChunkOut {
                actor_grads: actor_nodes.grads(&g, &grads),
                critic_grads: critic_nodes.grads(&g, &grads),
                actor_loss: g.value(al).item(),
                critic_loss: g.value(cl).item(),
                clamped: tr.clamped,
            })
        });
        let mut stats = BehaviourStats::default();
        let mut ag: Option<Vec<Tensor>> = None;
        let mut cg: Option<Vec<Tensor>> = None;
        let mut clamped = 0;
        for out in outs {
            let out = out?;
            stats.actor_loss += out.actor_loss;
            stats.critic_loss += out.critic_loss;
            clamped += out.clamped;
            accumulate(&mut ag, out.actor_grads);
            accumulate(&mut cg, out.critic_grads);
        }
        let (ag, cg) = (ag.expect("at least one chunk"), cg.expect("at least one chunk"));
        if !stats.actor_loss.is_finite() || !stats.critic_loss.is_finite() {
            return Err(Error::Numeric("behaviour loss is not finite".into()));
        }
        if ag.iter().chain(&cg).any(|t| !t.is_finite()) {
            return Err(Error::Numeric("behaviour gradient is not finite".into()));
        }
        Ok((stats, ag, cg, clamped))
    }

    /// One simultaneous actor and critic step on imagined rollouts from
    /// `starts`. A numeric failure discards the batch, counts an incident and
    /// returns the error with parameters untouched.
    pub fn update(
        &mut self,
        spec: &EnvSpec,
        dynamics: &Dynamics,
        rewards: &Rewards,
        starts: &Tensor,
        noise: &[Tensor],
        workers: &Workers,
    ) -> Result<BehaviourStats> {
        let (mut stats, mut ag, mut cg, clamped) = match self.gradients(spec, dynamics, rewards, starts, noise, workers) {
            Ok(v) => v,
            Err(e @ (Error::Numeric(_) | Error::Autodiff(_))) => {
                self.incidents += 1;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        self.clamped += clamped as u64;
        stats.actor_grad_norm = clip_grad_norm(&mut ag, self.config.grad_clip);
        stats.critic_grad_norm = clip_grad_norm(&mut cg, self.config.grad_clip);
        stats.actor_grad_norm_clipped = lagrl_autodiff::global_norm(&ag);
        stats.critic_grad_norm_clipped = lagrl_autodiff::global_norm(&cg);
        self.actor_opt.adamw_step(&mut self.actor.net.tensors_mut(), &ag)?;
        self.critic_opt.adamw_step(&mut self.critic.tensors_mut(), &cg)?;
        self.updates += 1;
        self.target_sync();
        Ok(stats)
    }

    /// Hard copy of the critic into the target every `target_every` updates.
    pub fn target_sync(&mut self) -> bool {
        if self.updates % self.config.target_every == 0 {
            self.target = self.critic.clone();
            self.syncs += 1;
            true
        } else {
            false
        }
    }
}

fn accumulate(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) {
    match acc {
        None => *acc = Some(grads),
        Some(a) => {
            for (x, y) in a.iter_mut().zip(&grads) {
                x.add_assign(y);
            }
        }
    }
}
