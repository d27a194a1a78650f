use lagrl_autodiff::{Graph, MlpNodes, NodeId, Tensor};

use super::actor::{critic_value, Actor};
use super::returns::lambda_return_graph;
use crate::error::{Error, Result};
use crate::models::{DynNodes, Dynamics, RewardNodes, Rewards};
use crate::physics::EnvSpec;

/// A batch of rollouts recorded on one graph. Every entry is a node whose
/// rows index the batch.
#[derive(Clone, Debug)]
pub struct ImaginedTrajectory {
    /// `s_0..s_T`, each `B×2n`.
    pub states: Vec<NodeId>,
    /// `a_0..a_{T−1}`, each `B×m`.
    pub actions: Vec<NodeId>,
    pub log_probs: Vec<NodeId>,
    /// `r_t` is the predicted reward of `s_{t+1}`.
    pub rewards: Vec<NodeId>,
    /// Target critic values `V′(s_t)`, `t = 0..T`.
    pub values: Vec<NodeId>,
    /// λ-returns `V′_λ(s_t)`, `t = 0..T`.
    pub returns: Vec<NodeId>,
    pub clamped: usize,
}

impl ImaginedTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Everything an imagined rollout reads, already registered on the graph.
pub struct Imagination<'a> {
    pub spec: &'a EnvSpec,
    pub dynamics: &'a Dynamics,
    pub dyn_nodes: &'a DynNodes,
    pub rewards: &'a Rewards,
    pub rew_nodes: &'a RewardNodes,
    pub actor: &'a Actor,
    pub actor_nodes: &'a MlpNodes,
    pub target_nodes: &'a MlpNodes,
    /// `m×n` action-to-force map.
    pub actuation: NodeId,
    pub gamma: f64,
    pub lambda: f64,
}

/// `m×n` matrix with `limit_k` at `(k, actuated_k)`.
pub fn actuation_matrix(spec: &EnvSpec) -> Tensor {
    let mut s = Tensor::zeros(spec.action_dim(), spec.dof());
    for (k, (&idx, &lim)) in spec.actuated.iter().zip(&spec.limits).enumerate() {
        s.set(k, idx, lim);
    }
    s
}

/// Rolls the learned model forward from `start` (`B×2n`). `noise[t]` is the
/// `B×m` reparameterization noise of step `t`; an empty slice uses mean actions.
pub fn imagine(
    g: &mut Graph,
    ctx: &Imagination,
    start: NodeId,
    noise: &[Tensor],
    horizon: usize,
) -> Result<ImaginedTrajectory> {
    if !noise.is_empty() && noise.len() != horizon {
        return Err(Error::Contract(format!("{} noise draws for horizon {horizon}", noise.len())));
    }
    let mut tr = ImaginedTrajectory {
        states: vec![start],
        actions: Vec::with_capacity(horizon),
        log_probs: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        values: Vec::with_capacity(horizon + 1),
        returns: Vec::new(),
        clamped: 0,
    };
    tr.values.push(critic_value(g, ctx.target_nodes, start)?);
    let mut s = start;
    for t in 0..horizon {
        let smp = ctx.actor.sample(g, ctx.actor_nodes, s, noise.get(t))?;
        tr.clamped += smp.clamped;
        let tau = g.matmul(smp.action, ctx.actuation);
        let next = ctx.dynamics.predict(g, ctx.dyn_nodes, ctx.spec, s, tau)?;
        if !g.value(next).is_finite() {
            return Err(Error::Numeric(format!("imagined state at step {} is not finite", t + 1)));
        }
        let r = ctx.rewards.predict(g, ctx.rew_nodes, next)?;
        let v = critic_value(g, ctx.target_nodes, next)?;
        tr.actions.push(smp.action);
        tr.log_probs.push(smp.log_prob);
        tr.rewards.push(r);
        tr.values.push(v);
        tr.states.push(next);
        s = next;
    }
    tr.returns = lambda_return_graph(g, &tr.rewards, &tr.values, ctx.gamma, ctx.lambda)?;
    Ok(tr)
}

/// `Σ_t Σ_b ½(V(sg(s_t)) − sg(V′_λ(s_t)))² / denom` over `t < T`.
pub fn critic_loss(g: &mut Graph, critic: &MlpNodes, tr: &ImaginedTrajectory, denom: f64) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(tr.horizon());
    for t in 0..tr.horizon() {
        let s = g.stop_gradient(tr.states[t]);
        let v = critic_value(g, critic, s)?;
        let target = g.stop_gradient(tr.returns[t]);
        let d = g.sub(v, target);
        let sq = g.square(d);
        terms.push(g.sum(sq));
    }
    let total = sum_nodes(g, &terms);
    Ok(g.scale(total, 0.5 / denom))
}

/// `−Σ_t Σ_b (V′_λ(s_t) − η log π(a_t|s_t)) / denom` over `t < T`.
pub fn actor_loss(g: &mut Graph, tr: &ImaginedTrajectory, eta: f64, denom: f64) -> NodeId {
    let mut terms = Vec::with_capacity(tr.horizon());
    for t in 0..tr.horizon() {
        let ent = g.scale(tr.log_probs[t], eta);
        let d = g.sub(tr.returns[t], ent);
        terms.push(g.sum(d));
    }
    let total = sum_nodes(g, &terms);
    g.scale(total, -1.0 / denom)
}

fn sum_nodes(g: &mut Graph, xs: &[NodeId]) -> NodeId {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = g.add(acc, x);
    }
    acc
}
