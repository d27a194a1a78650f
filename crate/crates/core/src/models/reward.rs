use lagrl_autodiff::{mlp_forward, Activation, Graph, MlpNodes, MlpParams, NodeId, Tensor};
use rand::Rng;

use super::normalize::Normalizer;
use crate::algebra::Recorder;
use crate::error::Result;
use crate::physics::{dynamics, EnvSpec};

/// Next state → reward.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    pub net: MlpParams,
    pub input_norm: Option<Normalizer>,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = hidden.to_vec();
        widths.push(1);
        RewardModel {
            net: MlpParams::new(state_dim, &widths, Activation::Tanh, rng),
            input_norm: None,
        }
    }

    pub fn predict(&self, g: &mut Graph, net: &MlpNodes, s_next: NodeId) -> Result<NodeId> {
        let x = match &self.input_norm {
            Some(n) => n.apply(g, s_next),
            None => s_next,
        };
        Ok(mlp_forward(g, net, x)?)
    }
}

/// The environment's reward function recorded on a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReward {
    pub spec: EnvSpec,
}

impl OracleReward {
    pub fn predict(&self, g: &mut Graph, s_next: NodeId) -> Result<NodeId> {
        let spec = &self.spec;
        let n = spec.dof();
        let q: Vec<NodeId> = (0..n).map(|i| g.col(s_next, i)).collect();
        let (x, y) = dynamics::tip(&mut Recorder::new(g), spec, &q);
        let gx = g.constant(Tensor::scalar(spec.goal[0]));
        let gy = g.constant(Tensor::scalar(spec.goal[1]));
        let dx = g.sub(x, gx);
        let dy = g.sub(y, gy);
        let dx2 = g.square(dx);
        let dy2 = g.square(dy);
        let d2 = g.add(dx2, dy2);
        let qd = g.slice_cols(s_next, n, n);
        let v2 = g.square(qd);
        let v2 = g.sum_cols(v2);
        let a = g.scale(d2, -spec.reward_distance_scale);
        let b = g.scale(v2, -spec.reward_velocity_scale);
        let e = g.add(a, b);
        Ok(g.exp(e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rewards {
    Learned(RewardModel),
    Oracle(OracleReward),
}

#[derive(Clone, Debug)]
pub struct RewardNodes(pub Option<MlpNodes>);

impl Rewards {
    pub fn register(&self, g: &mut Graph, trainable: bool) -> RewardNodes {
        match self {
            Rewards::Learned(m) => RewardNodes(Some(m.net.register(g, trainable))),
            Rewards::Oracle(_) => RewardNodes(None),
        }
    }

    /// `B×2n` next states → `B×1` rewards.
    pub fn predict(&self, g: &mut Graph, nodes: &RewardNodes, s_next: NodeId) -> Result<NodeId> {
        match (self, &nodes.0) {
            (Rewards::Learned(m), Some(net)) => m.predict(g, net, s_next),
            (Rewards::Oracle(o), _) => o.predict(g, s_next),
            (Rewards::Learned(_), None) => unreachable!("learned reward registered without nodes"),
        }
    }
}
