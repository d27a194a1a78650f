use lagrl_autodiff::{Gradients, Graph, MlpNodes, NodeId, Tensor};
use rand::Rng;

use super::dnn::DnnModel;
use super::lnn::LnnModel;
use super::oracle::OracleModel;
use super::{ModelConfig, ModelKind};
use crate::error::Result;
use crate::physics::EnvSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Dnn(DnnModel),
    Lnn(LnnModel),
    /// Ground truth, for isolating behaviour learning from model error.
    Oracle(OracleModel),
}

#[derive(Clone, Debug)]
pub enum DynNodes {
    Dnn(MlpNodes),
    Lnn((MlpNodes, MlpNodes)),
    Oracle,
}

impl DynNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        match self {
            DynNodes::Dnn(n) => n.ids(),
            DynNodes::Lnn((l, v)) => l.ids().into_iter().chain(v.ids()).collect(),
            DynNodes::Oracle => Vec::new(),
        }
    }

    pub fn grads(&self, g: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.ids().into_iter().map(|id| grads.get_or_zeros(g, id)).collect()
    }
}

impl Dynamics {
    pub fn new<R: Rng + ?Sized>(kind: ModelKind, spec: &EnvSpec, cfg: &ModelConfig, rng: &mut R) -> Self {
        let n = spec.dof();
        match kind {
            ModelKind::Dnn => Dynamics::Dnn(DnnModel::new(n, &cfg.dnn_hidden, cfg.dnn_residual, rng)),
            ModelKind::Lnn => Dynamics::Lnn(LnnModel::new(n, &cfg.lnn_hidden, cfg.lnn_eps, rng)),
        }
    }

    pub fn oracle(spec: &EnvSpec) -> Self {
        Dynamics::Oracle(OracleModel::new(spec.clone()))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dynamics::Dnn(_) => "dnn",
            Dynamics::Lnn(_) => "lnn",
            Dynamics::Oracle(_) => "oracle",
        }
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> DynNodes {
        match self {
            Dynamics::Dnn(m) => DynNodes::Dnn(m.net.register(g, trainable)),
            Dynamics::Lnn(m) => DynNodes::Lnn((m.l_net.register(g, trainable), m.v_net.register(g, trainable))),
            Dynamics::Oracle(_) => DynNodes::Oracle,
        }
    }

    /// `s: B×2n`, `tau: B×n` → next state with angles wrapped.
    pub fn predict(&self, g: &mut Graph, nodes: &DynNodes, spec: &EnvSpec, s: NodeId, tau: NodeId) -> Result<NodeId> {
        let raw = match (self, nodes) {
            (Dynamics::Dnn(m), DynNodes::Dnn(n)) => m.predict(g, n, s, tau)?,
            (Dynamics::Lnn(m), DynNodes::Lnn(n)) => m.predict(g, n, s, tau, spec.dt)?,
            (Dynamics::Oracle(m), _) => m.predict(g, s, tau)?,
            _ => unreachable!("dynamics registered as a different kind"),
        };
        Ok(g.wrap_angles(raw, &spec.state_angle_mask()))
    }

    /// Graph-free prediction on plain tensors.
    pub fn predict_tensor(&self, spec: &EnvSpec, s: &Tensor, tau: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = self.register(&mut g, false);
        let sn = g.constant(s.clone());
        let tn = g.constant(tau.clone());
        let out = self.predict(&mut g, &nodes, spec, sn, tn)?;
        Ok(g.value(out).clone())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Dynamics::Dnn(m) => m.net.tensors(),
            Dynamics::Lnn(m) => m.l_net.tensors().into_iter().chain(m.v_net.tensors()).collect(),
            Dynamics::Oracle(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Dynamics::Dnn(m) => m.net.tensors_mut(),
            Dynamics::Lnn(m) => m.l_net.tensors_mut().into_iter().chain(m.v_net.tensors_mut()).collect(),
            Dynamics::Oracle(_) => Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}
