use lagrl_autodiff::{mlp_forward, Activation, Graph, MlpNodes, MlpParams, NodeId};
use rand::Rng;

use super::normalize::Normalizer;
use crate::error::{Error, Result};

/// Black-box one-step model `(q, q̇, τ) → (q', q̇')`.
#[derive(Clone, Debug, PartialEq)]
pub struct DnnModel {
    pub net: MlpParams,
    pub residual: bool,
    pub input_norm: Option<Normalizer>,
    dof: usize,
}

impl DnnModel {
    pub fn new<R: Rng + ?Sized>(dof: usize, hidden: &[usize], residual: bool, rng: &mut R) -> Self {
        let mut widths = hidden.to_vec();
        widths.push(2 * dof);
        DnnModel {
            net: MlpParams::new(3 * dof, &widths, Activation::Tanh, rng),
            residual,
            input_norm: None,
            dof,
        }
    }

    pub fn from_params(net: MlpParams, residual: bool) -> Result<Self> {
        let dof = net.output_width() / 2;
        if net.output_width() != 2 * dof || net.input_width() != 3 * dof {
            return Err(Error::Config(format!(
                "DNN widths {}→{} do not describe a (q, q̇, τ) → (q, q̇) map",
                net.input_width(),
                net.output_width()
            )));
        }
        Ok(DnnModel {
            net,
            residual,
            input_norm: None,
            dof,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// `s: B×2n`, `tau: B×n` → unwrapped next state `B×2n`.
    pub fn predict(&self, g: &mut Graph, net: &MlpNodes, s: NodeId, tau: NodeId) -> Result<NodeId> {
        let x = g.concat_cols(&[s, tau]);
        let x = match &self.input_norm {
            Some(n) => n.apply(g, x),
            None => x,
        };
        let out = mlp_forward(g, net, x)?;
        Ok(if self.residual { g.add(s, out) } else { out })
    }
}
