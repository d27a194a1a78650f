use lagrl_autodiff::{Graph, NodeId, Tensor};

use crate::error::{Error, Result};

/// Deterministic state feedback `a = π(s)` with `a ∈ [−1, 1]^m`.
pub trait Policy: Sync {
    fn action_dim(&self) -> usize;

    fn name(&self) -> String;

    fn act(&self, s: &[f64]) -> Result<Vec<f64>>;

    /// The same map recorded on `g` for a `B×2n` state node; differentiable
    /// policies make `da/ds` available through tangent propagation.
    fn record(&self, g: &mut Graph, s: NodeId) -> Result<NodeId>;
}

/// `a ≡ 0`.
#[derive(Clone, Debug)]
pub struct ZeroPolicy {
    pub action_dim: usize,
}

impl Policy for ZeroPolicy {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn name(&self) -> String {
        "zero".into()
    }

    fn act(&self, _s: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.action_dim])
    }

    fn record(&self, g: &mut Graph, s: NodeId) -> Result<NodeId> {
        let rows = g.shape(s)[0];
        Ok(g.constant(Tensor::zeros(rows, self.action_dim)))
    }
}

/// `a = tanh(s Kᵀ + b)`.
#[derive(Clone, Debug)]
pub struct LinearPolicy {
    /// `m×2n`.
    pub gain: Tensor,
    pub bias: Vec<f64>,
}

impl Policy for LinearPolicy {
    fn action_dim(&self) -> usize {
        self.gain.rows()
    }

    fn name(&self) -> String {
        "linear".into()
    }

    fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok((0..self.gain.rows())
            .map(|k| {
                let z: f64 = self.gain.row_slice(k).iter().zip(s).map(|(a, b)| a * b).sum();
                (z + self.bias[k]).tanh()
            })
            .collect())
    }

    fn record(&self, g: &mut Graph, s: NodeId) -> Result<NodeId> {
        let k = g.constant(self.gain.transpose());
        let b = g.constant(Tensor::row(&self.bias));
        let z = g.matmul(s, k);
        let z = g.add(z, b);
        Ok(g.tanh(z))
    }
}

/// A policy available only as a plain function; it has no state Jacobian.
pub struct FnPolicy<F> {
    pub action_dim: usize,
    pub label: String,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> Policy for FnPolicy<F> {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn name(&self) -> String {
        self.label.clone()
    }

    fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(s))
    }

    fn record(&self, _g: &mut Graph, _s: NodeId) -> Result<NodeId> {
        Err(Error::UnsupportedPolicy(format!("`{}` is not differentiable", self.label)))
    }
}
