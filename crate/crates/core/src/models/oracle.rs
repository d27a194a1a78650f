use lagrl_autodiff::{Graph, NodeId};

use crate::algebra::{Algebra, Recorder};
use crate::error::{Error, Result};
use crate::physics::{dynamics, EnvSpec};

/// The ground-truth simulator recorded on a graph: the same RK4 substeps as
/// `Env::integrate`, so rollouts are differentiable and match the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleModel {
    pub spec: EnvSpec,
}

impl OracleModel {
    pub fn new(spec: EnvSpec) -> Self {
        OracleModel { spec }
    }

    fn deriv(&self, alg: &mut Recorder, x: &[NodeId], tau: &[NodeId]) -> Result<Vec<NodeId>> {
        let n = self.spec.dof();
        let acc = dynamics::accel(alg, &self.spec, &x[..n], &x[n..], tau)
            .ok_or_else(|| Error::Numeric(format!("{}: mass matrix lost definiteness", self.spec.name)))?;
        let mut d = x[n..].to_vec();
        d.extend(acc);
        Ok(d)
    }

    /// Unwrapped next state, `B×2n`.
    pub fn predict(&self, g: &mut Graph, s: NodeId, tau: NodeId) -> Result<NodeId> {
        let n = self.spec.dof();
        let mut x: Vec<NodeId> = (0..2 * n).map(|i| g.col(s, i)).collect();
        let tauc: Vec<NodeId> = (0..n).map(|i| g.col(tau, i)).collect();
        let h = self.spec.dt / self.spec.substeps as f64;
        let mut alg = Recorder::new(g);
        let axpy = |alg: &mut Recorder, x: &[NodeId], k: &[NodeId], a: f64| -> Vec<NodeId> {
            x.iter()
                .zip(k)
                .map(|(&xi, &ki)| {
                    let t = alg.scale(ki, a);
                    alg.add(xi, t)
                })
                .collect()
        };
        for _ in 0..self.spec.substeps {
            let k1 = self.deriv(&mut alg, &x, &tauc)?;
            let x2 = axpy(&mut alg, &x, &k1, 0.5 * h);
            let k2 = self.deriv(&mut alg, &x2, &tauc)?;
            let x3 = axpy(&mut alg, &x, &k2, 0.5 * h);
            let k3 = self.deriv(&mut alg, &x3, &tauc)?;
            let x4 = axpy(&mut alg, &x, &k3, h);
            let k4 = self.deriv(&mut alg, &x4, &tauc)?;
            x = (0..2 * n)
                .map(|i| {
                    let a = alg.add(k2[i], k3[i]);
                    let a = alg.scale(a, 2.0);
                    let b = alg.add(k1[i], k4[i]);
                    let sum = alg.add(a, b);
                    let sum = alg.scale(sum, h / 6.0);
                    alg.add(x[i], sum)
                })
                .collect();
        }
        Ok(g.concat_cols(&x))
    }
}
