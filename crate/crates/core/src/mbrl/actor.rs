use lagrl_autodiff::{mlp_forward, softplus, Activation, Graph, MlpNodes, MlpParams, NodeId, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use super::policy::Policy;
use crate::error::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Stochastic,
    Mean,
}

/// Tanh-squashed Gaussian policy. The network emits `μ` and a pre-softplus
/// scale for every action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub net: MlpParams,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ActionSample {
    /// `B×m`, in (−1, 1).
    pub action: NodeId,
    /// `B×1`, including the tanh change of variables.
    pub log_prob: NodeId,
    /// Scale entries that fell outside `[sigma_min, sigma_max]`.
    pub clamped: usize,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = hidden.to_vec();
        widths.push(2 * action_dim);
        Actor {
            net: MlpParams::new(state_dim, &widths, Activation::Tanh, rng),
            sigma_min: 1e-3,
            sigma_max: 2.0,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_width() / 2
    }

    /// Draws `B×m` standard normal noise.
    pub fn noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let m = self.action_dim();
        Tensor::new(rows, m, (0..rows * m).map(|_| rng.sample(StandardNormal)).collect()).expect("shape")
    }

    /// Reparameterized sample `tanh(μ + σ ε)`; `eps = None` gives the mean action `tanh(μ)`.
    pub fn sample(&self, g: &mut Graph, nodes: &MlpNodes, s: NodeId, eps: Option<&Tensor>) -> Result<ActionSample> {
        let m = self.action_dim();
        let out = mlp_forward(g, nodes, s)?;
        let mu = g.slice_cols(out, 0, m);
        let pre = g.slice_cols(out, m, m);
        let sp = g.softplus(pre);
        let clamped = g
            .value(sp)
            .data()
            .iter()
            .filter(|&&v| v < self.sigma_min || v > self.sigma_max)
            .count();
        let sigma = g.clamp(sp, self.sigma_min, self.sigma_max);
        let (x, gauss) = match eps {
            Some(e) => {
                let en = g.constant(e.clone());
                let se = g.mul(sigma, en);
                let x = g.add(mu, se);
                let half_sq = e.map(|v| -0.5 * v * v - HALF_LOG_2PI);
                (x, g.constant(half_sq))
            }
            None => {
                let rows = g.shape(mu)[0];
                (mu, g.constant(Tensor::filled(rows, m, -HALF_LOG_2PI)))
            }
        };
        let action = g.tanh(x);
        // log|d tanh/dx| = 2(log 2 − x − softplus(−2x))
        let m2x = g.scale(x, -2.0);
        let sp2 = g.softplus(m2x);
        let t = g.add(x, sp2);
        let t = g.scale(t, -2.0);
        let jac = g.add_scalar(t, 2.0 * std::f64::consts::LN_2);
        let log_sigma = g.log(sigma);
        let lp = g.sub(gauss, log_sigma);
        let lp = g.sub(lp, jac);
        let log_prob = g.sum_cols(lp);
        Ok(ActionSample {
            action,
            log_prob,
            clamped,
        })
    }

    /// Single-state action without a graph; returns `(action, log_prob)`.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], mode: SampleMode, rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let m = self.action_dim();
        let out = self.net.eval(&Tensor::row(s))?;
        let o = out.data();
        let mut a = Vec::with_capacity(m);
        let mut lp = 0.0;
        for k in 0..m {
            let sigma = softplus(o[m + k]).clamp(self.sigma_min, self.sigma_max);
            let e: f64 = match mode {
                SampleMode::Stochastic => rng.sample(StandardNormal),
                SampleMode::Mean => 0.0,
            };
            let x = o[k] + sigma * e;
            a.push(x.tanh());
            lp += -0.5 * e * e - HALF_LOG_2PI - sigma.ln() - 2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("actor produced a non-finite action".into()));
        }
        Ok((a, lp))
    }
}

/// An actor's mean-mode feedback `a = tanh(μ(s))`.
impl Policy for Actor {
    fn action_dim(&self) -> usize {
        Actor::action_dim(self)
    }

    fn name(&self) -> String {
        "actor".into()
    }

    fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.eval(&Tensor::row(s))?;
        Ok(out.data()[..Actor::action_dim(self)].iter().map(|v| v.tanh()).collect())
    }

    fn record(&self, g: &mut Graph, s: NodeId) -> Result<NodeId> {
        let nodes = self.net.register(g, false);
        let out = mlp_forward(g, &nodes, s)?;
        let mu = g.slice_cols(out, 0, Actor::action_dim(self));
        Ok(g.tanh(mu))
    }
}

pub fn critic_value(g: &mut Graph, nodes: &MlpNodes, s: NodeId) -> Result<NodeId> {
    Ok(mlp_forward(g, nodes, s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn graph_and_plain_sampling_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = Actor::new(4, 2, &[16, 16], &mut rng);
        let s = [0.1, -0.3, 0.5, 0.2];
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let (a, lp) = actor.act(&s, SampleMode::Stochastic, &mut r1).unwrap();
        let eps = actor.noise(1, &mut ChaCha8Rng::seed_from_u64(5));
        let mut g = Graph::new();
        let nodes = actor.net.register(&mut g, false);
        let sn = g.constant(Tensor::row(&s));
        let smp = actor.sample(&mut g, &nodes, sn, Some(&eps)).unwrap();
        for k in 0..2 {
            assert!((g.value(smp.action).data()[k] - a[k]).abs() < 1e-14);
        }
        assert!((g.value(smp.log_prob).item() - lp).abs() < 1e-12);
        let mean = actor.sample(&mut g, &nodes, sn, None).unwrap();
        let pa = Policy::act(&actor, &s).unwrap();
        assert_eq!(g.value(mean.action).data(), pa.as_slice());
    }

    #[test]
    fn log_prob_matches_density_of_squashed_gaussian() {
        // 1-D: p(a) = N(x; μ, σ) / (1 − a²), x = atanh(a)
        let net = MlpParams::from_layers(
            vec![lagrl_autodiff::Layer {
                weight: Tensor::zeros(1, 2),
                bias: Tensor::row(&[0.3, 0.2]),
            }],
            Activation::Tanh,
        )
        .unwrap();
        let actor = Actor {
            net,
            sigma_min: 1e-3,
            sigma_max: 2.0,
        };
        let sigma = softplus(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, lp) = actor.act(&[0.0], SampleMode::Stochastic, &mut rng).unwrap();
            let x = a[0].atanh();
            let dens = (-(x - 0.3f64).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let want = (dens / (1.0 - a[0] * a[0])).ln();
            assert!((lp - want).abs() < 1e-8, "{lp} vs {want}");
        }
    }
}
