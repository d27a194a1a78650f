//! Maximal Lyapunov exponents of closed-loop systems.
//!
//! The separation vector `u` follows the variational equation
//! `u̇ = (∂f/∂s + ∂f/∂a · da/ds) u` along `ṡ = f(s, π(s))`, integrated jointly
//! with the state by RK4 and renormalized every few control steps.

use lagrl_autodiff::{Graph, NodeId, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::Recorder;
use crate::error::{Error, Result};
use crate::mbrl::{actuation_matrix, Policy};
use crate::parallel::Workers;
use crate::physics::{dynamics, Env, GoalTracker, State};

/// The pieces of the closed-loop Jacobian at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianParts {
    /// `2n×2n`.
    pub df_ds: Vec<Vec<f64>>,
    /// `2n×m`.
    pub df_da: Vec<Vec<f64>>,
    /// `m×2n`.
    pub da_ds: Vec<Vec<f64>>,
}

impl JacobianParts {
    /// `∂f/∂s + ∂f/∂a · da/ds`.
    pub fn combined(&self) -> Vec<Vec<f64>> {
        let m = self.da_ds.len();
        self.df_ds
            .iter()
            .zip(&self.df_da)
            .map(|(row, fa)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| v + (0..m).map(|k| fa[k] * self.da_ds[k][j]).sum::<f64>())
                    .collect()
            })
            .collect()
    }
}

/// `f(s, a) = (q̇, q̈)` recorded for a `1×2n` state and `1×m` action.
fn record_field(g: &mut Graph, env: &Env, s: NodeId, a: NodeId) -> Result<NodeId> {
    let spec = env.spec();
    let n = spec.dof();
    let b = g.constant(actuation_matrix(spec));
    let tau = g.matmul(a, b);
    let q: Vec<NodeId> = (0..n).map(|i| g.col(s, i)).collect();
    let qd: Vec<NodeId> = (0..n).map(|i| g.col(s, n + i)).collect();
    let tau: Vec<NodeId> = (0..n).map(|i| g.col(tau, i)).collect();
    let acc = dynamics::accel(&mut Recorder::new(g), spec, &q, &qd, &tau)
        .ok_or_else(|| Error::Simulation(format!("{}: mass matrix not positive definite", spec.name)))?;
    let mut parts = qd;
    parts.extend(acc);
    Ok(g.concat_cols(&parts))
}

/// Columns of `∂out/∂x` read back as a `rows(out)×cols(x)` matrix.
fn jacobian_matrix(g: &mut Graph, x: NodeId, out: NodeId) -> Result<Vec<Vec<f64>>> {
    let cols = g.input_jacobian_columns(x, out)?;
    let width = g.shape(out)[1];
    Ok((0..width)
        .map(|r| cols.iter().map(|&c| g.value(c).get(0, r)).collect())
        .collect())
}

pub fn jacobian_parts(env: &Env, policy: &dyn Policy, s: &[f64]) -> Result<JacobianParts> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(s));
    let xp = g.scale(x, 1.0);
    let a = policy.record(&mut g, xp)?;
    let da_ds = jacobian_matrix(&mut g, xp, a)?;
    let av = g.value(a).clone();
    let a0 = g.constant(av);
    let ai = g.scale(a0, 1.0);
    let xs = g.scale(x, 1.0);
    let f = record_field(&mut g, env, xs, ai)?;
    let df_ds = jacobian_matrix(&mut g, xs, f)?;
    let df_da = jacobian_matrix(&mut g, ai, f)?;
    Ok(JacobianParts { df_ds, df_da, da_ds })
}

/// `df/ds` of `s ↦ f(s, π(s))`.
pub fn closed_loop_jacobian(env: &Env, policy: &dyn Policy, s: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(jacobian_parts(env, policy, s)?.combined())
}

/// `f(s, π(s))` with the policy applied continuously.
pub fn closed_loop_field(env: &Env, policy: &dyn Policy, s: &[f64]) -> Result<Vec<f64>> {
    let a = policy.act(s)?;
    let tau = env.actuation_map(&a)?;
    env.derivative(s, &tau)
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn rk4_combine(x: &[f64], h: f64, k: [&[f64]; 4]) -> Vec<f64> {
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect()
}

/// An autonomous vector field with its state Jacobian.
pub trait VectorField {
    fn field(&self, s: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, s: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// `ṡ = f(s, π(s))` for an environment under a policy.
pub struct ClosedLoop<'a> {
    pub env: &'a Env,
    pub policy: &'a dyn Policy,
}

impl VectorField for ClosedLoop<'_> {
    fn field(&self, s: &[f64]) -> Result<Vec<f64>> {
        closed_loop_field(self.env, self.policy, s)
    }

    fn jacobian(&self, s: &[f64]) -> Result<Vec<Vec<f64>>> {
        closed_loop_jacobian(self.env, self.policy, s)
    }
}

/// One RK4 step of the state alone.
pub fn state_step(f: &dyn VectorField, s: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = f.field(s)?;
    let k2 = f.field(&axpy(s, 0.5 * h, &k1))?;
    let k3 = f.field(&axpy(s, 0.5 * h, &k2))?;
    let k4 = f.field(&axpy(s, h, &k3))?;
    Ok(rk4_combine(s, h, [&k1, &k2, &k3, &k4]))
}

/// One RK4 step of the joint `(s, u)` system.
pub fn variational_step(f: &dyn VectorField, s: &[f64], u: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let stage = |s: &[f64], u: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> { Ok((f.field(s)?, matvec(&f.jacobian(s)?, u))) };
    let (s1, u1) = stage(s, u)?;
    let (s2, u2) = stage(&axpy(s, 0.5 * h, &s1), &axpy(u, 0.5 * h, &u1))?;
    let (s3, u3) = stage(&axpy(s, 0.5 * h, &s2), &axpy(u, 0.5 * h, &u2))?;
    let (s4, u4) = stage(&axpy(s, h, &s3), &axpy(u, h, &u3))?;
    let sn = rk4_combine(s, h, [&s1, &s2, &s3, &s4]);
    let un = rk4_combine(u, h, [&u1, &u2, &u3, &u4]);
    if sn.iter().chain(&un).any(|v| !v.is_finite()) {
        return Err(Error::Simulation("variational integration diverged".into()));
    }
    Ok((sn, un))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// State and separation paths (each `steps + 1` long) from `(s0, u0)`.
pub fn evolve_variational(
    f: &dyn VectorField,
    s0: &[f64],
    u0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if (norm(u0) - 1.0).abs() > 1e-9 {
        return Err(Error::Contract("initial separation must have unit norm".into()));
    }
    let mut ss = vec![s0.to_vec()];
    let mut us = vec![u0.to_vec()];
    for _ in 0..steps {
        let (s, u) = variational_step(f, ss.last().expect("non-empty"), us.last().expect("non-empty"), dt)?;
        ss.push(s);
        us.push(u);
    }
    Ok((ss, us))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleMode {
    /// Stop once the goal condition has held.
    #[default]
    FiniteTime,
    /// Stop once the running average settles.
    Standard,
}

impl std::str::FromStr for MleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite_time" => Ok(MleMode::FiniteTime),
            "standard" => Ok(MleMode::Standard),
            _ => Err(Error::Config(format!("unknown MLE mode `{s}` (finite_time|standard)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GoalReached,
    Converged,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub mode: MleMode,
    /// Control steps between renormalizations.
    pub renorm_period: usize,
    /// Control-step budget; the episode length when absent (finite-time) or
    /// 50 episodes (standard).
    pub max_steps: Option<usize>,
    /// Norm the separation is rescaled to.
    pub target_norm: f64,
    pub tolerance: f64,
    /// Renormalizations the running average must stay within `tolerance` over.
    pub window: usize,
    /// RK4 steps per control step; the environment's own count when absent.
    pub substeps: Option<usize>,
    /// Leading renormalizations left out of the average while `u` aligns
    /// with the dominant direction.
    pub transient: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            mode: MleMode::FiniteTime,
            renorm_period: 10,
            max_steps: None,
            target_norm: 1.0,
            tolerance: 1e-3,
            window: 100,
            substeps: None,
            transient: 0,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.renorm_period == 0 || self.window == 0 || self.substeps == Some(0) {
            return Err(Error::Config("renormalization period, window and substeps must be positive".into()));
        }
        if !(self.target_norm > 0.0 && self.target_norm.is_finite()) {
            return Err(Error::Config("target norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub env: String,
    pub policy_checkpoint: String,
    pub seed: u64,
    /// 1/s.
    pub mle: f64,
    /// Running average after each renormalization.
    pub trace: Vec<f64>,
    pub stop_reason: StopReason,
    pub renorm_period: usize,
    pub dt: f64,
    pub mode: MleMode,
    pub steps: usize,
    pub transient: usize,
}

/// Unit vector uniform on the sphere.
pub fn random_unit<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

pub fn finite_time_mle(
    env: &Env,
    policy: &dyn Policy,
    policy_id: &str,
    s0: &State,
    config: &MleConfig,
    seed: u64,
) -> Result<MleReport> {
    config.validate()?;
    let spec = env.spec();
    if config.mode == MleMode::FiniteTime && (spec.goal_hold_steps == 0 || !(spec.goal_tolerance > 0.0)) {
        return Err(Error::Config(format!("{}: finite-time mode needs a goal predicate", spec.name)));
    }
    let substeps = config.substeps.unwrap_or(spec.substeps);
    let h = spec.dt / substeps as f64;
    let max_steps = config.max_steps.unwrap_or(match config.mode {
        MleMode::FiniteTime => spec.episode_len,
        MleMode::Standard => 50 * spec.episode_len,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = s0.to_flat();
    let mut u: Vec<f64> = random_unit(s.len(), &mut rng)
        .into_iter()
        .map(|x| x * config.target_norm)
        .collect();
    let mut tracker = GoalTracker::default();
    let mut trace: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut seen = 0usize;
    let mut since = 0usize;
    let mut stop = StopReason::Horizon;
    let mut steps = 0;
    let system = ClosedLoop { env, policy };
    let mut renormalize = |u: &mut Vec<f64>, k: usize, trace: &mut Vec<f64>| {
        let r = norm(u);
        seen += 1;
        if seen > config.transient {
            total += (r / config.target_norm).ln() / (k as f64 * spec.dt);
            trace.push(total / (trace.len() + 1) as f64);
        }
        u.iter_mut().for_each(|x| *x *= config.target_norm / r);
    };
    while steps < max_steps {
        for _ in 0..substeps {
            (s, u) = variational_step(&system, &s, &u, h)?;
        }
        steps += 1;
        since += 1;
        let reached = config.mode == MleMode::FiniteTime && tracker.update(env, &State::from_flat(&s));
        if since == config.renorm_period || reached {
            renormalize(&mut u, since, &mut trace);
            since = 0;
        }
        if reached {
            stop = StopReason::GoalReached;
            break;
        }
        if config.mode == MleMode::Standard && trace.len() > config.window {
            let k = trace.len();
            if (trace[k - 1] - trace[k - 1 - config.window]).abs() < config.tolerance {
                stop = StopReason::Converged;
                break;
            }
        }
    }
    if since > 0 {
        renormalize(&mut u, since, &mut trace);
    }
    Ok(MleReport {
        env: spec.name.clone(),
        policy_checkpoint: policy_id.to_string(),
        seed,
        mle: trace.last().copied().unwrap_or(0.0),
        trace,
        stop_reason: stop,
        renorm_period: config.renorm_period,
        dt: spec.dt,
        mode: config.mode,
        steps,
        transient: config.transient,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleBatchReport {
    pub env: String,
    pub policy_checkpoints: Vec<String>,
    pub seed: u64,
    pub mode: MleMode,
    /// Mean over runs.
    pub mle: f64,
    pub std: f64,
    pub runs: Vec<MleReport>,
}

/// Averages over every (policy, start) pair. Run `i` gets seed `seed + i`.
pub fn mle_batch(
    env: &Env,
    policies: &[(String, &dyn Policy)],
    starts: &[State],
    config: &MleConfig,
    seed: u64,
    workers: &Workers,
) -> Result<MleBatchReport> {
    if policies.is_empty() || starts.is_empty() {
        return Err(Error::Contract("MLE batch needs at least one policy and one start".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|p| (0..starts.len()).map(move |k| (p, k)))
        .collect();
    let runs: Vec<MleReport> = workers
        .map_range(jobs.len(), |i| {
            let (p, k) = jobs[i];
            let (id, policy) = &policies[p];
            finite_time_mle(env, *policy, id, &starts[k], config, seed.wrapping_add(i as u64))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.mle).sum::<f64>() / n;
    let std = (runs.iter().map(|r| (r.mle - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(MleBatchReport {
        env: env.spec().name.clone(),
        policy_checkpoints: policies.iter().map(|p| p.0.clone()).collect(),
        seed,
        mode: config.mode,
        mle: mean,
        std,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbrl::{FnPolicy, ZeroPolicy};

    #[test]
    fn pendulum_bottom_linearization() {
        let env = Env::preset("pendulum").unwrap();
        let j = closed_loop_jacobian(&env, &ZeroPolicy { action_dim: 1 }, &[0.0, 0.0]).unwrap();
        assert_eq!(j[0], vec![0.0, 1.0]);
        assert!((j[1][0] + 9.81).abs() < 1e-12 && j[1][1].abs() < 1e-12);
    }

    #[test]
    fn plain_function_policy_is_rejected() {
        let env = Env::preset("pendulum").unwrap();
        let p = FnPolicy {
            action_dim: 1,
            label: "bang".into(),
            f: |s: &[f64]| vec![s[1].signum()],
        };
        let err = closed_loop_jacobian(&env, &p, &[0.1, 0.2]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedPolicy(_)));
    }

    #[test]
    fn zero_norm_separation_rejected() {
        let env = Env::preset("pendulum").unwrap();
        let p = ZeroPolicy { action_dim: 1 };
        assert!(matches!(
            evolve_variational(&ClosedLoop { env: &env, policy: &p }, &[0.1, 0.0], &[0.0, 0.0], 0.01, 3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mode_parsing_and_json_fields() {
        assert_eq!("standard".parse::<MleMode>().unwrap(), MleMode::Standard);
        assert!("lyap".parse::<MleMode>().is_err());
        let env = Env::preset("pendulum").unwrap();
        let cfg = MleConfig {
            max_steps: Some(25),
            ..MleConfig::default()
        };
        let r = finite_time_mle(&env, &ZeroPolicy { action_dim: 1 }, "zero", &State::zeros(1), &cfg, 3).unwrap();
        assert_eq!(r.trace.len(), 3);
        assert_eq!(r.stop_reason, StopReason::Horizon);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["env", "policy_checkpoint", "seed", "mle", "trace", "stop_reason", "renorm_period", "dt"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["stop_reason"], "horizon");
    }

    #[test]
    fn empty_batch_is_a_contract_error() {
        let env = Env::preset("pendulum").unwrap();
        let r = mle_batch(&env, &[], &[State::zeros(1)], &MleConfig::default(), 0, &Workers::sequential());
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
