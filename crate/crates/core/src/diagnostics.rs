//! Imagined-trajectory quality metrics and policy evaluation.
//!
//! A population is a set of start states with open-loop action sequences.
//! The same sequences drive the true simulator and a model, so state and
//! energy errors compare like with like.

use std::io::Write;

use lagrl_autodiff::{wrap_angle, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbrl::Policy;
use crate::models::{Dynamics, LnnModel};
use crate::parallel::Workers;
use crate::physics::{Env, GoalTracker, State, TrajectoryLog};

/// Quadrature for the actuator work over one control step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkRule {
    /// `τᵀΔq`, exact for a torque held constant over the step.
    #[default]
    Exact,
    /// `τᵀ(q̇ₖ + q̇ₖ₊₁)Δt/2`.
    Trapezoidal,
}

impl std::str::FromStr for WorkRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(WorkRule::Exact),
            "trapezoidal" => Ok(WorkRule::Trapezoidal),
            _ => Err(Error::Config(format!("unknown work rule `{s}`"))),
        }
    }
}

/// Per-step population mean (and spread) of an error, steps `1..=T`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub population: usize,
}

impl ErrorSeries {
    /// `samples[i][t]` is trajectory `i` at step `t + 1`. Sums run in index
    /// order so the result does not depend on how samples were produced.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Contract("error series needs at least one trajectory".into()));
        };
        let t = first.len();
        if samples.iter().any(|s| s.len() != t) {
            return Err(Error::Contract("trajectories differ in length".into()));
        }
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..t).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n).collect();
        let std = (0..t)
            .map(|k| {
                let v = samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / n;
                v.sqrt()
            })
            .collect();
        Ok(ErrorSeries {
            mean,
            std,
            population: samples.len(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn last(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,mean,std")?;
        for (k, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            writeln!(w, "{},{m},{s}", k + 1)?;
        }
        Ok(())
    }
}

/// Sum of the per-step state errors.
pub fn trajectory_error(series: &ErrorSeries) -> f64 {
    series.mean.iter().sum()
}

/// Start states with the action sequences applied from them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Population {
    pub starts: Vec<State>,
    /// `actions[i][t]`, each in `[−1, 1]^m`.
    pub actions: Vec<Vec<Vec<f64>>>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.actions.first().map_or(0, |a| a.len())
    }

    /// Uniform random actions.
    pub fn random_actions<R: Rng + ?Sized>(env: &Env, starts: Vec<State>, horizon: usize, rng: &mut R) -> Self {
        let m = env.spec().action_dim();
        let actions = starts
            .iter()
            .map(|_| {
                (0..horizon)
                    .map(|_| (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect())
                    .collect()
            })
            .collect();
        Population { starts, actions }
    }

    /// Actions the policy takes along the true trajectory from each start.
    pub fn from_policy(env: &Env, policy: &dyn Policy, starts: Vec<State>, horizon: usize) -> Result<Self> {
        let mut actions = Vec::with_capacity(starts.len());
        for s0 in &starts {
            let mut s = s0.clone();
            let mut seq = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let a = policy.act(&s.to_flat())?;
                s = env.step(&s, &a)?.0;
                seq.push(a);
            }
            actions.push(seq);
        }
        Ok(Population { starts, actions })
    }

    pub fn torques(&self, env: &Env) -> Result<Vec<Vec<Vec<f64>>>> {
        self.actions
            .iter()
            .map(|seq| seq.iter().map(|a| env.actuation_map(a)).collect())
            .collect()
    }
}

/// `count` states drawn uniformly from full episodes of `policy`.
pub fn visited_states<R: Rng + ?Sized>(
    env: &Env,
    policy: &dyn Policy,
    episodes: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<State>> {
    let mut pool = Vec::new();
    for _ in 0..episodes.max(1) {
        let mut s = env.reset(rng);
        for _ in 0..env.spec().episode_len {
            pool.push(s.clone());
            let a = policy.act(&s.to_flat())?;
            s = env.step(&s, &a)?.0;
        }
    }
    Ok((0..count).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
}

/// True-simulator paths, each of length `T + 1` including the start.
pub fn true_rollouts(env: &Env, pop: &Population, workers: &Workers) -> Result<Vec<Vec<State>>> {
    workers
        .map_range(pop.len(), |i| {
            let mut path = vec![pop.starts[i].clone()];
            for a in &pop.actions[i] {
                let next = env.step(path.last().expect("non-empty"), a)?.0;
                path.push(next);
            }
            Ok(path)
        })
        .into_iter()
        .collect()
}

const ROLLOUT_CHUNK: usize = 64;

/// Model paths under the same open-loop actions, batched by chunks.
pub fn model_rollouts(model: &Dynamics, env: &Env, pop: &Population, workers: &Workers) -> Result<Vec<Vec<State>>> {
    let spec = env.spec();
    let n = spec.dof();
    let taus = pop.torques(env)?;
    let chunks: Vec<(usize, usize)> = (0..pop.len())
        .step_by(ROLLOUT_CHUNK)
        .map(|lo| (lo, (lo + ROLLOUT_CHUNK).min(pop.len())))
        .collect();
    let parts = workers.map(&chunks, |&(lo, hi)| -> Result<Vec<Vec<State>>> {
        let rows = hi - lo;
        let mut data = Vec::with_capacity(rows * 2 * n);
        for s in &pop.starts[lo..hi] {
            data.extend(s.to_flat());
        }
        let mut s = Tensor::new(rows, 2 * n, data)?;
        let mut paths: Vec<Vec<State>> = pop.starts[lo..hi].iter().map(|s| vec![s.clone()]).collect();
        for t in 0..pop.horizon() {
            let mut td = Vec::with_capacity(rows * n);
            for tau in &taus[lo..hi] {
                td.extend_from_slice(&tau[t]);
            }
            s = model.predict_tensor(spec, &s, &Tensor::new(rows, n, td)?)?;
            for (r, path) in paths.iter_mut().enumerate() {
                path.push(State::from_flat(s.row_slice(r)));
            }
        }
        Ok(paths)
    });
    let mut out = Vec::with_capacity(pop.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn l1_distance(env: &Env, a: &State, b: &State) -> f64 {
    let mask = env.spec().angle_mask();
    let dq: f64 = (0..a.dof())
        .map(|i| {
            let d = a.q[i] - b.q[i];
            if mask[i] { wrap_angle(d) } else { d }.abs()
        })
        .sum();
    dq + a.qdot.iter().zip(&b.qdot).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Per-step mean L1 distance between predicted and true paths.
pub fn state_error(env: &Env, predicted: &[Vec<State>], truth: &[Vec<State>]) -> Result<ErrorSeries> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract("predicted and true populations differ in size".into()));
    }
    let samples: Vec<Vec<f64>> = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| p.iter().zip(t).skip(1).map(|(a, b)| l1_distance(env, a, b)).collect())
        .collect();
    ErrorSeries::from_samples(&samples)
}

fn step_work(env: &Env, prev: &State, next: &State, tau: &[f64], rule: WorkRule) -> f64 {
    match rule {
        WorkRule::Exact => env.step_work(prev, next, tau),
        WorkRule::Trapezoidal => {
            let dt = env.spec().dt;
            (0..tau.len())
                .map(|i| tau[i] * 0.5 * (prev.qdot[i] + next.qdot[i]) * dt)
                .sum()
        }
    }
}

/// `|Eₖ − E₀ − W₀→ₖ|` along one path, `energies[k]` being `E(sₖ)`.
pub fn energy_residuals(env: &Env, path: &[State], taus: &[Vec<f64>], rule: WorkRule, energies: &[f64]) -> Vec<f64> {
    let mut work = 0.0;
    path.windows(2)
        .zip(taus)
        .zip(&energies[1..])
        .map(|((w, tau), e)| {
            work += step_work(env, &w[0], &w[1], tau, rule);
            (e - energies[0] - work).abs()
        })
        .collect()
}

/// Energy error of paths measured with the true energy function.
pub fn energy_error(env: &Env, paths: &[Vec<State>], pop: &Population, rule: WorkRule) -> Result<ErrorSeries> {
    let taus = pop.torques(env)?;
    let samples: Vec<Vec<f64>> = paths
        .iter()
        .zip(&taus)
        .map(|(p, t)| {
            let e: Vec<f64> = p.iter().map(|s| env.total_energy(s)).collect();
            energy_residuals(env, p, t, rule, &e)
        })
        .collect();
    ErrorSeries::from_samples(&samples)
}

/// The same residual measured with the LNN's own `T̂ + V̂`.
pub fn learned_energy_error(
    lnn: &LnnModel,
    env: &Env,
    paths: &[Vec<State>],
    pop: &Population,
    rule: WorkRule,
) -> Result<ErrorSeries> {
    let taus = pop.torques(env)?;
    let mut samples = Vec::with_capacity(paths.len());
    for (p, t) in paths.iter().zip(&taus) {
        let e = learned_energies(lnn, p)?;
        samples.push(energy_residuals(env, p, t, rule, &e));
    }
    ErrorSeries::from_samples(&samples)
}

fn learned_energies(lnn: &LnnModel, path: &[State]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let nets = (lnn.l_net.register(&mut g, false), lnn.v_net.register(&mut g, false));
    let n = lnn.dof();
    let mut data = Vec::with_capacity(path.len() * 2 * n);
    for s in path {
        data.extend(s.to_flat());
    }
    let s = g.constant(Tensor::new(path.len(), 2 * n, data)?);
    let e = lnn.energy(&mut g, &nets, s)?;
    Ok(g.value(e).data().to_vec())
}

/// Everything the diagnose command reports for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub env: String,
    pub model: String,
    pub population: usize,
    pub horizon: usize,
    pub work_rule: WorkRule,
    pub state_error: ErrorSeries,
    pub energy_error: ErrorSeries,
    pub trajectory_error: f64,
    /// LNN only: residual under the learned energy.
    pub learned_energy_error: Option<ErrorSeries>,
}

pub fn diagnose(model: &Dynamics, env: &Env, pop: &Population, rule: WorkRule, workers: &Workers) -> Result<DiagnosticReport> {
    let truth = true_rollouts(env, pop, workers)?;
    let pred = model_rollouts(model, env, pop, workers)?;
    let state = state_error(env, &pred, &truth)?;
    let energy = energy_error(env, &pred, pop, rule)?;
    let learned = match model {
        Dynamics::Lnn(l) => Some(learned_energy_error(l, env, &pred, pop, rule)?),
        _ => None,
    };
    Ok(DiagnosticReport {
        env: env.spec().name.clone(),
        model: model.name().to_string(),
        population: pop.len(),
        horizon: pop.horizon(),
        work_rule: rule,
        trajectory_error: trajectory_error(&state),
        state_error: state,
        energy_error: energy,
        learned_energy_error: learned,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: String,
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
    pub solved: bool,
    /// Episodes in which the goal condition held for the required run of steps.
    pub goal_reached: usize,
}

/// Return of one episode from `s0` and whether the goal was held.
pub fn run_episode(env: &Env, policy: &dyn Policy, s0: State, log: Option<&mut TrajectoryLog>) -> Result<(f64, bool)> {
    let mut s = s0;
    let mut ret = 0.0;
    let mut tracker = GoalTracker::default();
    let mut reached = false;
    let mut log = log;
    for _ in 0..env.spec().episode_len {
        let a = policy.act(&s.to_flat())?;
        let (next, r) = env.step(&s, &a)?;
        if let Some(l) = log.as_deref_mut() {
            l.push(env, &next, &a, r);
        }
        ret += r;
        reached |= tracker.update(env, &next);
        s = next;
    }
    Ok((ret, reached))
}

/// Start state of evaluation episode `i`.
pub fn eval_start(env: &Env, seed: u64, i: usize) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    env.reset(&mut rng)
}

/// Episode `i` starts from a reset drawn on its own stream, so results do
/// not depend on the worker count.
pub fn evaluate_policy(env: &Env, policy: &dyn Policy, episodes: usize, seed: u64, workers: &Workers) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Contract("evaluation needs at least one episode".into()));
    }
    let runs = workers.map_range(episodes, |i| run_episode(env, policy, eval_start(env, seed, i), None));
    let mut returns = Vec::with_capacity(episodes);
    let mut goal_reached = 0;
    for r in runs {
        let (ret, reached) = r?;
        returns.push(ret);
        goal_reached += reached as usize;
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let threshold = env.spec().solve_threshold;
    Ok(EvalSummary {
        env: env.spec().name.clone(),
        policy: policy.name(),
        episodes,
        seed,
        returns,
        mean,
        std,
        threshold,
        solved: mean > threshold,
        goal_reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbrl::ZeroPolicy;

    #[test]
    fn constant_series_sums() {
        let s = ErrorSeries::from_samples(&[vec![0.5; 16], vec![0.5; 16]]).unwrap();
        assert_eq!(trajectory_error(&s), 8.0);
        assert_eq!(s.std, vec![0.0; 16]);
        assert!(ErrorSeries::from_samples(&[]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let s = ErrorSeries::from_samples(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(3).unwrap(), "3,3,0");
    }

    #[test]
    fn oracle_model_has_zero_state_error() {
        let env = Env::preset("acrobot").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let starts = (0..10).map(|_| env.reset(&mut rng)).collect();
        let pop = Population::random_actions(&env, starts, 16, &mut rng);
        let w = Workers::sequential();
        let r = diagnose(&Dynamics::oracle(env.spec()), &env, &pop, WorkRule::Exact, &w).unwrap();
        assert!(r.state_error.mean.iter().all(|&e| e < 1e-12));
        assert!(r.energy_error.mean.iter().all(|&e| e < 1e-4));
        assert_eq!(r.trajectory_error, r.state_error.mean.iter().sum::<f64>());
    }

    #[test]
    fn zero_policy_eval_is_reproducible() {
        let env = Env::preset("pendulum").unwrap();
        let p = ZeroPolicy { action_dim: 1 };
        let w = Workers::sequential();
        let a = evaluate_policy(&env, &p, 3, 7, &w).unwrap();
        let b = evaluate_policy(&env, &p, 3, 7, &w).unwrap();
        assert_eq!(a, b);
        assert!(!a.solved && a.returns.iter().all(|r| (0.0..=1000.0).contains(r)));
    }
}
