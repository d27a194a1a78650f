use std::io::Write;

use lagrl_autodiff::{Checkpoint, OptState, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::SampleMode;
use super::behaviour::{BehaviourConfig, BehaviourLearner};
use super::imagine::actuation_matrix;
use super::replay::{ReplayBuffer, Transition};
use crate::diagnostics::{evaluate_policy, EvalSummary};
use crate::error::{Error, Result};
use crate::models::{
    get_mlp, put_mlp, save_models, Dynamics, ModelConfig, ModelKind, ModelMeta, ModelTrainer, Normalizer,
    OracleReward, RewardModel, Rewards,
};
use crate::parallel::Workers;
use crate::physics::{Env, EnvSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: String,
    pub model: ModelKind,
    pub seed: u64,
    /// Episodes of uniformly random actions before learning starts (K).
    pub random_episodes: usize,
    /// Total environment episodes, random ones included.
    pub episodes: usize,
    /// Model updates per episode (N₁).
    pub model_updates: usize,
    /// Behaviour updates per episode (N₂).
    pub behaviour_updates: usize,
    pub replay_capacity: usize,
    /// Evaluate every this many training episodes; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Stop once an evaluation reaches this mean return.
    pub stop_return: Option<f64>,
    pub checkpoint_every: usize,
    /// Imagine with the true simulator instead of the learned dynamics.
    pub oracle_model: bool,
    /// Imagine with the true reward instead of the learned reward.
    pub oracle_reward: bool,
    pub workers: usize,
    /// Physics overrides; the named preset when absent.
    pub physics: Option<EnvSpec>,
    pub models: ModelConfig,
    pub behaviour: BehaviourConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: "pendulum".into(),
            model: ModelKind::Lnn,
            seed: 0,
            random_episodes: 10,
            episodes: 1000,
            model_updates: 10_000,
            behaviour_updates: 1000,
            replay_capacity: 100_000,
            eval_every: 5,
            eval_episodes: 5,
            stop_return: None,
            checkpoint_every: 25,
            oracle_model: false,
            oracle_reward: false,
            workers: 1,
            physics: None,
            models: ModelConfig::default(),
            behaviour: BehaviourConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn spec(&self) -> Result<EnvSpec> {
        match &self.physics {
            Some(s) => {
                s.validate()?;
                if s.name != self.env {
                    return Err(Error::Config(format!(
                        "physics section describes `{}` but env is `{}`",
                        s.name, self.env
                    )));
                }
                Ok(s.clone())
            }
            None => EnvSpec::preset(&self.env),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.behaviour.validate()?;
        if self.random_episodes == 0 {
            return Err(Error::Config("at least one random episode is needed to seed the replay buffer".into()));
        }
        if self.models.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("batch size and replay capacity must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub env_steps: usize,
    pub ret: f64,
    pub dyn_loss: Option<f64>,
    pub rew_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_grad_norm: Option<f64>,
    pub critic_grad_norm: Option<f64>,
    pub eval_return: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "episode,env_steps,return,dyn_loss,rew_loss,actor_loss,critic_loss,actor_grad_norm,critic_grad_norm,eval_return";

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.env_steps,
            self.ret,
            opt(self.dyn_loss),
            opt(self.rew_loss),
            opt(self.actor_loss),
            opt(self.critic_loss),
            opt(self.actor_grad_norm),
            opt(self.critic_grad_norm),
            opt(self.eval_return)
        )
    }
}

pub trait TrainObserver {
    fn episode(&mut self, trainer: &Trainer, metrics: &EpisodeMetrics) -> Result<()>;
}

/// Writes one CSV row per episode.
pub struct CsvMetrics<W: Write> {
    out: W,
}

impl<W: Write> CsvMetrics<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(CsvMetrics { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TrainObserver for CsvMetrics<W> {
    fn episode(&mut self, _t: &Trainer, m: &EpisodeMetrics) -> Result<()> {
        writeln!(self.out, "{}", m.csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub env_steps: usize,
    pub best_eval: Option<f64>,
    /// First episode whose evaluation reached `stop_return`.
    pub reached_at: Option<usize>,
    pub model_skipped: u64,
    pub incidents: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// State of one training run (one seed, one environment).
pub struct Trainer {
    pub config: TrainConfig,
    pub env: Env,
    pub dynamics: Dynamics,
    pub reward: RewardModel,
    pub model_trainer: ModelTrainer,
    pub behaviour: BehaviourLearner,
    pub replay: ReplayBuffer,
    pub episode: usize,
    pub env_steps: usize,
    pub workers: Workers,
    env_rng: ChaCha8Rng,
    act_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    actuation: Tensor,
    best_eval: Option<f64>,
    reached_at: Option<usize>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.spec()?;
        let env = Env::new(spec.clone())?;
        let mut init = stream(config.seed, 0);
        let dynamics = if config.oracle_model {
            Dynamics::oracle(&spec)
        } else {
            Dynamics::new(config.model, &spec, &config.models, &mut init)
        };
        let reward = RewardModel::new(spec.state_dim(), &config.models.reward_hidden, &mut init);
        let behaviour = BehaviourLearner::new(&spec, config.behaviour.clone(), &mut init)?;
        let model_trainer = ModelTrainer::new(config.models.clone(), &dynamics, &reward);
        let replay = ReplayBuffer::new(config.replay_capacity, spec.state_dim(), spec.action_dim(), stream(config.seed, 3))?;
        Ok(Trainer {
            workers: Workers::new(config.workers.max(1)),
            actuation: actuation_matrix(&spec),
            env,
            dynamics,
            reward,
            model_trainer,
            behaviour,
            replay,
            episode: 0,
            env_steps: 0,
            env_rng: stream(config.seed, 1),
            act_rng: stream(config.seed, 2),
            noise_rng: stream(config.seed, 4),
            best_eval: None,
            reached_at: None,
            config,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn rewards(&self) -> Rewards {
        if self.config.oracle_reward {
            Rewards::Oracle(OracleReward {
                spec: self.spec().clone(),
            })
        } else {
            Rewards::Learned(self.reward.clone())
        }
    }

    fn run_episode(&mut self, random: bool) -> Result<f64> {
        let mut s = self.env.reset(&mut self.env_rng);
        let m = self.spec().action_dim();
        let mut ret = 0.0;
        for _ in 0..self.spec().episode_len {
            let a = if random {
                (0..m).map(|_| self.act_rng.random_range(-1.0..=1.0)).collect()
            } else {
                self.behaviour.actor.act(&s.to_flat(), SampleMode::Stochastic, &mut self.act_rng)?.0
            };
            let (next, r) = self.env.step(&s, &a)?;
            self.replay.push(&Transition {
                state: s,
                action: a,
                reward: r,
                next_state: next.clone(),
            })?;
            ret += r;
            s = next;
        }
        self.env_steps += self.spec().episode_len;
        self.episode += 1;
        Ok(ret)
    }

    /// Fits input statistics on the replay contents (when enabled).
    fn fit_normalizers(&mut self) -> Result<()> {
        if !self.config.models.normalize_inputs {
            return Ok(());
        }
        let states = self.replay.states();
        let n = self.spec().dof();
        let rows = states.rows();
        let batch = self.replay.sample_batch(rows.min(10_000), &self.actuation)?;
        match &mut self.dynamics {
            Dynamics::Dnn(m) => {
                let mut data = Vec::with_capacity(batch.len() * 3 * n);
                for r in 0..batch.len() {
                    data.extend_from_slice(batch.states.row_slice(r));
                    data.extend_from_slice(batch.taus.row_slice(r));
                }
                m.input_norm = Some(Normalizer::fit(&Tensor::new(batch.len(), 3 * n, data)?)?);
            }
            Dynamics::Lnn(m) => m.q_norm = Some(Normalizer::fit(&states.slice_cols(0, n))?),
            Dynamics::Oracle(_) => {}
        }
        self.reward.input_norm = Some(Normalizer::fit(&states)?);
        Ok(())
    }

    fn model_phase(&mut self, m: &mut EpisodeMetrics) -> Result<()> {
        if self.config.oracle_model && self.config.oracle_reward {
            return Ok(());
        }
        let (mut dl, mut rl, mut ok) = (0.0, 0.0, 0usize);
        for _ in 0..self.config.model_updates {
            let batch = self.replay.sample_batch(self.config.models.batch_size, &self.actuation)?;
            let spec = self.env.spec().clone();
            match self.model_trainer.update(&mut self.dynamics, &mut self.reward, &spec, &batch) {
                Ok(l) => {
                    dl += l.dyn_loss;
                    rl += l.rew_loss;
                    ok += 1;
                }
                Err(Error::Numeric(msg)) => eprintln!("model update skipped: {msg}"),
                Err(e) => return Err(e),
            }
        }
        if ok > 0 {
            if !self.config.oracle_model {
                m.dyn_loss = Some(dl / ok as f64);
            }
            m.rew_loss = Some(rl / ok as f64);
        }
        Ok(())
    }

    fn behaviour_phase(&mut self, m: &mut EpisodeMetrics) -> Result<()> {
        let rewards = self.rewards();
        let (mut al, mut cl, mut an, mut cn, mut ok) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for _ in 0..self.config.behaviour_updates {
            let starts = self.replay.sample_states(self.config.behaviour.batch_size)?;
            let noise = self.behaviour.draw_noise(&mut self.noise_rng);
            let spec = self.env.spec().clone();
            match self.behaviour.update(&spec, &self.dynamics, &rewards, &starts, &noise, &self.workers) {
                Ok(s) => {
                    al += s.actor_loss;
                    cl += s.critic_loss;
                    an += s.actor_grad_norm;
                    cn += s.critic_grad_norm;
                    ok += 1;
                }
                Err(e @ (Error::Numeric(_) | Error::Autodiff(_))) => eprintln!("imagined batch discarded: {e}"),
                Err(e) => return Err(e),
            }
        }
        if ok > 0 {
            let k = ok as f64;
            m.actor_loss = Some(al / k);
            m.critic_loss = Some(cl / k);
            m.actor_grad_norm = Some(an / k);
            m.critic_grad_norm = Some(cn / k);
        }
        Ok(())
    }

    pub fn evaluate(&self, episodes: usize) -> Result<EvalSummary> {
        let seed = self.config.seed.wrapping_mul(1_000_003).wrapping_add(self.episode as u64);
        evaluate_policy(&self.env, &self.behaviour.actor, episodes, seed, &self.workers)
    }

    /// Runs the next episode: a random one while the replay buffer is being
    /// seeded, otherwise model learning, behaviour learning and one episode
    /// with the stochastic actor.
    pub fn step_episode(&mut self) -> Result<EpisodeMetrics> {
        let mut m = EpisodeMetrics::default();
        if self.episode < self.config.random_episodes {
            m.ret = self.run_episode(true)?;
            if self.episode == self.config.random_episodes {
                self.fit_normalizers()?;
            }
        } else {
            self.model_phase(&mut m)?;
            self.behaviour_phase(&mut m)?;
            m.ret = self.run_episode(false)?;
            let trained = self.episode - self.config.random_episodes;
            if self.config.eval_every > 0 && trained % self.config.eval_every == 0 {
                let e = self.evaluate(self.config.eval_episodes)?.mean;
                m.eval_return = Some(e);
                self.best_eval = Some(self.best_eval.map_or(e, |b: f64| b.max(e)));
                if self.reached_at.is_none() && self.config.stop_return.is_some_and(|t| e >= t) {
                    self.reached_at = Some(self.episode);
                }
            }
        }
        m.episode = self.episode;
        m.env_steps = self.env_steps;
        Ok(m)
    }

    pub fn finished(&self) -> bool {
        self.episode >= self.config.episodes || self.reached_at.is_some()
    }

    pub fn run(&mut self, observer: &mut dyn TrainObserver) -> Result<TrainSummary> {
        while !self.finished() {
            let m = self.step_episode()?;
            observer.episode(self, &m)?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            episodes: self.episode,
            env_steps: self.env_steps,
            best_eval: self.best_eval,
            reached_at: self.reached_at,
            model_skipped: self.model_trainer.skipped,
            incidents: self.behaviour.incidents,
        }
    }

    /// Everything needed to evaluate, analyse or resume this run.
    pub fn checkpoint(&self, config_hash: &str) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        if !self.config.oracle_model {
            let meta = ModelMeta {
                env: self.spec().name.clone(),
                config_hash: config_hash.to_string(),
                step: self.env_steps as u64,
            };
            save_models(&mut ck, &self.dynamics, &self.reward, &meta)?;
        } else {
            ck.set_meta("env", self.spec().name.clone());
            ck.set_meta("config_hash", config_hash);
            ck.set_meta("model", "oracle");
            put_mlp(&mut ck, "reward", &self.reward.net);
        }
        ck.set_meta("spec", self.spec().to_toml()?);
        ck.set_meta("episode", self.episode.to_string());
        ck.set_meta("env_steps", self.env_steps.to_string());
        ck.set_meta("behaviour.updates", self.behaviour.updates.to_string());
        ck.set_meta("behaviour.syncs", self.behaviour.syncs.to_string());
        ck.set_meta("actor.sigma_min", format!("{:e}", self.behaviour.actor.sigma_min));
        ck.set_meta("actor.sigma_max", format!("{:e}", self.behaviour.actor.sigma_max));
        put_mlp(&mut ck, "actor", &self.behaviour.actor.net);
        put_mlp(&mut ck, "critic", &self.behaviour.critic);
        put_mlp(&mut ck, "target", &self.behaviour.target);
        put_opt(&mut ck, "opt.actor", &self.behaviour.actor_opt);
        put_opt(&mut ck, "opt.critic", &self.behaviour.critic_opt);
        let (dyn_opt, rew_opt) = self.model_trainer.opt_states();
        put_opt(&mut ck, "opt.dynamics", dyn_opt);
        put_opt(&mut ck, "opt.reward", rew_opt);
        Ok(ck)
    }
}

pub fn put_opt(ck: &mut Checkpoint, prefix: &str, opt: &OptState) {
    ck.set_meta(format!("{prefix}.step"), opt.step.to_string());
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        ck.insert(format!("{prefix}.m{i}"), m.clone());
        ck.insert(format!("{prefix}.v{i}"), v.clone());
    }
}

/// Actor stored in a training checkpoint.
pub fn load_actor(ck: &Checkpoint) -> Result<super::actor::Actor> {
    let net = get_mlp(ck, "actor")?;
    let parse = |k: &str, d: f64| ck.meta(k).and_then(|s| s.parse().ok()).unwrap_or(d);
    Ok(super::actor::Actor {
        net,
        sigma_min: parse("actor.sigma_min", 1e-3),
        sigma_max: parse("actor.sigma_max", 2.0),
    })
}

/// Environment description stored in a training checkpoint.
pub fn load_spec(ck: &Checkpoint) -> Result<EnvSpec> {
    match ck.meta("spec") {
        Some(text) => EnvSpec::from_toml(text),
        None => EnvSpec::preset(ck.meta("env").ok_or_else(|| Error::Config("checkpoint names no environment".into()))?),
    }
}
