//! Resolved per-command configurations. Each is written as TOML into its run
//! directory before any work starts.

use std::path::Path;

use lagrl_core::diagnostics::WorkRule;
use lagrl_core::lyapunov::MleConfig;
use lagrl_core::mbrl::TrainConfig;
use lagrl_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Training checkpoint holding the actor.
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            policy: String::new(),
            episodes: 10,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Training checkpoint holding the dynamics model and actor.
    pub policy: String,
    pub population: usize,
    pub horizon: usize,
    pub work_rule: WorkRule,
    /// Actor episodes whose visited states seed the population.
    pub visit_episodes: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            policy: String::new(),
            population: 1000,
            horizon: 16,
            work_rule: WorkRule::Exact,
            visit_episodes: 10,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleRunConfig {
    pub env: String,
    /// Checkpoint paths, or `zero` for the unforced system.
    pub policies: Vec<String>,
    /// Initial states per policy, drawn from the reset distribution.
    pub starts: usize,
    pub seed: u64,
    pub workers: usize,
    pub mle: MleConfig,
}

impl Default for MleRunConfig {
    fn default() -> Self {
        MleRunConfig {
            env: "pendulum".into(),
            policies: vec!["zero".into()],
            starts: 1,
            seed: 0,
            workers: 1,
            mle: MleConfig::default(),
        }
    }
}

pub trait CommandConfig: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> Result<()>;

    fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Defaults, or the file when given.
    fn base(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }
}

impl CommandConfig for TrainConfig {
    fn validate(&self) -> Result<()> {
        TrainConfig::validate(self)
    }
    fn to_toml(&self) -> Result<String> {
        TrainConfig::to_toml(self)
    }
    fn from_toml(text: &str) -> Result<Self> {
        TrainConfig::from_toml(text)
    }
}

fn need_policy(p: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Config("a policy checkpoint is required (--policy)".into()));
    }
    Ok(())
}

impl CommandConfig for EvalConfig {
    fn validate(&self) -> Result<()> {
        need_policy(&self.policy)?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        Ok(())
    }
}

impl CommandConfig for DiagnoseConfig {
    fn validate(&self) -> Result<()> {
        need_policy(&self.policy)?;
        if self.population == 0 || self.horizon == 0 {
            return Err(Error::Config("population and horizon must be positive".into()));
        }
        Ok(())
    }
}

impl CommandConfig for MleRunConfig {
    fn validate(&self) -> Result<()> {
        lagrl_core::physics::EnvSpec::preset(&self.env)?;
        if self.policies.is_empty() || self.starts == 0 {
            return Err(Error::Config("at least one policy and one start are required".into()));
        }
        self.mle.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lagrl_core::lyapunov::MleMode;

    fn round_trip<C: CommandConfig + PartialEq + std::fmt::Debug>(c: C) {
        let text = c.to_toml().unwrap();
        assert_eq!(C::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn configs_round_trip() {
        round_trip(EvalConfig {
            policy: "a/b.ckpt".into(),
            episodes: 3,
            seed: 9,
            workers: 2,
        });
        round_trip(DiagnoseConfig {
            policy: "x.ckpt".into(),
            work_rule: WorkRule::Trapezoidal,
            ..Default::default()
        });
        let mut m = MleRunConfig {
            env: "acrobot".into(),
            policies: vec!["zero".into(), "p.ckpt".into()],
            ..Default::default()
        };
        m.mle.mode = MleMode::Standard;
        m.mle.max_steps = Some(77);
        round_trip(m);
        let mut t = TrainConfig::default();
        t.stop_return = Some(700.0);
        round_trip(t);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(EvalConfig::from_toml("policy = \"x\"\nepisodez = 3\n").is_err());
    }

    #[test]
    fn missing_policy_is_a_config_error() {
        assert!(matches!(EvalConfig::default().validate(), Err(Error::Config(_))));
    }
}
