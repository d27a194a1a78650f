//! Environment descriptions.
//!
//! Every environment is a planar chain of point masses on massless links,
//! optionally mounted on a cart that slides along a horizontal rail. Joint
//! coordinates are relative angles measured from the hanging position, so
//! `q = 0` is the stable rest configuration and the tip points straight up
//! when the absolute angles all equal π.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_NAMES: [&str; 7] = [
    "reacher",
    "pendulum",
    "cartpole",
    "cart2pole",
    "acrobot",
    "cart3pole",
    "acro3bot",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    /// Half-width of the uniform noise on joint angles (rad).
    pub angle_noise: f64,
    /// Half-width of the uniform noise on the cart position (m).
    pub position_noise: f64,
    /// Half-width of the uniform noise on every velocity.
    pub velocity_noise: f64,
    /// Draw joint angles uniformly from (−π, π] instead.
    pub uniform_angles: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    /// Cart mass (kg); when present, coordinate 0 is the cart position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cart_mass: Option<f64>,
    /// Point mass at the end of each link (kg).
    pub link_masses: Vec<f64>,
    /// Link lengths (m).
    pub link_lengths: Vec<f64>,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Motion in the horizontal plane: potential energy is constant.
    pub horizontal: bool,
    /// Control period (s).
    pub dt: f64,
    /// RK4 substeps per control period.
    pub substeps: usize,
    pub episode_len: usize,
    /// Actuated coordinate indices (0-based), one per action entry.
    pub actuated: Vec<usize>,
    /// Torque (N·m) or force (N) limit of each actuator.
    pub limits: Vec<f64>,
    /// Tip target in the plane of motion (m).
    pub goal: [f64; 2],
    /// Reward factor `exp(−distance_scale·d²)` on tip distance `d`.
    pub reward_distance_scale: f64,
    /// Reward factor `exp(−velocity_scale·‖q̇‖²)`.
    pub reward_velocity_scale: f64,
    pub init: InitDistribution,
    /// Tip distance under which the goal counts as reached (m).
    pub goal_tolerance: f64,
    /// Velocity norm under which the goal counts as reached.
    pub goal_speed: f64,
    /// Consecutive steps the goal condition must hold.
    pub goal_hold_steps: usize,
    /// Mean evaluation return above which the task counts as solved.
    pub solve_threshold: f64,
}

impl EnvSpec {
    pub fn preset(name: &str) -> Result<EnvSpec> {
        let hanging = InitDistribution {
            angle_noise: 0.1,
            position_noise: 0.1,
            velocity_noise: 0.05,
            uniform_angles: false,
        };
        let base = |name: &str, cart: Option<f64>, links: usize, actuated: Vec<usize>, limits: Vec<f64>| {
            let reach = links as f64;
            EnvSpec {
                name: name.to_string(),
                cart_mass: cart,
                link_masses: vec![1.0; links],
                link_lengths: vec![1.0; links],
                gravity: 9.81,
                horizontal: false,
                dt: 0.02,
                substeps: 10,
                episode_len: 1000,
                actuated,
                limits,
                goal: [0.0, reach],
                reward_distance_scale: 1.0,
                reward_velocity_scale: 0.01,
                init: hanging.clone(),
                goal_tolerance: reach / 10.0,
                goal_speed: 1.0,
                goal_hold_steps: 50,
                solve_threshold: 780.0,
            }
        };
        let spec = match name {
            "reacher" => EnvSpec {
                horizontal: true,
                goal: [1.0, 1.0],
                init: InitDistribution {
                    uniform_angles: true,
                    ..hanging.clone()
                },
                goal_tolerance: 0.1,
                ..base(name, None, 2, vec![0, 1], vec![2.0, 2.0])
            },
            "pendulum" => base(name, None, 1, vec![0], vec![5.0]),
            "cartpole" => base(name, Some(1.0), 1, vec![0], vec![20.0]),
            "cart2pole" => base(name, Some(1.0), 2, vec![0], vec![20.0]),
            "acrobot" => base(name, None, 2, vec![1], vec![5.0]),
            "cart3pole" => base(name, Some(1.0), 3, vec![0, 3], vec![20.0, 5.0]),
            "acro3bot" => base(name, None, 3, vec![0, 2], vec![5.0, 5.0]),
            other => {
                return Err(Error::Config(format!(
                    "unknown environment `{other}`; expected one of {}",
                    ENV_NAMES.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn has_cart(&self) -> bool {
        self.cart_mass.is_some()
    }

    /// Index of the first joint angle in `q`.
    pub fn link_offset(&self) -> usize {
        usize::from(self.has_cart())
    }

    pub fn num_links(&self) -> usize {
        self.link_masses.len()
    }

    /// Degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.link_offset() + self.num_links()
    }

    /// `dim(s) = 2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.dof()
    }

    pub fn action_dim(&self) -> usize {
        self.actuated.len()
    }

    /// Per-coordinate flag: true for joint angles (wrapped), false for the cart.
    pub fn angle_mask(&self) -> Vec<bool> {
        (0..self.dof()).map(|i| i >= self.link_offset()).collect()
    }

    /// Same flags over the full state `(q, q̇)`; velocities are never wrapped.
    pub fn state_angle_mask(&self) -> Vec<bool> {
        let mut m = self.angle_mask();
        m.extend(std::iter::repeat_n(false, self.dof()));
        m
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name)));
        if self.link_masses.is_empty() || self.link_masses.len() != self.link_lengths.len() {
            return bad("link masses and lengths must be non-empty and equal in number".into());
        }
        if self
            .link_masses
            .iter()
            .chain(&self.link_lengths)
            .chain(self.cart_mass.iter())
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return bad("masses and lengths must be positive".into());
        }
        if self.actuated.is_empty() {
            return bad("at least one coordinate must be actuated".into());
        }
        if self.actuated.len() != self.limits.len() {
            return bad("one limit per actuated coordinate".into());
        }
        let mut seen = vec![false; self.dof()];
        for &a in &self.actuated {
            if a >= self.dof() || seen[a] {
                return bad(format!("actuated index {a} out of range or repeated"));
            }
            seen[a] = true;
        }
        if self.limits.iter().any(|&l| !(l > 0.0)) {
            return bad("limits must be positive".into());
        }
        if !(self.dt > 0.0) || self.substeps == 0 || self.episode_len == 0 {
            return bad("dt, substeps and episode length must be positive".into());
        }
        if self.gravity < 0.0 || self.reward_distance_scale < 0.0 || self.reward_velocity_scale < 0.0 {
            return bad("gravity and reward scales must be non-negative".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<EnvSpec> {
        let spec: EnvSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_roundtrip() {
        for name in ENV_NAMES {
            let spec = EnvSpec::preset(name).unwrap();
            assert_eq!(spec.episode_len, 1000);
            let back = EnvSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
            assert_eq!(back, spec);
        }
        assert!(EnvSpec::preset("hopper").is_err());
    }

    #[test]
    fn degrees_of_freedom() {
        let dofs: Vec<usize> = ENV_NAMES.iter().map(|n| EnvSpec::preset(n).unwrap().dof()).collect();
        assert_eq!(dofs, vec![2, 1, 2, 3, 2, 4, 3]);
    }

    #[test]
    fn invalid_actuation_rejected() {
        let mut spec = EnvSpec::preset("acrobot").unwrap();
        spec.actuated = vec![2];
        assert!(spec.validate().is_err());
        spec.actuated = vec![];
        spec.limits = vec![];
        assert!(spec.validate().is_err());
    }
}
