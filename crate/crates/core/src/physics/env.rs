use std::sync::atomic::{AtomicU64, Ordering};

use lagrl_autodiff::wrap_angle;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dynamics;
use super::spec::EnvSpec;
use crate::algebra::Reals;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl State {
    pub fn zeros(n: usize) -> Self {
        State {
            q: vec![0.0; n],
            qdot: vec![0.0; n],
        }
    }

    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::Contract(format!(
                "q has {} entries but qdot has {}",
                q.len(),
                qdot.len()
            )));
        }
        Ok(State { q, qdot })
    }

    /// Splits a flat `(q, q̇)` vector.
    pub fn from_flat(s: &[f64]) -> Self {
        let n = s.len() / 2;
        State {
            q: s[..n].to_vec(),
            qdot: s[n..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.qdot);
        v
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
    }
}

/// Ground-truth simulator for one [`EnvSpec`].
#[derive(Debug)]
pub struct Env {
    spec: EnvSpec,
    clamped: AtomicU64,
}

impl Clone for Env {
    fn clone(&self) -> Self {
        Env {
            spec: self.spec.clone(),
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Env {
            spec,
            clamped: AtomicU64::new(0),
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Env::new(EnvSpec::preset(name)?)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn dof(&self) -> usize {
        self.spec.dof()
    }

    fn check(&self, s: &State) -> Result<()> {
        let n = self.dof();
        if s.q.len() != n || s.qdot.len() != n {
            return Err(Error::Contract(format!(
                "{} expects states with {n} coordinates, got {}/{}",
                self.spec.name,
                s.q.len(),
                s.qdot.len()
            )));
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Vec<Vec<f64>> {
        dynamics::mass_matrix(&mut Reals, &self.spec, q)
    }

    pub fn coriolis_term(&self, q: &[f64], qdot: &[f64]) -> Vec<f64> {
        dynamics::coriolis(&mut Reals, &self.spec, q, qdot)
    }

    pub fn gravity_term(&self, q: &[f64]) -> Vec<f64> {
        dynamics::gravity(&mut Reals, &self.spec, q)
    }

    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        dynamics::potential(&mut Reals, &self.spec, q)
    }

    pub fn kinetic_energy(&self, s: &State) -> f64 {
        dynamics::kinetic(&mut Reals, &self.spec, &s.q, &s.qdot)
    }

    pub fn total_energy(&self, s: &State) -> f64 {
        self.kinetic_energy(s) + self.potential_energy(&s.q)
    }

    pub fn tip(&self, q: &[f64]) -> (f64, f64) {
        dynamics::tip(&mut Reals, &self.spec, q)
    }

    pub fn forward_dynamics(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
        if tau.len() != self.dof() {
            return Err(Error::Contract(format!("tau has {} entries, expected {}", tau.len(), self.dof())));
        }
        dynamics::accel(&mut Reals, &self.spec, q, qdot, tau)
            .filter(|a| a.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Simulation(format!("{}: mass matrix not positive definite at q={q:?}", self.spec.name)))
    }

    /// Flat state derivative `(q̇, q̈)`.
    pub fn derivative(&self, s: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
        let n = self.dof();
        let acc = self.forward_dynamics(&s[..n], &s[n..], tau)?;
        let mut d = s[n..].to_vec();
        d.extend(acc);
        Ok(d)
    }

    /// Maps an action in `[−1, 1]^m` to generalized forces. Out-of-range
    /// entries are clamped and counted.
    pub fn actuation_map(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.spec.action_dim() {
            return Err(Error::Contract(format!(
                "action has {} entries, expected {}",
                u.len(),
                self.spec.action_dim()
            )));
        }
        let mut tau = vec![0.0; self.dof()];
        for (k, (&idx, &lim)) in self.spec.actuated.iter().zip(&self.spec.limits).enumerate() {
            let mut a = u[k];
            if !a.is_finite() {
                return Err(Error::Simulation(format!("non-finite action entry {k}")));
            }
            if !(-1.0..=1.0).contains(&a) {
                self.clamped.fetch_add(1, Ordering::Relaxed);
                a = a.clamp(-1.0, 1.0);
            }
            tau[idx] = lim * a;
        }
        Ok(tau)
    }

    /// Number of action entries clamped so far.
    pub fn clamp_warnings(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// RK4 over one control period with `τ` held constant. Angles are left unwrapped.
    pub fn integrate(&self, s: &State, tau: &[f64]) -> Result<State> {
        self.check(s)?;
        let h = self.spec.dt / self.spec.substeps as f64;
        let mut x = s.to_flat();
        let dim = x.len();
        let mut tmp = vec![0.0; dim];
        for _ in 0..self.spec.substeps {
            let k1 = self.derivative(&x, tau)?;
            for i in 0..dim {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            let k2 = self.derivative(&tmp, tau)?;
            for i in 0..dim {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            let k3 = self.derivative(&tmp, tau)?;
            for i in 0..dim {
                tmp[i] = x[i] + h * k3[i];
            }
            let k4 = self.derivative(&tmp, tau)?;
            for i in 0..dim {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let next = State::from_flat(&x);
        if !next.is_finite() {
            return Err(Error::Simulation(format!("{}: state diverged", self.spec.name)));
        }
        Ok(next)
    }

    pub fn wrap(&self, s: &mut State) {
        for (v, is_angle) in s.q.iter_mut().zip(self.spec.angle_mask()) {
            if is_angle {
                *v = wrap_angle(*v);
            }
        }
    }

    /// Advances by one control period under generalized force `tau`.
    pub fn step_torque(&self, s: &State, tau: &[f64]) -> Result<(State, f64)> {
        let mut next = self.integrate(s, tau)?;
        self.wrap(&mut next);
        let r = self.reward(&next);
        Ok((next, r))
    }

    pub fn step(&self, s: &State, action: &[f64]) -> Result<(State, f64)> {
        let tau = self.actuation_map(action)?;
        self.step_torque(s, &tau)
    }

    pub fn tip_distance(&self, q: &[f64]) -> f64 {
        let (x, y) = self.tip(q);
        ((x - self.spec.goal[0]).powi(2) + (y - self.spec.goal[1]).powi(2)).sqrt()
    }

    pub fn reward(&self, s: &State) -> f64 {
        let d = self.tip_distance(&s.q);
        let v2: f64 = s.qdot.iter().map(|v| v * v).sum();
        (-self.spec.reward_distance_scale * d * d - self.spec.reward_velocity_scale * v2).exp()
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let init = &self.spec.init;
        let n = self.dof();
        let mut s = State::zeros(n);
        let sym = |rng: &mut R, a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        for (i, is_angle) in self.spec.angle_mask().into_iter().enumerate() {
            s.q[i] = if !is_angle {
                sym(rng, init.position_noise)
            } else if init.uniform_angles {
                std::f64::consts::PI - 2.0 * std::f64::consts::PI * rng.random::<f64>()
            } else {
                sym(rng, init.angle_noise)
            };
        }
        for v in s.qdot.iter_mut() {
            *v = sym(rng, init.velocity_noise);
        }
        s
    }

    /// Instantaneous goal condition: tip near the goal and slow.
    pub fn at_goal(&self, s: &State) -> bool {
        let speed = s.qdot.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.tip_distance(&s.q) < self.spec.goal_tolerance && speed < self.spec.goal_speed
    }

    /// Work done by a constant generalized force over one step, `τᵀΔq`,
    /// with angle differences wrapped.
    pub fn step_work(&self, prev: &State, next: &State, tau: &[f64]) -> f64 {
        let mask = self.spec.angle_mask();
        (0..self.dof())
            .map(|i| {
                let dq = next.q[i] - prev.q[i];
                let dq = if mask[i] { wrap_angle(dq) } else { dq };
                tau[i] * dq
            })
            .sum()
    }
}

/// Tracks how long the goal condition has held.
#[derive(Clone, Debug, Default)]
pub struct GoalTracker {
    held: usize,
}

impl GoalTracker {
    /// Returns true once the condition has held for `goal_hold_steps` consecutive steps.
    pub fn update(&mut self, env: &Env, s: &State) -> bool {
        if env.at_goal(s) {
            self.held += 1;
        } else {
            self.held = 0;
        }
        self.held >= env.spec().goal_hold_steps
    }
}
