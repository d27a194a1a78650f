use lagrl_autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::TransitionBatch;
use crate::physics::State;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: State,
}

/// FIFO ring buffer of transitions stored as flat rows.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    /// `[s, a, r, s']` per row.
    rows: Vec<Vec<f64>>,
    head: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize, rng: ChaCha8Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            rows: Vec::new(),
            head: 0,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.to_flat().len() != self.state_dim
            || t.next_state.to_flat().len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::Contract("transition dimensions do not match the buffer".into()));
        }
        let mut row = t.state.to_flat();
        row.extend(&t.action);
        row.push(t.reward);
        row.extend(t.next_state.to_flat());
        if self.rows.len() < self.capacity {
            self.rows.push(row);
        } else {
            self.rows[self.head] = row;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition {
        let row = &self.rows[i];
        let (d, m) = (self.state_dim, self.action_dim);
        Transition {
            state: State::from_flat(&row[..d]),
            action: row[d..d + m].to_vec(),
            reward: row[d + m],
            next_state: State::from_flat(&row[d + m + 1..]),
        }
    }

    /// Uniform indices with replacement, drawn from the buffer's own stream.
    pub fn sample_indices(&mut self, count: usize) -> Result<Vec<usize>> {
        if self.rows.is_empty() {
            return Err(Error::Contract("cannot sample from an empty replay buffer".into()));
        }
        let len = self.rows.len();
        Ok((0..count).map(|_| self.rng.random_range(0..len)).collect())
    }

    /// Start states `B×2n`.
    pub fn sample_states(&mut self, count: usize) -> Result<Tensor> {
        let idx = self.sample_indices(count)?;
        let d = self.state_dim;
        let data = idx.iter().flat_map(|&i| self.rows[i][..d].to_vec()).collect();
        Ok(Tensor::new(count, d, data)?)
    }

    /// Model-learning batch; `actuation` maps actions (`1×m` rows) to forces (`m×n`).
    pub fn sample_batch(&mut self, count: usize, actuation: &Tensor) -> Result<TransitionBatch> {
        let idx = self.sample_indices(count)?;
        let (d, m) = (self.state_dim, self.action_dim);
        let mut s = Vec::with_capacity(count * d);
        let mut a = Vec::with_capacity(count * m);
        let mut r = Vec::with_capacity(count);
        let mut nx = Vec::with_capacity(count * d);
        for &i in &idx {
            let row = &self.rows[i];
            s.extend_from_slice(&row[..d]);
            a.extend_from_slice(&row[d..d + m]);
            r.push(row[d + m]);
            nx.extend_from_slice(&row[d + m + 1..]);
        }
        let actions = Tensor::new(count, m, a)?;
        Ok(TransitionBatch {
            states: Tensor::new(count, d, s)?,
            taus: actions.matmul(actuation)?,
            rewards: Tensor::new(count, 1, r)?,
            next: Tensor::new(count, d, nx)?,
        })
    }

    /// All stored states, `len×2n` (for fitting input statistics).
    pub fn states(&self) -> Tensor {
        let d = self.state_dim;
        let data = self.rows.iter().flat_map(|r| r[..d].to_vec()).collect();
        Tensor::new(self.rows.len(), d, data).expect("shape")
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Rows in insertion order, oldest first.
    pub fn ordered_rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        let split = if self.rows.len() < self.capacity { 0 } else { self.head };
        self.rows[split..].iter().chain(self.rows[..split].iter())
    }
}
