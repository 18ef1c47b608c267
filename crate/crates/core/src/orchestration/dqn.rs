//! Deep Q-learning building blocks: Q-network with target copy, replay ring,
//! exploration schedule and running standardisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Adam, AdamConfig, Mlp, Rng, Tensor};

pub const Q_HIDDEN: usize = 64;
/// Q-values beyond this magnitude are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Online-to-target copy period, in updates.
    pub target_sync: u64,
    /// Pick the bootstrap action with the online net and value it with the
    /// target net, which curbs the upward bias of a plain max.
    pub double_q: bool,
}

impl DqnConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            lr: 5e-4,
            batch_size: 64,
            replay_capacity: 10_000,
            target_sync: 200,
            double_q: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity ring; once full, each push overwrites the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Contents from oldest to newest.
    pub fn ordered(&self) -> Vec<T> {
        if self.items.len() < self.capacity {
            self.items.clone()
        } else {
            let (newer, older) = self.items.split_at(self.cursor);
            older.iter().chain(newer).cloned().collect()
        }
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&T> {
        (0..n).map(|_| &self.items[rng.below(self.items.len())]).collect()
    }
}

/// Linear decay from `start` to `end` over `steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl EpsilonSchedule {
    pub fn at(&self, step: usize) -> f64 {
        if step >= self.steps {
            self.end
        } else {
            self.start + (self.end - self.start) * step as f64 / self.steps as f64
        }
    }
}

/// Welford running mean/variance; standardises values seen so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStandardizer {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStandardizer {
    pub fn observe(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn standardize(&self, x: f64) -> f64 {
        if self.count < 2 {
            return x - self.mean;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (x - self.mean) / var.sqrt().max(1e-6)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// Online Q-network with a target copy refreshed every `target_sync` updates.
#[derive(Debug, Clone)]
pub struct QNetwork {
    pub online: Mlp,
    pub target: Mlp,
    optimizer: Adam,
    config: DqnConfig,
    updates: u64,
    last_sync: u64,
}

impl QNetwork {
    pub fn new(state_width: usize, actions: usize, config: DqnConfig, rng: &mut Rng) -> Result<Self> {
        let online = Mlp::new(
            &[state_width, Q_HIDDEN, Q_HIDDEN, actions],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            rng,
        )?;
        Ok(Self {
            target: online.clone(),
            optimizer: Adam::new(AdamConfig::with_lr(config.lr), &online),
            online,
            config,
            updates: 0,
            last_sync: 0,
        })
    }

    pub fn actions(&self) -> usize {
        self.online.output_width()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Update count at the most recent target copy.
    pub fn last_sync(&self) -> u64 {
        self.last_sync
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let q = self.online.forward(&Tensor::matrix(1, state.len(), state.to_vec())?)?;
        check_divergence(q.data(), self.updates)?;
        Ok(q.into_data())
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// ε-greedy action; exploration draws are uniform over all actions.
    pub fn act(&self, state: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        if rng.bernoulli(epsilon) {
            Ok(rng.below(self.actions()))
        } else {
            self.greedy(state)
        }
    }

    /// One squared-TD-error step on a sampled batch, with targets
    /// `r + γ·Q_target(s', a')` where `a'` maximises the target net, or the
    /// online net when `double_q` is set. Returns the batch loss.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let n = batch.len();
        if n == 0 {
            return Ok(0.0);
        }
        let width = self.online.input_width();
        let actions = self.actions();
        let states = Tensor::matrix(n, width, batch.iter().flat_map(|t| t.state.iter().copied()).collect())?;
        let next = Tensor::matrix(n, width, batch.iter().flat_map(|t| t.next_state.iter().copied()).collect())?;
        let next_q = self.target.forward(&next)?;
        check_divergence(next_q.data(), self.updates)?;
        let chooser = if self.config.double_q {
            Some(self.online.forward(&next)?)
        } else {
            None
        };
        let trace = self.online.forward_trace(&states)?;
        let q = trace.output();
        check_divergence(q.data(), self.updates)?;
        let mut dq = vec![0.0; n * actions];
        let mut loss = 0.0;
        for (r, t) in batch.iter().enumerate() {
            let best_next = match &chooser {
                Some(online) => next_q.row(r)[argmax(online.row(r))],
                None => next_q.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            let target = t.reward + self.config.gamma * best_next;
            let err = q.row(r)[t.action] - target;
            loss += err * err / n as f64;
            dq[r * actions + t.action] = 2.0 * err / n as f64;
        }
        let bp = self
            .online
            .backward_output(&trace, &Tensor::matrix(n, actions, dq)?, false)?;
        self.optimizer.step(&mut self.online, &bp.grads)?;
        self.updates += 1;
        if self.updates % self.config.target_sync == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.last_sync = self.updates;
    }
}

fn check_divergence(q: &[f64], step: u64) -> Result<()> {
    if let Some(v) = q.iter().find(|v| v.abs() > DIVERGENCE_LIMIT) {
        return Err(Error::TrainingFault {
            epoch: step as usize,
            detail: format!("Q-value {v:.3e} exceeds divergence limit"),
        });
    }
    Ok(())
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// One-hot vector of width `n`.
pub(crate) fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_keeps_the_latest_entries() {
        let mut ring = ReplayBuffer::new(5);
        for i in 0..13 {
            ring.push(i);
        }
        assert_eq!(ring.len(), 5);
        assert_eq!(ring.ordered(), vec![8, 9, 10, 11, 12]);
        let mut small = ReplayBuffer::new(5);
        small.push(1);
        assert_eq!(small.ordered(), vec![1]);
    }

    #[test]
    fn epsilon_anneals_linearly() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            steps: 100,
        };
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(50) - 0.525).abs() < 1e-12);
        assert_eq!(s.at(100), 0.05);
        assert_eq!(s.at(10_000), 0.05);
    }

    #[test]
    fn standardizer_matches_batch_statistics() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let mut s = RunningStandardizer::default();
        xs.iter().for_each(|&x| s.observe(x));
        let mean = 4.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((s.standardize(6.0) - (6.0 - mean) / var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn greedy_follows_the_largest_q() {
        let mut q = QNetwork::new(3, 6, DqnConfig::with_gamma(0.9), &mut Rng::new(1, "q")).unwrap();
        let last = q.online.layers_mut().last_mut().unwrap();
        last.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        last.bias.data_mut()[3] = 1.0;
        let mut rng = Rng::new(2, "act");
        for _ in 0..50 {
            assert_eq!(q.act(&[0.3, -1.0, 2.0], 0.0, &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn target_tracks_the_last_sync() {
        let mut cfg = DqnConfig::with_gamma(0.5);
        cfg.target_sync = 3;
        let mut q = QNetwork::new(2, 2, cfg, &mut Rng::new(1, "q")).unwrap();
        let t = Transition {
            state: vec![0.1, 0.2],
            action: 1,
            reward: 1.0,
            next_state: vec![0.3, 0.4],
        };
        let mut snapshot = q.online.clone();
        for step in 1..=7u64 {
            q.update(&[&t, &t]).unwrap();
            if step % 3 == 0 {
                snapshot = q.online.clone();
            }
            assert_eq!(q.target, snapshot);
        }
        assert_eq!(q.last_sync(), 6);
    }

    #[test]
    fn updates_fit_a_constant_reward() {
        let mut q = QNetwork::new(1, 2, DqnConfig::with_gamma(0.0), &mut Rng::new(4, "q")).unwrap();
        let t = Transition {
            state: vec![1.0],
            action: 0,
            reward: 2.0,
            next_state: vec![1.0],
        };
        for _ in 0..500 {
            q.update(&[&t]).unwrap();
        }
        assert!((q.q_values(&[1.0]).unwrap()[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn divergence_is_a_training_fault() {
        let mut q = QNetwork::new(1, 2, DqnConfig::with_gamma(0.9), &mut Rng::new(4, "q")).unwrap();
        q.online.layers_mut().last_mut().unwrap().bias.data_mut()[0] = 1e7;
        assert!(matches!(q.q_values(&[0.0]), Err(Error::TrainingFault { .. })));
    }
}
