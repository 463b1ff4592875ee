//! Centralized Double-DQN agent serving every UE with one shared network.

mod model;
mod nn;
mod replay;
mod reward;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use model::{decode_model, encode_model, ModelError, MODEL_MAGIC, MODEL_VERSION};
pub use nn::{argmax, Activations, Dense, Gradients, QNetwork};
pub use replay::ReplayBuffer;
pub use reward::{compute_reward, RewardConfig};

use crate::app::ModeId;
use crate::rng::{stream, RngStream, StreamId};

pub const STATE_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Index of the application mode the agent selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Action(pub u8);

impl Action {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn mode(self) -> ModeId {
        ModeId(self.0)
    }
}

impl From<ModeId> for Action {
    fn from(m: ModeId) -> Self {
        Action(m.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub ue: usize,
    pub state: StateVector,
    pub action: Action,
    pub next_state: StateVector,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub update_idx: u64,
    /// `None` until the replay buffer holds a full batch.
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub mean_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("agent failure at step {step}: {message}")]
pub struct AgentError {
    pub step: u64,
    pub message: String,
}

/// Decision-making contract the controller drives once per update period.
pub trait Agent {
    fn get_action(&mut self, states: &[StateVector], explore: bool) -> Result<Vec<Action>, AgentError>;
    fn update(&mut self, transitions: &[Transition]) -> Result<LossReport, AgentError>;
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AgentHyperparams {
    pub layer_sizes: Vec<usize>,
    pub discount: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_period: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        AgentHyperparams {
            layer_sizes: vec![STATE_DIM, 12, 6, 3],
            discount: 0.95,
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            batch_size: 32,
            replay_capacity: 10_000,
            target_sync_period: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
        }
    }
}

impl AgentHyperparams {
    /// Linear decay from `epsilon_start` to `epsilon_end` over `epsilon_decay_steps`.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let f = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// `r + discount * Q_target(s', argmax_a Q_online(s', a))`.
pub fn double_q_target(online: &QNetwork, target: &QNetwork, reward: f64, next_state: &[f64], discount: f64) -> f64 {
    let best = argmax(&online.forward(next_state));
    reward + discount * target.forward(next_state)[best]
}

/// One regression sample: push `Q(state)[action]` towards `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Regression<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Mean squared TD error over `batch` and its gradient with respect to the
/// network parameters (targets held fixed).
pub fn mse_loss_and_grad(net: &QNetwork, batch: &[Regression<'_>], grads: &mut Gradients) -> (f64, f64) {
    grads.zero();
    let n = batch.len() as f64;
    let mut acts = Activations::default();
    let mut d_out = vec![0.0; net.output_width()];
    let mut loss = 0.0;
    let mut q_sum = 0.0;
    for s in batch {
        net.forward_cached(s.state, &mut acts);
        let q = acts.output()[s.action];
        let err = q - s.target;
        loss += err * err;
        q_sum += q;
        d_out.fill(0.0);
        d_out[s.action] = 2.0 * err / n;
        net.backward(&acts, &d_out, grads);
    }
    (loss / n, q_sum / n)
}

pub struct DoubleDqnAgent {
    pub hp: AgentHyperparams,
    online: QNetwork,
    target: QNetwork,
    replay: ReplayBuffer,
    explore_rng: RngStream,
    replay_rng: RngStream,
    grads: Gradients,
    action_steps: u64,
    updates: u64,
    grad_steps: u64,
}

impl DoubleDqnAgent {
    pub fn new(hp: AgentHyperparams, seed: u64) -> Self {
        let online = QNetwork::init_uniform(&hp.layer_sizes, &mut stream(seed, StreamId::AgentInit));
        Self::with_network(hp, online, seed)
    }

    pub fn with_network(hp: AgentHyperparams, online: QNetwork, seed: u64) -> Self {
        DoubleDqnAgent {
            target: online.clone(),
            grads: online.zero_gradients(),
            replay: ReplayBuffer::new(hp.replay_capacity),
            explore_rng: stream(seed, StreamId::AgentExplore),
            replay_rng: stream(seed, StreamId::AgentReplay),
            online,
            hp,
            action_steps: 0,
            updates: 0,
            grad_steps: 0,
        }
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        self.hp.epsilon_at(self.action_steps)
    }

    pub fn action_steps(&self) -> u64 {
        self.action_steps
    }

    pub fn q_values(&self, state: &StateVector) -> Vec<f64> {
        self.online.forward(state.as_slice())
    }

    /// Epsilon-greedy when `explore`, greedy otherwise.
    pub fn select(&mut self, states: &[StateVector], explore: bool) -> Vec<Action> {
        let eps = if explore { self.epsilon() } else { 0.0 };
        let n_actions = self.online.output_width();
        let actions = states
            .iter()
            .map(|s| {
                if eps > 0.0 && self.explore_rng.random::<f64>() < eps {
                    Action(self.explore_rng.random_range(0..n_actions) as u8)
                } else {
                    Action(argmax(&self.online.forward(s.as_slice())) as u8)
                }
            })
            .collect();
        if explore {
            self.action_steps += 1;
        }
        actions
    }

    pub fn learn(&mut self, transitions: &[Transition]) -> LossReport {
        for t in transitions {
            self.replay.push(*t);
        }
        self.updates += 1;
        let mut report = LossReport {
            update_idx: self.updates,
            loss: None,
            epsilon: self.epsilon(),
            mean_q: None,
        };
        if self.replay.len() < self.hp.batch_size {
            return report;
        }
        let sample = self.replay.sample(self.hp.batch_size, &mut self.replay_rng);
        let batch: Vec<Regression<'_>> = sample
            .iter()
            .map(|t| Regression {
                state: t.state.as_slice(),
                action: t.action.index(),
                target: double_q_target(&self.online, &self.target, t.reward, t.next_state.as_slice(), self.hp.discount),
            })
            .collect();
        let (loss, mean_q) = mse_loss_and_grad(&self.online, &batch, &mut self.grads);
        self.online
            .sgd_step(&self.grads, self.hp.learning_rate, self.hp.weight_decay);
        self.grad_steps += 1;
        if self.hp.target_sync_period > 0 && self.grad_steps % self.hp.target_sync_period == 0 {
            self.target = self.online.clone();
        }
        report.loss = Some(loss);
        report.mean_q = Some(mean_q);
        report
    }

    pub fn save_model(&self) -> Vec<u8> {
        encode_model(&self.online)
    }

    /// Replaces both networks with `net`; the replay buffer is kept.
    pub fn load_network(&mut self, net: QNetwork) {
        self.target = net.clone();
        self.grads = net.zero_gradients();
        self.online = net;
    }
}

impl Agent for DoubleDqnAgent {
    fn get_action(&mut self, states: &[StateVector], explore: bool) -> Result<Vec<Action>, AgentError> {
        Ok(self.select(states, explore))
    }

    fn update(&mut self, transitions: &[Transition]) -> Result<LossReport, AgentError> {
        Ok(self.learn(transitions))
    }
}
