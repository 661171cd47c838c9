//! From-scratch learning stack: MLP, Adam, and the DQN / PPO schedulers
//! that operate over the enumerated joint action set.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod mlp;
pub mod ppo;
pub mod toy;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, PolicyCheckpoint};
pub use dqn::{train_dqn, DqnConfig, DqnPolicy, DqnTrainResult, ReplayBuffer};
pub use mlp::{ForwardTrace, Gradients, Mlp};
pub use ppo::{train_ppo, PpoConfig, PpoPolicy, PpoTrainResult};

use crate::scheduler::SchedulerEnv;

/// Hidden layer widths shared by every policy and value network.
pub const HIDDEN_SIZES: [usize; 2] = [64, 64];

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("dimension mismatch: {context} expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("training diverged: loss {loss} at step {step} exceeds guard {guard}")]
    Diverged { loss: f64, step: usize, guard: f64 },
    #[error("policy logits went non-finite {occurrences} times; aborting")]
    NonFiniteLogits { occurrences: usize },
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
}

/// One environment step as seen by a trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub reward: f64,
    /// True termination: the terminal state has no future value.
    pub done: bool,
    /// Time-limit cutoff: the episode ends but values still bootstrap.
    pub truncated: bool,
}

impl Transition {
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

/// Minimal episodic environment interface for the trainers.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Transition;
}

impl Environment for SchedulerEnv {
    fn state_dim(&self) -> usize {
        crate::scheduler::EnvState::dimension(self.config().agents)
    }

    fn num_actions(&self) -> usize {
        self.action_space().len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        SchedulerEnv::reset(self, seed)
            .expect("validated config")
            .to_vector()
    }

    fn step(&mut self, action: usize) -> Transition {
        let out = SchedulerEnv::step(self, action).expect("trainer actions are in range");
        Transition {
            state: out.state.to_vector(),
            reward: out.reward,
            done: out.done,
            truncated: false,
        }
    }
}

/// Greedy argmax with ties resolved to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-probability of `action` under the categorical given by `logits`.
pub(crate) fn log_prob(logits: &[f64], action: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits[action] - log_sum
}
