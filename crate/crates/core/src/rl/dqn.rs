//! Deep Q-learning over the enumerated action set: epsilon-greedy
//! exploration with linear decay, a uniform replay buffer, and a
//! periodically synced target network.

use rand::Rng;

use super::adam::Adam;
use super::mlp::{Gradients, Mlp};
use super::{argmax, Environment, RlError, Transition, HIDDEN_SIZES};
use crate::scheduler::{ActionSpace, EnvState, SchedulerPolicy};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub target_sync_interval: usize,
    /// Gradient updates happen every this many environment steps.
    pub update_interval: usize,
    pub episodes: usize,
    /// Abort with a diagnostic when the batch loss exceeds this.
    pub loss_guard: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            gamma: 0.95,
            buffer_capacity: 20_000,
            batch_size: 128,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 8_000,
            target_sync_interval: 200,
            update_interval: 1,
            episodes: 3000,
            loss_guard: 1e6,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0) {
            errs.push("dqn.learning_rate must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            errs.push("dqn.gamma must be in (0,1]".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            errs.push("dqn.buffer_capacity must be >= dqn.batch_size >= 1".into());
        }
        if self.epsilon_decay_steps == 0 || self.target_sync_interval == 0 {
            errs.push("dqn epsilon_decay_steps and target_sync_interval must be >= 1".into());
        }
        if self.update_interval == 0 {
            errs.push("dqn.update_interval must be >= 1".into());
        }
        errs
    }

    fn epsilon(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Sample {
    state: Vec<f64>,
    action: usize,
    reward: f64,
    next_state: Vec<f64>,
    done: bool,
}

/// Fixed-capacity ring of transitions with uniform batch sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    samples: Vec<Sample>,
    capacity: usize,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: Vec::with_capacity(capacity.min(4096)),
            capacity,
            write: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn push(&mut self, s: Sample) {
        if self.samples.len() < self.capacity {
            self.samples.push(s);
        } else {
            self.samples[self.write] = s;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    /// Distinct indices, uniformly without replacement within the batch.
    fn sample_indices(&self, rng: &mut rand_chacha::ChaCha8Rng, batch: usize) -> Vec<usize> {
        let n = self.samples.len();
        let batch = batch.min(n);
        // Floyd's algorithm keeps this O(batch) even for large buffers.
        let mut chosen: Vec<usize> = Vec::with_capacity(batch);
        for j in n - batch..n {
            let t = rng.gen_range(0..=j);
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        chosen
    }
}

/// A trained Q-network acting greedily.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnPolicy {
    pub net: Mlp,
}

impl DqnPolicy {
    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.net.forward(state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> usize {
        argmax(&self.net.forward(state))
    }
}

impl SchedulerPolicy for DqnPolicy {
    fn name(&self) -> &str {
        "dqn"
    }

    fn select_action(&mut self, state: &EnvState, _space: &ActionSpace) -> usize {
        self.greedy_action(&state.to_vector())
    }
}

#[derive(Debug)]
pub struct DqnTrainResult {
    pub policy: DqnPolicy,
    pub episode_rewards: Vec<f64>,
}

/// Trains a Q-network on `env`; fully deterministic for a fixed seed.
pub fn train_dqn<E: Environment>(
    env: &mut E,
    cfg: &DqnConfig,
    seed: u64,
) -> Result<DqnTrainResult, RlError> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(RlError::InvalidConfig(issues));
    }
    let state_dim = env.state_dim();
    let actions = env.num_actions();
    let sizes = [state_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], actions];

    let mut init_rng = seeds::rng_from(seed, "dqn-init");
    let mut net = Mlp::new(&sizes, &mut init_rng);
    let mut target = net.clone();
    let mut opt = Adam::new(&net, cfg.learning_rate);
    let mut explore_rng = seeds::rng_from(seed, "dqn-explore");
    let mut sample_rng = seeds::rng_from(seed, "dqn-sample");
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut grads = Gradients::zeros_like(&net);

    let mut episode_rewards = Vec::with_capacity(cfg.episodes);
    let mut global_step = 0usize;

    for episode in 0..cfg.episodes {
        let mut state = env.reset(seeds::train_episode_seed(seed, episode));
        let mut episode_reward = 0.0;
        loop {
            let eps = cfg.epsilon(global_step);
            let action = if explore_rng.gen::<f64>() < eps {
                explore_rng.gen_range(0..actions)
            } else {
                argmax(&net.forward(&state))
            };

            let Transition {
                state: next_state,
                reward,
                done,
                truncated,
            } = env.step(action);
            episode_reward += reward;
            buffer.push(Sample {
                state: std::mem::take(&mut state),
                action,
                reward,
                next_state: next_state.clone(),
                done,
            });
            state = next_state;
            global_step += 1;

            if buffer.len() >= cfg.batch_size && global_step % cfg.update_interval == 0 {
                let loss = update(
                    &mut net,
                    &target,
                    &mut opt,
                    &buffer,
                    &mut sample_rng,
                    &mut grads,
                    cfg,
                )?;
                if !loss.is_finite() || loss > cfg.loss_guard {
                    return Err(RlError::Diverged {
                        loss,
                        step: global_step,
                        guard: cfg.loss_guard,
                    });
                }
            }
            if global_step % cfg.target_sync_interval == 0 {
                target = net.clone();
            }
            if done || truncated {
                break;
            }
        }
        episode_rewards.push(episode_reward);
    }

    Ok(DqnTrainResult {
        policy: DqnPolicy { net },
        episode_rewards,
    })
}

fn update(
    net: &mut Mlp,
    target: &Mlp,
    opt: &mut Adam,
    buffer: &ReplayBuffer,
    rng: &mut rand_chacha::ChaCha8Rng,
    grads: &mut Gradients,
    cfg: &DqnConfig,
) -> Result<f64, RlError> {
    let indices = buffer.sample_indices(rng, cfg.batch_size);
    let batch = indices.len() as f64;
    grads.reset();
    let mut loss = 0.0;
    for idx in indices {
        let s = &buffer.samples[idx];
        let trace = net.forward_trace(&s.state);
        let q = trace.output()[s.action];
        let bootstrap = if s.done {
            0.0
        } else {
            let next_q = target.forward(&s.next_state);
            next_q[argmax(&next_q)]
        };
        let y = s.reward + cfg.gamma * bootstrap;
        let err = q - y;
        loss += err * err / batch;
        let mut upstream = vec![0.0; net.output_dim()];
        upstream[s.action] = 2.0 * err / batch;
        net.backward_into(&trace, &upstream, grads);
    }
    opt.step(net, grads);
    Ok(loss)
}
