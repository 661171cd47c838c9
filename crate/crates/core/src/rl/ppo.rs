//! Proximal policy optimization with a clipped surrogate objective,
//! generalized advantage estimation, an entropy bonus and separate policy
//! and value networks.

use rand::Rng;

use super::adam::Adam;
use super::mlp::{Gradients, Mlp};
use super::{argmax, log_prob, softmax, Environment, RlError, HIDDEN_SIZES};
use crate::scheduler::{ActionSpace, EnvState, SchedulerPolicy};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Clip range of the surrogate ratio.
    pub clip: f64,
    /// Optimization epochs per rollout batch.
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Environment steps collected per rollout.
    pub rollout_steps: usize,
    pub episodes: usize,
    /// Abort after this many non-finite logit incidents.
    pub non_finite_limit: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            gamma: 1.0,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 8,
            minibatch_size: 64,
            entropy_coef: 0.001,
            value_coef: 0.5,
            rollout_steps: 128,
            episodes: 3000,
            non_finite_limit: 20,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0) {
            errs.push("ppo.learning_rate must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            errs.push("ppo.gamma must be in (0,1]".into());
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            errs.push("ppo.gae_lambda must be in [0,1]".into());
        }
        if !(self.clip > 0.0) {
            errs.push("ppo.clip must be positive".into());
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_steps == 0 {
            errs.push("ppo epochs, minibatch_size and rollout_steps must be >= 1".into());
        }
        errs
    }
}

/// A trained actor-critic pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoPolicy {
    pub policy_net: Mlp,
    pub value_net: Mlp,
}

impl PpoPolicy {
    pub fn logits(&self, state: &[f64]) -> Vec<f64> {
        self.policy_net.forward(state)
    }

    pub fn action_probabilities(&self, state: &[f64]) -> Vec<f64> {
        softmax(&self.logits(state))
    }

    pub fn greedy_action(&self, state: &[f64]) -> usize {
        argmax(&self.logits(state))
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.value_net.forward(state)[0]
    }
}

impl SchedulerPolicy for PpoPolicy {
    fn name(&self) -> &str {
        "ppo"
    }

    fn select_action(&mut self, state: &EnvState, _space: &ActionSpace) -> usize {
        self.greedy_action(&state.to_vector())
    }
}

#[derive(Debug)]
pub struct PpoTrainResult {
    pub policy: PpoPolicy,
    pub episode_rewards: Vec<f64>,
}

/// Mean clipped surrogate over a batch of ratios and advantages. With a
/// very large clip this reduces exactly to the plain policy-gradient
/// surrogate `mean(ratio * advantage)`.
pub fn clipped_surrogate_objective(ratios: &[f64], advantages: &[f64], clip: f64) -> f64 {
    assert_eq!(ratios.len(), advantages.len());
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - clip, 1.0 + clip) * a))
        .sum();
    sum / ratios.len() as f64
}

struct Rollout {
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    /// True termination: zero bootstrap beyond these steps.
    dones: Vec<bool>,
    /// Episode boundary of any kind (termination or time-limit cutoff);
    /// the advantage chain never crosses these.
    cuts: Vec<bool>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    /// Value of each step's actual successor state, so truncated episodes
    /// still bootstrap correctly.
    next_values: Vec<f64>,
}

impl Rollout {
    fn with_capacity(n: usize) -> Self {
        Self {
            states: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            cuts: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            next_values: Vec::with_capacity(n),
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.dones.clear();
        self.cuts.clear();
        self.log_probs.clear();
        self.values.clear();
        self.next_values.clear();
    }

    /// Generalized advantage estimates and value targets.
    fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut adv = vec![0.0; n];
        let mut next_adv = 0.0;
        for t in (0..n).rev() {
            let bootstrap = if self.dones[t] { 0.0 } else { self.next_values[t] };
            let delta = self.rewards[t] + gamma * bootstrap - self.values[t];
            let chain = if self.cuts[t] { 0.0 } else { next_adv };
            adv[t] = delta + gamma * lambda * chain;
            next_adv = adv[t];
        }
        let returns: Vec<f64> = adv.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        (adv, returns)
    }
}

/// Trains an actor-critic pair on `env`; deterministic for a fixed seed.
pub fn train_ppo<E: Environment>(
    env: &mut E,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<PpoTrainResult, RlError> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(RlError::InvalidConfig(issues));
    }
    let state_dim = env.state_dim();
    let actions = env.num_actions();

    let mut init_rng = seeds::rng_from(seed, "ppo-init");
    let mut policy_net = Mlp::new(
        &[state_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], actions],
        &mut init_rng,
    );
    let mut value_net = Mlp::new(
        &[state_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], 1],
        &mut init_rng,
    );
    let mut policy_opt = Adam::new(&policy_net, cfg.learning_rate);
    let mut value_opt = Adam::new(&value_net, cfg.learning_rate);
    let mut act_rng = seeds::rng_from(seed, "ppo-act");
    let mut shuffle_rng = seeds::rng_from(seed, "ppo-shuffle");

    let mut rollout = Rollout::with_capacity(cfg.rollout_steps);
    let mut episode_rewards = Vec::with_capacity(cfg.episodes);
    let mut non_finite = 0usize;

    let mut episode = 0usize;
    let mut state = env.reset(seeds::train_episode_seed(seed, episode));
    let mut episode_reward = 0.0;

    while episode < cfg.episodes {
        let mut logits = policy_net.forward(&state);
        sanitize_logits(&mut logits, &mut non_finite);
        if non_finite > cfg.non_finite_limit {
            return Err(RlError::NonFiniteLogits {
                occurrences: non_finite,
            });
        }
        let probs = softmax(&logits);
        let action = sample_categorical(&probs, act_rng.gen::<f64>());

        let transition = env.step(action);
        episode_reward += transition.reward;

        rollout.actions.push(action);
        rollout.rewards.push(transition.reward);
        rollout.dones.push(transition.done);
        rollout.cuts.push(transition.ends_episode());
        rollout.log_probs.push(log_prob(&logits, action));
        rollout.values.push(value_net.forward(&state)[0]);
        rollout
            .next_values
            .push(value_net.forward(&transition.state)[0]);
        rollout.states.push(state);

        let episode_over = transition.ends_episode();
        state = transition.state;

        if episode_over {
            episode_rewards.push(episode_reward);
            episode_reward = 0.0;
            episode += 1;
            if episode < cfg.episodes {
                state = env.reset(seeds::train_episode_seed(seed, episode));
            }
        }

        if rollout.len() >= cfg.rollout_steps {
            optimize(
                &mut policy_net,
                &mut value_net,
                &mut policy_opt,
                &mut value_opt,
                &rollout,
                cfg,
                &mut shuffle_rng,
                &mut non_finite,
            )?;
            rollout.clear();
        }
    }

    Ok(PpoTrainResult {
        policy: PpoPolicy {
            policy_net,
            value_net,
        },
        episode_rewards,
    })
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    policy_net: &mut Mlp,
    value_net: &mut Mlp,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    rollout: &Rollout,
    cfg: &PpoConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
    non_finite: &mut usize,
) -> Result<(), RlError> {
    let n = rollout.len();
    let (advantages, returns) = rollout.advantages(cfg.gamma, cfg.gae_lambda);

    // Normalized advantages stabilize updates at this batch scale.
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    let norm_adv: Vec<f64> = advantages.iter().map(|a| (a - mean) / std).collect();

    let mut indices: Vec<usize> = (0..n).collect();
    let mut policy_grads = Gradients::zeros_like(policy_net);
    let mut value_grads = Gradients::zeros_like(value_net);

    for _ in 0..cfg.epochs {
        // Fisher-Yates shuffle from the dedicated stream.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for chunk in indices.chunks(cfg.minibatch_size) {
            let m = chunk.len() as f64;
            policy_grads.reset();
            value_grads.reset();
            for &t in chunk {
                let s = &rollout.states[t];
                let a = rollout.actions[t];
                let adv = norm_adv[t];

                let trace = policy_net.forward_trace(s);
                let mut logits = trace.output().to_vec();
                sanitize_logits(&mut logits, non_finite);
                if *non_finite > cfg.non_finite_limit {
                    return Err(RlError::NonFiniteLogits {
                        occurrences: *non_finite,
                    });
                }
                let probs = softmax(&logits);
                let new_logp = log_prob(&logits, a);
                let ratio = (new_logp - rollout.log_probs[t]).exp();
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                // Gradient flows only while the unclipped branch is active.
                let flow = if ratio * adv <= clipped * adv { 1.0 } else { 0.0 };

                let entropy: f64 = -probs
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>();
                let mut upstream = vec![0.0; logits.len()];
                for (j, u) in upstream.iter_mut().enumerate() {
                    let indicator = if j == a { 1.0 } else { 0.0 };
                    let surrogate_grad = -flow * adv * ratio * (indicator - probs[j]);
                    let entropy_grad = if probs[j] > 0.0 {
                        cfg.entropy_coef * probs[j] * (probs[j].ln() + entropy)
                    } else {
                        0.0
                    };
                    *u = (surrogate_grad + entropy_grad) / m;
                }
                policy_net.backward_into(&trace, &upstream, &mut policy_grads);

                let vtrace = value_net.forward_trace(s);
                let v = vtrace.output()[0];
                let v_upstream = [2.0 * cfg.value_coef * (v - returns[t]) / m];
                value_net.backward_into(&vtrace, &v_upstream, &mut value_grads);
            }
            policy_opt.step(policy_net, &policy_grads);
            value_opt.step(value_net, &value_grads);
        }
    }
    Ok(())
}

fn sanitize_logits(logits: &mut [f64], non_finite: &mut usize) {
    if logits.iter().any(|l| !l.is_finite()) {
        *non_finite += 1;
        for l in logits.iter_mut() {
            if !l.is_finite() {
                *l = 0.0;
            }
        }
    }
}

fn sample_categorical(probs: &[f64], draw: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::toy::TwoArmedBandit;

    fn bandit_cfg() -> PpoConfig {
        PpoConfig {
            learning_rate: 3e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 32,
            entropy_coef: 0.01,
            value_coef: 0.5,
            rollout_steps: 128,
            episodes: 1200,
            non_finite_limit: 20,
        }
    }

    #[test]
    fn bandit_converges_to_the_better_arm() {
        let mut env = TwoArmedBandit::new(1.0, 0.0);
        let result = train_ppo(&mut env, &bandit_cfg(), 5).unwrap();
        let p = result.policy.action_probabilities(&TwoArmedBandit::state());
        assert!(
            p[0] > 0.95,
            "better arm probability {p:?} must exceed 0.95"
        );
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn huge_clip_reduces_to_plain_surrogate() {
        let ratios = [0.2, 0.9, 1.0, 1.4, 3.0];
        let advantages = [1.0, -0.5, 0.25, 2.0, -1.5];
        let unclipped: f64 = ratios
            .iter()
            .zip(&advantages)
            .map(|(r, a)| r * a)
            .sum::<f64>()
            / ratios.len() as f64;
        let wide = clipped_surrogate_objective(&ratios, &advantages, 1e12);
        assert_eq!(wide, unclipped);
        // A tight clip differs on this batch, so the equality is not vacuous.
        let tight = clipped_surrogate_objective(&ratios, &advantages, 0.1);
        assert!(tight < unclipped);
    }

    #[test]
    fn action_probabilities_sum_to_one_everywhere() {
        let mut env = TwoArmedBandit::new(0.3, 0.7);
        let cfg = PpoConfig {
            episodes: 50,
            ..bandit_cfg()
        };
        let result = train_ppo(&mut env, &cfg, 1).unwrap();
        for i in 0..50 {
            let state = [i as f64 / 25.0 - 1.0];
            let p = result.policy.action_probabilities(&state);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let run = || {
            let mut env = TwoArmedBandit::new(1.0, 0.0);
            let cfg = PpoConfig {
                episodes: 200,
                ..bandit_cfg()
            };
            train_ppo(&mut env, &cfg, 9).unwrap().episode_rewards
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gae_matches_hand_computation_on_short_rollout() {
        // Two-step rollout, no terminal: hand-roll the recursion.
        let rollout = Rollout {
            states: vec![vec![0.0], vec![0.0]],
            actions: vec![0, 0],
            rewards: vec![1.0, 2.0],
            dones: vec![false, false],
            cuts: vec![false, false],
            log_probs: vec![0.0, 0.0],
            values: vec![0.5, 1.5],
            next_values: vec![1.5, 3.0],
        };
        let gamma = 0.9;
        let lambda = 0.8;
        let (adv, ret) = rollout.advantages(gamma, lambda);
        let delta1 = 2.0 + gamma * 3.0 - 1.5;
        let delta0 = 1.0 + gamma * 1.5 - 0.5;
        assert!((adv[1] - delta1).abs() < 1e-12);
        assert!((adv[0] - (delta0 + gamma * lambda * delta1)).abs() < 1e-12);
        assert!((ret[0] - (adv[0] + 0.5)).abs() < 1e-12);
        assert!((ret[1] - (adv[1] + 1.5)).abs() < 1e-12);

        // A terminal at step 0 cuts both bootstrap and the GAE chain.
        let rollout = Rollout {
            dones: vec![true, false],
            cuts: vec![true, false],
            ..rollout
        };
        let (adv, _) = rollout.advantages(gamma, lambda);
        assert!((adv[0] - (1.0 - 0.5)).abs() < 1e-12);

        // A truncation cuts the chain but keeps the bootstrap term.
        let rollout = Rollout {
            dones: vec![false, false],
            cuts: vec![true, false],
            ..rollout
        };
        let (adv, _) = rollout.advantages(gamma, lambda);
        assert!((adv[0] - delta0).abs() < 1e-12);
    }
}
