//! Tiny environments with closed-form optima, used to certify the
//! trainers before they touch the simulator.

use super::{Environment, Transition};

/// Deterministic two-state chain.
///
/// Layout (action 0 = hold, action 1 = advance):
///
/// - state 0: action 0 stays in 0 with reward 0.1; action 1 moves to 1
///   with reward 0.
/// - state 1: action 0 falls back to 0 with reward 0; action 1 stays in 1
///   with reward 1.0.
///
/// The optimum is to advance from 0 and stay in 1. Episodes cut off after
/// `horizon` steps as a time limit (truncation, not termination), so the
/// discounted infinite-horizon optimum from value iteration applies.
pub struct ChainMdp {
    state: usize,
    steps: usize,
    pub horizon: usize,
}

pub const CHAIN_REWARDS: [[f64; 2]; 2] = [[0.1, 0.0], [0.0, 1.0]];
pub const CHAIN_NEXT: [[usize; 2]; 2] = [[0, 1], [0, 1]];

impl ChainMdp {
    pub fn new(horizon: usize) -> Self {
        Self {
            state: 0,
            steps: 0,
            horizon,
        }
    }

    /// One-hot encoding of a chain state.
    pub fn encode(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; 2];
        v[state] = 1.0;
        v
    }
}

impl Environment for ChainMdp {
    fn state_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        Self::encode(self.state)
    }

    fn step(&mut self, action: usize) -> Transition {
        let reward = CHAIN_REWARDS[self.state][action];
        self.state = CHAIN_NEXT[self.state][action];
        self.steps += 1;
        Transition {
            state: Self::encode(self.state),
            reward,
            done: false,
            truncated: self.steps >= self.horizon,
        }
    }
}

/// Exact Q* for the chain by value iteration on the known tables.
pub fn chain_q_star(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    loop {
        let mut next = [[0.0f64; 2]; 2];
        let mut delta = 0.0f64;
        for s in 0..2 {
            for a in 0..2 {
                let s2 = CHAIN_NEXT[s][a];
                let v2 = q[s2][0].max(q[s2][1]);
                next[s][a] = CHAIN_REWARDS[s][a] + gamma * v2;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < 1e-13 {
            return q;
        }
    }
}

/// One-state bandit with two deterministic arms; episodes last one pull.
pub struct TwoArmedBandit {
    rewards: [f64; 2],
}

impl TwoArmedBandit {
    pub fn new(arm0: f64, arm1: f64) -> Self {
        Self {
            rewards: [arm0, arm1],
        }
    }

    pub fn state() -> Vec<f64> {
        vec![1.0]
    }

    pub fn better_arm(&self) -> usize {
        if self.rewards[0] >= self.rewards[1] {
            0
        } else {
            1
        }
    }
}

impl Environment for TwoArmedBandit {
    fn state_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        Self::state()
    }

    fn step(&mut self, action: usize) -> Transition {
        Transition {
            state: Self::state(),
            reward: self.rewards[action],
            done: true,
            truncated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_q_star_closed_form_at_gamma_09() {
        // By hand: V(s1) = 10, Q(s0,a1) = 9, Q(s0,a0) = 0.1 + 0.9 * 9 = 8.2,
        // Q(s1,a0) = 8.1, Q(s1,a1) = 10.
        let q = chain_q_star(0.9);
        assert!((q[0][0] - 8.2).abs() < 1e-9);
        assert!((q[0][1] - 9.0).abs() < 1e-9);
        assert!((q[1][0] - 8.1).abs() < 1e-9);
        assert!((q[1][1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn chain_truncates_without_terminating() {
        let mut env = ChainMdp::new(3);
        env.reset(0);
        let mut last = None;
        for _ in 0..3 {
            last = Some(env.step(1));
        }
        let t = last.unwrap();
        assert!(t.truncated);
        assert!(!t.done);
    }

    #[test]
    fn bandit_pays_the_chosen_arm_and_ends() {
        let mut env = TwoArmedBandit::new(1.0, 0.0);
        env.reset(0);
        let t = env.step(0);
        assert_eq!(t.reward, 1.0);
        assert!(t.done);
        assert_eq!(env.better_arm(), 0);
    }
}
