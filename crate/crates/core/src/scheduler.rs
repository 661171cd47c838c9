//! The round-based scheduling decision process and its baseline policies.
//!
//! One episode: every agent gets a scene summary in round 0, then the
//! scheduler issues one joint allocation (k patches per agent) per round.
//! Agents fetch their top-k most similar uncached patches, every message
//! is a context block charged against the round's channel budget, and the
//! episode ends when all tasks complete or the round limit is hit.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::channel::{ChannelError, ChannelModel, RoundBudget};
use crate::model::{self, AgentView, ModelError, Scene, SceneParams, Task};
use crate::protocol::{ContextBlock, ProtocolError, Repository};
use crate::seeds;
use crate::store::{LocalCache, PatchIndex, StoreError};

/// Source id used by the infrastructure node in context blocks.
pub const INFRA_SOURCE: u32 = u32::MAX;
/// Default upper bound on the enumerated joint action count.
pub const DEFAULT_ACTION_CAP: usize = 1024;

/// Process-wide invariant violation counter (budget overruns, duplicate
/// deliveries). Stays at zero unless the simulator is broken; surfaced so
/// test suites can assert on it explicitly.
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

pub fn global_violation_count() -> u64 {
    VIOLATIONS.load(Ordering::Relaxed)
}

fn record_violation(what: &str) {
    VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    debug_assert!(false, "scheduler invariant violated: {what}");
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("joint action space has {count} entries, cap is {cap}; lower k_max or agents")]
    ActionSpaceTooLarge { count: usize, cap: usize },
    #[error("action index {index} outside enumerated set of {len}")]
    ActionOutOfRange { index: usize, len: usize },
    #[error("episode already finished; reset before stepping")]
    EpisodeFinished,
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Joint per-agent patch counts for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation(pub Vec<u8>);

impl Allocation {
    pub fn zeros(agents: usize) -> Self {
        Allocation(vec![0; agents])
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// All (k_max+1)^agents joint allocations in lexicographic order.
pub fn enumerate_actions(
    agents: usize,
    k_max: u8,
    cap: usize,
) -> Result<Vec<Allocation>, EnvError> {
    let base = k_max as usize + 1;
    let count = base
        .checked_pow(agents as u32)
        .filter(|&c| c <= cap)
        .ok_or(EnvError::ActionSpaceTooLarge {
            count: base.saturating_pow(agents as u32),
            cap,
        })?;
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0u8; agents];
    loop {
        out.push(Allocation(current.clone()));
        // Lexicographic increment, last coordinate fastest.
        let mut pos = agents;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if current[pos] < k_max {
                current[pos] += 1;
                for c in &mut current[pos + 1..] {
                    *c = 0;
                }
                break;
            }
        }
    }
}

/// Index arithmetic over the lexicographic action enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub agents: usize,
    pub k_max: u8,
}

impl ActionSpace {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        (self.k_max as usize + 1).pow(self.agents as u32)
    }

    pub fn allocation(&self, mut index: usize) -> Allocation {
        let base = self.k_max as usize + 1;
        let mut k = vec![0u8; self.agents];
        for slot in k.iter_mut().rev() {
            *slot = (index % base) as u8;
            index /= base;
        }
        Allocation(k)
    }

    pub fn index_of(&self, alloc: &Allocation) -> usize {
        let base = self.k_max as usize + 1;
        alloc
            .0
            .iter()
            .fold(0usize, |acc, &k| acc * base + k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.1,
            w3: 0.02,
        }
    }
}

/// Round reward: task completions minus bandwidth use minus a latency
/// penalty while the episode is still ongoing.
pub fn reward(
    tasks_completed: u32,
    bits_spent: u64,
    budget_bits: u64,
    episode_ongoing: bool,
    w: &RewardWeights,
) -> f64 {
    debug_assert!(bits_spent <= budget_bits || budget_bits == 0);
    let utilization = if budget_bits == 0 {
        0.0
    } else {
        bits_spent as f64 / budget_bits as f64
    };
    w.w1 * f64::from(tasks_completed) - w.w2 * utilization
        - if episode_ongoing { w.w3 } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub agents: usize,
    pub k_max: u8,
    pub max_rounds: u32,
    /// How many top candidate scores feed the similarity state feature.
    pub top_m: usize,
    pub reward: RewardWeights,
    pub scene: SceneParams,
    pub channel: ChannelModel,
    pub action_cap: usize,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let mut errs = Vec::new();
        if self.agents < 1 {
            errs.push("agents must be >= 1".into());
        }
        if self.max_rounds < 1 {
            errs.push("max_rounds must be >= 1".into());
        }
        if self.top_m < 1 {
            errs.push("top_m must be >= 1".into());
        }
        if let Err(ModelError::InvalidParams(scene_errs)) = self.scene.validate() {
            errs.extend(scene_errs.into_iter().map(|e| format!("scene: {e}")));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EnvError::InvalidConfig(errs))
        }
    }
}

/// Per-agent feature block of the environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub uncertainty: f64,
    /// Mean similarity of the agent's best remaining candidates.
    pub top_similarity: f64,
    pub received_fraction: f64,
    pub task_done: bool,
}

/// Fixed-width state: 4 features per agent plus 2 global features.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agents: Vec<AgentState>,
    /// Upcoming round budget normalized by the channel's peak budget.
    pub budget_norm: f64,
    /// Current round index normalized by the round limit.
    pub round_norm: f64,
}

impl EnvState {
    pub fn dimension(agents: usize) -> usize {
        4 * agents + 2
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dimension(self.agents.len()));
        for a in &self.agents {
            v.push(a.uncertainty);
            v.push(a.top_similarity);
            v.push(a.received_fraction);
            v.push(if a.task_done { 1.0 } else { 0.0 });
        }
        v.push(self.budget_norm);
        v.push(self.round_norm);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub tasks_completed_this_round: u32,
    pub bits_spent: u64,
    pub budget_bits: u64,
    /// Patch ids delivered to each agent this round.
    pub delivered: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub state: EnvState,
    pub done: bool,
    pub info: StepInfo,
}

/// Per-round record kept for metrics export.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: u32,
    pub reward: f64,
    pub cumulative_tasks_completed: u32,
    pub bits_spent: u64,
    pub budget_bits: u64,
    pub allocation: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub seed: u64,
    pub summary_bits_spent: u64,
    pub rounds: Vec<RoundLog>,
    pub tasks_completed: u32,
    pub all_done: bool,
}

impl EpisodeLog {
    /// Rounds consumed; the round limit caps incomplete episodes because
    /// stepping stops there.
    pub fn rounds_used(&self) -> u32 {
        self.rounds.len() as u32
    }

    pub fn total_reward(&self) -> f64 {
        self.rounds.iter().map(|r| r.reward).sum()
    }
}

struct AgentRuntime {
    scene: Scene,
    task: Task,
    index: PatchIndex,
    cache: LocalCache,
    view: AgentView,
}

pub struct SchedulerEnv {
    cfg: EnvConfig,
    actions: Vec<Allocation>,
    space: ActionSpace,
    reference_bits: u64,
    repo: Repository,
    versions: HashMap<(u32, String), u32>,
    agents: Vec<AgentRuntime>,
    round_index: u32,
    next_budget: Option<RoundBudget>,
    done: bool,
    history: Vec<EpisodeLog>,
    violations: u64,
}

impl SchedulerEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let actions = enumerate_actions(cfg.agents, cfg.k_max, cfg.action_cap)?;
        let space = ActionSpace {
            agents: cfg.agents,
            k_max: cfg.k_max,
        };
        let reference_bits = cfg.channel.reference_bits();
        Ok(Self {
            cfg,
            actions,
            space,
            reference_bits,
            repo: Repository::new(),
            versions: HashMap::new(),
            agents: Vec::new(),
            round_index: 0,
            next_budget: None,
            done: true,
            history: Vec::new(),
            violations: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn action_space(&self) -> ActionSpace {
        self.space
    }

    pub fn actions(&self) -> &[Allocation] {
        &self.actions
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Drains the accumulated per-episode logs.
    pub fn take_history(&mut self) -> Vec<EpisodeLog> {
        std::mem::take(&mut self.history)
    }

    /// Starts a new episode: fresh scenes per agent, summaries charged to
    /// round 0's budget in agent order.
    pub fn reset(&mut self, seed: u64) -> Result<EnvState, EnvError> {
        self.repo.clear();
        self.versions.clear();
        self.round_index = 0;
        self.done = false;

        self.agents.clear();
        for i in 0..self.cfg.agents {
            let scene_seed = seeds::derive_seed_indexed(seed, "scene", i as u64);
            let (scene, task) = model::generate_scene(scene_seed, &self.cfg.scene)?;
            let index = PatchIndex::from_scene(&scene);
            let view = AgentView::new(i as u32, scene.id);
            self.agents.push(AgentRuntime {
                scene,
                task,
                index,
                cache: LocalCache::new(i as u32),
                view,
            });
        }

        // Round 0 carries the low-resolution summaries, charged like any
        // other traffic, in agent-id order until the budget runs out.
        let mut budget0 = self.cfg.channel.round_budget(0);
        let mut summary_spent = 0u64;
        for i in 0..self.cfg.agents {
            let scene_id = self.agents[i].scene.id;
            let payload_len = self.agents[i].scene.summary_bits.div_ceil(8) as usize;
            let block = ContextBlock {
                source_id: INFRA_SOURCE,
                timestamp_ms: 0,
                priority: 1,
                tags: vec![
                    "summary".to_owned(),
                    format!("agent:{i}"),
                    format!("scene:{scene_id}"),
                ],
                payload: vec![0u8; payload_len],
                version: self.next_version(INFRA_SOURCE, "summary"),
            };
            let bits = block.encoded_bits();
            if budget0.try_spend(bits) {
                summary_spent += bits;
                self.publish(block);
            }
        }

        self.next_budget = Some(self.cfg.channel.round_budget(1));
        self.history.push(EpisodeLog {
            seed,
            summary_bits_spent: summary_spent,
            ..EpisodeLog::default()
        });
        Ok(self.state())
    }

    /// Executes one scheduling round.
    pub fn step(&mut self, action_index: usize) -> Result<StepOutcome, EnvError> {
        if self.agents.is_empty() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action_index >= self.actions.len() {
            return Err(EnvError::ActionOutOfRange {
                index: action_index,
                len: self.actions.len(),
            });
        }
        let alloc = self.actions[action_index].clone();
        let round = self.round_index + 1;
        let mut budget = self
            .next_budget
            .take()
            .unwrap_or_else(|| self.cfg.channel.round_budget(round));
        debug_assert_eq!(budget.round_index, round);
        let timestamp_ms = (round as f64 * self.cfg.channel.round_duration_s * 1000.0) as u64;

        // Serve the most uncertain agents first, ties by agent id.
        let mut order: Vec<usize> = (0..self.cfg.agents).collect();
        order.sort_by(|&a, &b| {
            self.agents[b]
                .view
                .uncertainty
                .partial_cmp(&self.agents[a].view.uncertainty)
                .expect("uncertainty is finite")
                .then(a.cmp(&b))
        });

        let mut delivered: Vec<Vec<u64>> = vec![Vec::new(); self.cfg.agents];
        for &i in &order {
            let k = alloc.0[i];
            if k == 0 {
                continue;
            }

            // The agent's retrieval request rides the same channel; if it
            // does not fit, the agent is not served this round.
            let mut payload = Vec::with_capacity(8);
            payload.extend_from_slice(&u32::from(k).to_le_bytes());
            payload.extend_from_slice(&round.to_le_bytes());
            let request_version = self.next_version(i as u32, "request");
            let request = ContextBlock {
                source_id: i as u32,
                timestamp_ms,
                priority: 2,
                tags: vec!["request".to_owned(), format!("agent:{i}")],
                payload,
                version: request_version,
            };
            if !budget.try_spend(request.encoded_bits()) {
                continue;
            }
            self.publish(request);

            let candidates: Vec<(u64, u64)> = {
                let agent = &self.agents[i];
                agent
                    .index
                    .top_k(&agent.task.query_embedding, k as usize, agent.cache.held())?
                    .into_iter()
                    .map(|(patch_id, _score)| {
                        let size_bits = agent
                            .scene
                            .patch(patch_id)
                            .expect("top_k only returns scene patches")
                            .size_bits;
                        (patch_id, size_bits)
                    })
                    .collect()
            };
            for (patch_id, size_bits) in candidates {
                let version = self.next_version(INFRA_SOURCE, "patch");
                let block = ContextBlock {
                    source_id: INFRA_SOURCE,
                    timestamp_ms,
                    priority: 1,
                    tags: vec![
                        "patch".to_owned(),
                        format!("agent:{i}"),
                        format!("p:{patch_id}"),
                    ],
                    payload: vec![0u8; size_bits.div_ceil(8) as usize],
                    version,
                };
                if !budget.try_spend(block.encoded_bits()) {
                    continue;
                }
                self.publish(block);
                let agent = &mut self.agents[i];
                if !agent.cache.insert(patch_id) {
                    record_violation("patch delivered twice to one agent");
                    self.violations += 1;
                }
                agent.view.record_receipt(patch_id);
                delivered[i].push(patch_id);
            }
        }

        // Refresh coverage and completion after all deliveries.
        let mut newly_completed = 0u32;
        for agent in &mut self.agents {
            agent.view.refresh(&agent.scene)?;
            if !agent.task.completed && model::task_complete(&agent.view, &agent.task)? {
                agent.task.completed = true;
                agent.task.completion_round = Some(round);
                newly_completed += 1;
            }
        }

        if budget.spent_bits > budget.budget_bits {
            record_violation("round spend exceeded budget");
            self.violations += 1;
        }

        self.round_index = round;
        let all_done = self.agents.iter().all(|a| a.task.completed);
        self.done = all_done || self.round_index >= self.cfg.max_rounds;
        let r = reward(
            newly_completed,
            budget.spent_bits,
            budget.budget_bits,
            !self.done,
            &self.cfg.reward,
        );
        self.next_budget = Some(self.cfg.channel.round_budget(round + 1));

        let cumulative = self.agents.iter().filter(|a| a.task.completed).count() as u32;
        let log = self.history.last_mut().expect("reset pushes a log");
        log.rounds.push(RoundLog {
            round,
            reward: r,
            cumulative_tasks_completed: cumulative,
            bits_spent: budget.spent_bits,
            budget_bits: budget.budget_bits,
            allocation: alloc.0.clone(),
        });
        log.tasks_completed = cumulative;
        log.all_done = all_done;

        let info = StepInfo {
            tasks_completed_this_round: newly_completed,
            bits_spent: budget.spent_bits,
            budget_bits: budget.budget_bits,
            delivered,
        };
        Ok(StepOutcome {
            reward: r,
            state: self.state(),
            done: self.done,
            info,
        })
    }

    /// Current state snapshot; all components lie in [-1, 1].
    pub fn state(&self) -> EnvState {
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let candidates = a
                    .index
                    .top_k(&a.task.query_embedding, self.cfg.top_m, a.cache.held())
                    .expect("query dimension matches index");
                let top_similarity = if candidates.is_empty() {
                    0.0
                } else {
                    candidates.iter().map(|(_, s)| s).sum::<f64>() / candidates.len() as f64
                };
                AgentState {
                    uncertainty: a.view.uncertainty,
                    top_similarity: top_similarity.clamp(-1.0, 1.0),
                    received_fraction: a.cache.len() as f64 / a.scene.patches.len() as f64,
                    task_done: a.task.completed,
                }
            })
            .collect();
        let budget_bits = self.next_budget.as_ref().map_or(0, |b| b.budget_bits);
        let budget_norm = if self.reference_bits == 0 {
            0.0
        } else {
            (budget_bits as f64 / self.reference_bits as f64).clamp(0.0, 1.0)
        };
        EnvState {
            agents,
            budget_norm,
            round_norm: f64::from(self.round_index) / f64::from(self.cfg.max_rounds),
        }
    }

    /// Completion round of each agent's task, when completed.
    pub fn completion_rounds(&self) -> Vec<Option<u32>> {
        self.agents
            .iter()
            .map(|a| a.task.completion_round)
            .collect()
    }

    fn next_version(&mut self, source: u32, key_tag: &str) -> u32 {
        let counter = self
            .versions
            .entry((source, key_tag.to_owned()))
            .or_insert(0);
        *counter += 1;
        *counter
    }

    fn publish(&mut self, block: ContextBlock) {
        let accepted = self
            .repo
            .publish(block)
            .expect("simulator blocks always validate");
        debug_assert!(accepted, "env versions increase strictly");
    }
}

// --- policies --------------------------------------------------------------

/// A scheduler: maps the environment state to a joint allocation index.
pub trait SchedulerPolicy {
    fn name(&self) -> &str;
    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize;
}

/// Always allocates zero patches; the performance floor.
pub struct NoRetrievalPolicy;

impl SchedulerPolicy for NoRetrievalPolicy {
    fn name(&self) -> &str {
        "no_retrieval"
    }

    fn select_action(&mut self, _state: &EnvState, _space: &ActionSpace) -> usize {
        0
    }
}

/// Allocates a constant k to every agent, regardless of state.
pub struct FixedKPolicy {
    pub c: u8,
}

impl SchedulerPolicy for FixedKPolicy {
    fn name(&self) -> &str {
        "fixed_k"
    }

    fn select_action(&mut self, _state: &EnvState, space: &ActionSpace) -> usize {
        let c = self.c.min(space.k_max);
        space.index_of(&Allocation(vec![c; space.agents]))
    }
}

/// Draws each agent's k uniformly from [0, k_max] out of a seeded stream.
pub struct RandomKPolicy {
    rng: rand_chacha::ChaCha8Rng,
}

impl RandomKPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeds::rng_from(seed, "random-k-policy"),
        }
    }
}

impl SchedulerPolicy for RandomKPolicy {
    fn name(&self) -> &str {
        "random_k"
    }

    fn select_action(&mut self, _state: &EnvState, space: &ActionSpace) -> usize {
        use rand::Rng;
        let k: Vec<u8> = (0..space.agents)
            .map(|_| self.rng.gen_range(0..=space.k_max))
            .collect();
        space.index_of(&Allocation(k))
    }
}

/// Allocates proportionally to each agent's uncertainty; completed agents
/// get nothing.
pub struct HeuristicUncertaintyPolicy;

impl SchedulerPolicy for HeuristicUncertaintyPolicy {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize {
        let k: Vec<u8> = state
            .agents
            .iter()
            .map(|a| {
                if a.task_done {
                    0
                } else {
                    (f64::from(space.k_max) * a.uncertainty).round() as u8
                }
            })
            .collect();
        space.index_of(&Allocation(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelModel;

    fn default_cfg() -> EnvConfig {
        EnvConfig {
            agents: 3,
            k_max: 4,
            max_rounds: 15,
            top_m: 3,
            reward: RewardWeights::default(),
            scene: SceneParams::default(),
            channel: ChannelModel::new(1_000_000.0, 15.0, 0.1, None).unwrap(),
            action_cap: DEFAULT_ACTION_CAP,
        }
    }

    fn state_vec_bounds_ok(v: &[f64]) -> bool {
        v.iter().all(|x| (-1.0..=1.0).contains(x))
    }

    #[test]
    fn enumerate_small_spaces() {
        let a = enumerate_actions(1, 2, 1024).unwrap();
        assert_eq!(
            a,
            vec![
                Allocation(vec![0]),
                Allocation(vec![1]),
                Allocation(vec![2])
            ]
        );
        let a = enumerate_actions(3, 4, 1024).unwrap();
        assert_eq!(a.len(), 125);
        assert_eq!(a.first().unwrap().as_slice(), &[0, 0, 0]);
        assert_eq!(a.last().unwrap().as_slice(), &[4, 4, 4]);
        // Lexicographic: second entry bumps the last coordinate.
        assert_eq!(a[1].as_slice(), &[0, 0, 1]);
    }

    #[test]
    fn enumerate_respects_cap() {
        match enumerate_actions(4, 9, 1024) {
            Err(EnvError::ActionSpaceTooLarge { count, cap }) => {
                assert_eq!(count, 10_000);
                assert_eq!(cap, 1024);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn action_index_round_trips() {
        let space = ActionSpace { agents: 3, k_max: 4 };
        for i in 0..space.len() {
            let a = space.allocation(i);
            assert_eq!(space.index_of(&a), i);
        }
    }

    #[test]
    fn reset_gives_unit_uncertainty_and_expected_dimension() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        let s = env.reset(42).unwrap();
        assert_eq!(s.to_vector().len(), 14);
        assert_eq!(EnvState::dimension(3), 14);
        for a in &s.agents {
            assert_eq!(a.uncertainty, 1.0);
            assert!(!a.task_done);
            assert_eq!(a.received_fraction, 0.0);
        }
        assert!(state_vec_bounds_ok(&s.to_vector()));
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = SchedulerEnv::new(default_cfg()).unwrap();
        let mut b = SchedulerEnv::new(default_cfg()).unwrap();
        assert_eq!(a.reset(7).unwrap(), b.reset(7).unwrap());
        // And whole episodes replay identically under the same actions.
        for action in [124, 31, 62, 0, 93] {
            let oa = a.step(action).unwrap();
            let ob = b.step(action).unwrap();
            assert_eq!(oa, ob);
            if oa.done {
                break;
            }
        }
    }

    #[test]
    fn null_action_spends_nothing_and_costs_latency_only() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        env.reset(1).unwrap();
        let out = env.step(0).unwrap();
        assert_eq!(out.info.bits_spent, 0);
        assert!((out.reward - (-0.02)).abs() < 1e-15);
        assert!(!out.done);
    }

    #[test]
    fn single_agent_completion_matches_reward_formula() {
        let cfg = EnvConfig {
            agents: 1,
            scene: SceneParams {
                patches: 1,
                critical: 1,
                theta: 0.5,
                ..SceneParams::default()
            },
            ..default_cfg()
        };
        let mut env = SchedulerEnv::new(cfg).unwrap();
        env.reset(3).unwrap();
        let space = env.action_space();
        let idx = space.index_of(&Allocation(vec![1]));
        let out = env.step(idx).unwrap();
        assert_eq!(out.info.tasks_completed_this_round, 1);
        assert!(out.done, "single task completed ends the episode");
        let expect = 1.0 - 0.1 * (out.info.bits_spent as f64 / out.info.budget_bits as f64);
        assert!((out.reward - expect).abs() < 1e-12);
        assert!(out.info.bits_spent > 0, "request and patch were charged");
    }

    #[test]
    fn oversubscribed_action_respects_budget() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        env.reset(5).unwrap();
        let space = env.action_space();
        let idx = space.index_of(&Allocation(vec![4, 4, 4]));
        let out = env.step(idx).unwrap();
        assert!(out.info.bits_spent <= out.info.budget_bits);
        let delivered: usize = out.info.delivered.iter().map(Vec::len).sum();
        assert!(delivered < 12, "twelve patches cannot fit one round");
        assert!(delivered > 0);
        assert_eq!(env.violations(), 0);
    }

    #[test]
    fn reward_formula_examples() {
        let w = RewardWeights::default();
        assert!((reward(0, 0, 1000, true, &w) + 0.02).abs() < 1e-15);
        assert!((reward(2, 1000, 1000, false, &w) - 1.9).abs() < 1e-15);
        assert_eq!(reward(0, 0, 1000, false, &w), 0.0);
    }

    #[test]
    fn step_contract_violations_error() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        assert!(matches!(env.step(0), Err(EnvError::NotReset)));
        env.reset(0).unwrap();
        assert!(matches!(
            env.step(9999),
            Err(EnvError::ActionOutOfRange { .. })
        ));
        for _ in 0..15 {
            let out = env.step(0).unwrap();
            if out.done {
                break;
            }
        }
        assert!(matches!(env.step(0), Err(EnvError::EpisodeFinished)));
    }

    #[test]
    fn episode_invariants_hold_under_random_play() {
        use rand::Rng;
        let mut rng = seeds::rng_from(99, "env-fuzz");
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        for ep in 0..10u64 {
            let mut state = env.reset(ep).unwrap();
            let mut prev_cum = 0u32;
            let mut seen: std::collections::BTreeSet<(usize, u64)> = Default::default();
            loop {
                assert!(state_vec_bounds_ok(&state.to_vector()));
                let action = rng.gen_range(0..125);
                let out = env.step(action).unwrap();
                // Channel conservation, every round.
                assert!(out.info.bits_spent <= out.info.budget_bits);
                // Per-agent dedup across the whole episode.
                for (agent, patches) in out.info.delivered.iter().enumerate() {
                    for &p in patches {
                        assert!(seen.insert((agent, p)), "patch {p} redelivered");
                    }
                }
                // Progress monotonicity.
                let cum = prev_cum + out.info.tasks_completed_this_round;
                assert!(cum >= prev_cum);
                prev_cum = cum;
                state = out.state;
                if out.done {
                    break;
                }
            }
        }
        assert_eq!(env.violations(), 0);
        assert_eq!(global_violation_count(), 0);
    }

    #[test]
    fn repeated_requests_never_recharge_cached_patches() {
        // Flood one agent with k=4 every round: each patch id may be
        // delivered and charged at most once, so total spend reconstructs
        // exactly from the delivered ids plus the request blocks.
        let cfg = EnvConfig {
            agents: 1,
            ..default_cfg()
        };
        let mut env = SchedulerEnv::new(cfg).unwrap();
        env.reset(11).unwrap();
        let idx = env.action_space().index_of(&Allocation(vec![4]));
        let mut charged_ids: Vec<u64> = Vec::new();
        let mut total_spent = 0u64;
        let mut rounds_served = 0u64;
        for _ in 0..15 {
            let out = env.step(idx).unwrap();
            rounds_served += 1;
            for &p in &out.info.delivered[0] {
                assert!(!charged_ids.contains(&p), "patch {p} charged twice");
                charged_ids.push(p);
            }
            total_spent += out.info.bits_spent;
            if out.done {
                break;
            }
        }
        let scene_seed = seeds::derive_seed_indexed(11, "scene", 0);
        let (scene, _) = model::generate_scene(scene_seed, &SceneParams::default()).unwrap();
        let mut expected = 0u64;
        for &p in &charged_ids {
            let patch = scene.patch(p).unwrap();
            let block = ContextBlock {
                source_id: INFRA_SOURCE,
                timestamp_ms: 0,
                priority: 1,
                tags: vec!["patch".into(), "agent:0".into(), format!("p:{p}")],
                payload: vec![0u8; patch.size_bits.div_ceil(8) as usize],
                version: 1,
            };
            expected += block.encoded_bits();
        }
        let request = ContextBlock {
            source_id: 0,
            timestamp_ms: 0,
            priority: 2,
            tags: vec!["request".into(), "agent:0".into()],
            payload: vec![0u8; 8],
            version: 1,
        };
        expected += rounds_served * request.encoded_bits();
        assert_eq!(total_spent, expected);
    }

    #[test]
    fn baseline_policies_behave_as_specified() {
        let space = ActionSpace { agents: 3, k_max: 4 };
        let state = EnvState {
            agents: vec![
                AgentState {
                    uncertainty: 1.0,
                    top_similarity: 0.5,
                    received_fraction: 0.0,
                    task_done: false,
                },
                AgentState {
                    uncertainty: 0.5,
                    top_similarity: 0.2,
                    received_fraction: 0.3,
                    task_done: false,
                },
                AgentState {
                    uncertainty: 0.0,
                    top_similarity: 0.0,
                    received_fraction: 1.0,
                    task_done: true,
                },
            ],
            budget_norm: 1.0,
            round_norm: 0.2,
        };

        let mut none = NoRetrievalPolicy;
        assert_eq!(none.select_action(&state, &space), 0);
        assert_eq!(space.allocation(0).as_slice(), &[0, 0, 0]);

        let mut fixed = FixedKPolicy { c: 2 };
        let idx = fixed.select_action(&state, &space);
        assert_eq!(space.allocation(idx).as_slice(), &[2, 2, 2]);

        let mut heuristic = HeuristicUncertaintyPolicy;
        let idx = heuristic.select_action(&state, &space);
        assert_eq!(space.allocation(idx).as_slice(), &[4, 2, 0]);

        let mut r1 = RandomKPolicy::new(13);
        let mut r2 = RandomKPolicy::new(13);
        let s1: Vec<usize> = (0..20).map(|_| r1.select_action(&state, &space)).collect();
        let s2: Vec<usize> = (0..20).map(|_| r2.select_action(&state, &space)).collect();
        assert_eq!(s1, s2, "seeded random policy replays identically");
        for &i in &s1 {
            assert!(i < space.len());
        }
    }

    #[test]
    fn fixed_k_one_dominates_no_retrieval() {
        let episodes = 20;
        let mean_reward = |policy: &mut dyn SchedulerPolicy| -> f64 {
            let mut env = SchedulerEnv::new(default_cfg()).unwrap();
            let space = env.action_space();
            let mut total = 0.0;
            for ep in 0..episodes {
                let mut state = env.reset(1000 + ep).unwrap();
                loop {
                    let action = policy.select_action(&state, &space);
                    let out = env.step(action).unwrap();
                    total += out.reward;
                    state = out.state;
                    if out.done {
                        break;
                    }
                }
            }
            total / episodes as f64
        };
        let fixed = mean_reward(&mut FixedKPolicy { c: 1 });
        let none = mean_reward(&mut NoRetrievalPolicy);
        assert!(
            fixed > none,
            "fixed_k(1) mean {fixed} must beat no_retrieval mean {none}"
        );
    }

    #[test]
    fn summaries_are_charged_in_round_zero() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        env.reset(2).unwrap();
        let log = env.take_history().pop().unwrap();
        // Three summary payloads plus block overhead.
        let payload_bits = 65_536u64;
        assert!(log.summary_bits_spent > 3 * payload_bits);
        assert!(log.summary_bits_spent < 3 * (payload_bits + 1024));
    }

    #[test]
    fn completion_rounds_are_recorded() {
        let mut env = SchedulerEnv::new(default_cfg()).unwrap();
        env.reset(8).unwrap();
        let idx = env.action_space().index_of(&Allocation(vec![2, 2, 2]));
        let mut finished = false;
        for _ in 0..15 {
            let out = env.step(idx).unwrap();
            if out.done {
                finished = true;
                break;
            }
        }
        assert!(finished);
        for r in env.completion_rounds().into_iter().flatten() {
            assert!((1..=15).contains(&r));
        }
    }
}
