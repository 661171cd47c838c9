//! Experiment configuration: TOML file loading, full-default resolution,
//! exhaustive semantic validation, and conversion into the runtime types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::channel::{ChannelModel, FadingModel};
use crate::model::SceneParams;
use crate::rl::{DqnConfig, PpoConfig};
use crate::scheduler::{enumerate_actions, EnvConfig, RewardWeights, DEFAULT_ACTION_CAP};

/// One semantic violation, addressed by configuration key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Ppo,
    Dqn,
    Heuristic,
    RandomK,
    FixedK,
    NoRetrieval,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Ppo,
        PolicyKind::Dqn,
        PolicyKind::Heuristic,
        PolicyKind::RandomK,
        PolicyKind::FixedK,
        PolicyKind::NoRetrieval,
    ];

    pub fn parse(name: &str) -> Option<PolicyKind> {
        Some(match name {
            "ppo" => PolicyKind::Ppo,
            "dqn" => PolicyKind::Dqn,
            "heuristic" => PolicyKind::Heuristic,
            "random_k" => PolicyKind::RandomK,
            "fixed_k" => PolicyKind::FixedK,
            "no_retrieval" => PolicyKind::NoRetrieval,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Ppo => "ppo",
            PolicyKind::Dqn => "dqn",
            PolicyKind::Heuristic => "heuristic",
            PolicyKind::RandomK => "random_k",
            PolicyKind::FixedK => "fixed_k",
            PolicyKind::NoRetrieval => "no_retrieval",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, PolicyKind::Ppo | PolicyKind::Dqn)
    }

    /// Rank in the expected performance ordering; `None` for policies
    /// outside it. Lower rank means better.
    pub fn ordering_rank(&self) -> Option<u8> {
        match self {
            PolicyKind::Ppo | PolicyKind::Dqn => Some(0),
            PolicyKind::Heuristic => Some(1),
            PolicyKind::RandomK => Some(2),
            PolicyKind::NoRetrieval => Some(3),
            PolicyKind::FixedK => None,
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policy: String,
    pub seeds: Vec<u64>,
    /// Training episodes for learned policies; trace length for baselines.
    pub episodes: usize,
    /// Evaluation scenes per seed (each scene carries one task per agent).
    pub eval_scenes: usize,
    pub out: String,
    pub agents: usize,
    pub k_max: u8,
    pub max_rounds: u32,
    pub top_m: usize,
    pub reward: RewardSection,
    pub scene: SceneSection,
    pub channel: ChannelSection,
    pub dqn: DqnSection,
    pub ppo: PpoSection,
    pub fixed_k: FixedKSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: "no_retrieval".into(),
            seeds: vec![0],
            episodes: 3000,
            eval_scenes: 10,
            out: "runs".into(),
            agents: 3,
            k_max: 4,
            max_rounds: 15,
            top_m: 3,
            reward: RewardSection::default(),
            scene: SceneSection::default(),
            channel: ChannelSection::default(),
            dqn: DqnSection::default(),
            ppo: PpoSection::default(),
            fixed_k: FixedKSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let w = RewardWeights::default();
        Self {
            w1: w.w1,
            w2: w.w2,
            w3: w.w3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub dimension: usize,
    pub patches: usize,
    pub critical: usize,
    pub theta: f64,
    pub summary_bits: u64,
    pub patch_sizes_bits: Vec<u64>,
    pub noise_sigma: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        let p = SceneParams::default();
        Self {
            dimension: p.dimension,
            patches: p.patches,
            critical: p.critical,
            theta: p.theta,
            summary_bits: p.summary_bits,
            patch_sizes_bits: p.patch_sizes_bits,
            noise_sigma: p.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub snr_db: f64,
    pub round_duration_s: f64,
    pub fading: FadingSection,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1_000_000.0,
            snr_db: 15.0,
            round_duration_s: 0.1,
            fading: FadingSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingSection {
    pub enabled: bool,
    pub range_db: f64,
    pub seed: u64,
}

impl Default for FadingSection {
    fn default() -> Self {
        Self {
            enabled: false,
            range_db: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnSection {
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub target_sync_interval: usize,
    pub update_interval: usize,
}

impl Default for DqnSection {
    fn default() -> Self {
        let d = DqnConfig::default();
        Self {
            learning_rate: d.learning_rate,
            gamma: d.gamma,
            buffer_capacity: d.buffer_capacity,
            batch_size: d.batch_size,
            epsilon_start: d.epsilon_start,
            epsilon_end: d.epsilon_end,
            epsilon_decay_steps: d.epsilon_decay_steps,
            target_sync_interval: d.target_sync_interval,
            update_interval: d.update_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoSection {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub rollout_steps: usize,
}

impl Default for PpoSection {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            learning_rate: p.learning_rate,
            gamma: p.gamma,
            gae_lambda: p.gae_lambda,
            clip: p.clip,
            epochs: p.epochs,
            minibatch_size: p.minibatch_size,
            entropy_coef: p.entropy_coef,
            value_coef: p.value_coef,
            rollout_steps: p.rollout_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedKSection {
    pub c: u8,
}

impl Default for FixedKSection {
    fn default() -> Self {
        Self { c: 1 }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config file; absent keys resolve to defaults, so an
    /// empty file yields the fully-default config.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Collects every semantic violation, keyed by configuration path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut push = |key: &str, message: String| {
            issues.push(ConfigIssue {
                key: key.to_owned(),
                message,
            });
        };

        if PolicyKind::parse(&self.policy).is_none() {
            push(
                "policy",
                format!(
                    "unknown policy '{}'; expected one of {}",
                    self.policy,
                    PolicyKind::ALL
                        .iter()
                        .map(|p| p.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            );
        }
        if self.seeds.is_empty() {
            push("seeds", "at least one seed is required".into());
        }
        if self.episodes == 0 {
            push("episodes", "must be >= 1".into());
        }
        if self.eval_scenes == 0 {
            push("eval_scenes", "must be >= 1".into());
        }
        if self.agents < 1 {
            push("agents", "must be >= 1".into());
        }
        if self.max_rounds < 1 {
            push("max_rounds", "must be >= 1".into());
        }
        if self.top_m < 1 {
            push("top_m", "must be >= 1".into());
        }
        if self.agents >= 1
            && enumerate_actions(self.agents, self.k_max, DEFAULT_ACTION_CAP).is_err()
        {
            push(
                "k_max",
                format!(
                    "(k_max+1)^agents = {} exceeds the action cap {DEFAULT_ACTION_CAP}; \
                     lower k_max or agents",
                    (self.k_max as u64 + 1).pow(self.agents as u32)
                ),
            );
        }

        for (key, value) in [
            ("reward.w1", self.reward.w1),
            ("reward.w2", self.reward.w2),
            ("reward.w3", self.reward.w3),
        ] {
            if !value.is_finite() {
                push(key, "must be finite".into());
            }
        }

        if self.scene.dimension < 2 {
            push("scene.dimension", "must be >= 2".into());
        }
        if self.scene.patches < 1 {
            push("scene.patches", "must be >= 1".into());
        }
        if self.scene.critical < 1 || self.scene.critical > self.scene.patches {
            push(
                "scene.critical",
                format!("must be in [1, scene.patches = {}]", self.scene.patches),
            );
        }
        if !(self.scene.theta > 0.0 && self.scene.theta <= 1.0) {
            push("scene.theta", "must be in (0, 1]".into());
        }
        if self.scene.summary_bits == 0 {
            push("scene.summary_bits", "must be positive".into());
        }
        if self.scene.patch_sizes_bits.is_empty()
            || self.scene.patch_sizes_bits.iter().any(|&s| s == 0)
        {
            push(
                "scene.patch_sizes_bits",
                "must be non-empty with positive sizes".into(),
            );
        }
        if !(self.scene.noise_sigma >= 0.0) {
            push("scene.noise_sigma", "must be >= 0".into());
        }

        if !(self.channel.bandwidth_hz > 0.0) {
            push("channel.bandwidth_hz", "must be positive".into());
        }
        if !self.channel.snr_db.is_finite() {
            push("channel.snr_db", "must be finite".into());
        }
        if !(self.channel.round_duration_s > 0.0) {
            push("channel.round_duration_s", "must be positive".into());
        }
        if !(self.channel.fading.range_db >= 0.0) {
            push("channel.fading.range_db", "must be >= 0".into());
        }

        for issue in self.dqn_config().validate() {
            push("dqn", issue);
        }
        for issue in self.ppo_config().validate() {
            push("ppo", issue);
        }
        if self.fixed_k.c > self.k_max {
            push(
                "fixed_k.c",
                format!("must be <= k_max = {}", self.k_max),
            );
        }

        issues
    }

    pub fn policy_kind(&self) -> Result<PolicyKind, HarnessError> {
        PolicyKind::parse(&self.policy)
            .ok_or_else(|| HarnessError::UnknownPolicy(self.policy.clone()))
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            dimension: self.scene.dimension,
            patches: self.scene.patches,
            critical: self.scene.critical,
            theta: self.scene.theta,
            summary_bits: self.scene.summary_bits,
            patch_sizes_bits: self.scene.patch_sizes_bits.clone(),
            noise_sigma: self.scene.noise_sigma,
        }
    }

    pub fn channel_model(&self) -> Result<ChannelModel, HarnessError> {
        let fading = self.channel.fading.enabled.then_some(FadingModel {
            range_db: self.channel.fading.range_db,
            seed: self.channel.fading.seed,
        });
        ChannelModel::new(
            self.channel.bandwidth_hz,
            self.channel.snr_db,
            self.channel.round_duration_s,
            fading,
        )
        .map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn env_config(&self) -> Result<EnvConfig, HarnessError> {
        Ok(EnvConfig {
            agents: self.agents,
            k_max: self.k_max,
            max_rounds: self.max_rounds,
            top_m: self.top_m,
            reward: RewardWeights {
                w1: self.reward.w1,
                w2: self.reward.w2,
                w3: self.reward.w3,
            },
            scene: self.scene_params(),
            channel: self.channel_model()?,
            action_cap: DEFAULT_ACTION_CAP,
        })
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            learning_rate: self.dqn.learning_rate,
            gamma: self.dqn.gamma,
            buffer_capacity: self.dqn.buffer_capacity,
            batch_size: self.dqn.batch_size,
            epsilon_start: self.dqn.epsilon_start,
            epsilon_end: self.dqn.epsilon_end,
            epsilon_decay_steps: self.dqn.epsilon_decay_steps,
            target_sync_interval: self.dqn.target_sync_interval,
            update_interval: self.dqn.update_interval,
            episodes: self.episodes,
            loss_guard: 1e6,
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            learning_rate: self.ppo.learning_rate,
            gamma: self.ppo.gamma,
            gae_lambda: self.ppo.gae_lambda,
            clip: self.ppo.clip,
            epochs: self.ppo.epochs,
            minibatch_size: self.ppo.minibatch_size,
            entropy_coef: self.ppo.entropy_coef,
            value_coef: self.ppo.value_coef,
            rollout_steps: self.ppo.rollout_steps,
            episodes: self.episodes,
            non_finite_limit: 20,
        }
    }

    /// Canonical TOML echo of the fully-resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }
}

/// Loads, resolves and validates a config file. Returns the normalized
/// config or the full list of violations.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let cfg = ExperimentConfig::load(path)?;
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(HarnessError::ConfigIssues(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_full_defaults_without_errors() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.agents, 3);
        assert_eq!(cfg.k_max, 4);
        assert_eq!(cfg.max_rounds, 15);
        assert_eq!(cfg.scene.patches, 24);
        assert!((cfg.channel.snr_db - 15.0).abs() < 1e-12);
    }

    #[test]
    fn resolution_is_idempotent() {
        let cfg = ExperimentConfig::parse("agents = 2\nk_max = 3\n").unwrap();
        let echoed = cfg.to_toml();
        let again = ExperimentConfig::parse(&echoed).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(echoed, again.to_toml());
    }

    #[test]
    fn negative_k_max_is_rejected_by_name() {
        // k_max is unsigned, so -1 fails at parse time with a located error.
        let err = ExperimentConfig::parse("k_max = -1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("k_max") || msg.contains("line"), "{msg}");
    }

    #[test]
    fn semantic_violations_are_all_reported_with_key_paths() {
        let cfg = ExperimentConfig::parse(
            "policy = \"nonsense\"\nepisodes = 0\n\n[scene]\ntheta = 1.5\ncritical = 99\n",
        )
        .unwrap();
        let issues = cfg.validate();
        let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"policy"), "{keys:?}");
        assert!(keys.contains(&"episodes"));
        assert!(keys.contains(&"scene.theta"));
        assert!(keys.contains(&"scene.critical"));
        assert_eq!(issues.len(), 4, "every violation reported: {issues:?}");
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let err = ExperimentConfig::parse("definitely_not_a_key = 1\n").unwrap_err();
        assert!(format!("{err}").contains("definitely_not_a_key"));
    }

    #[test]
    fn action_cap_violation_mentions_remedy() {
        let cfg = ExperimentConfig::parse("agents = 4\nk_max = 9\n").unwrap();
        let issues = cfg.validate();
        assert!(issues
            .iter()
            .any(|i| i.key == "k_max" && i.message.contains("lower k_max or agents")));
    }

    #[test]
    fn policy_kinds_round_trip() {
        for kind in PolicyKind::ALL {
            assert_eq!(PolicyKind::parse(kind.as_str()), Some(kind));
        }
        assert_eq!(PolicyKind::parse("sarsa"), None);
        assert!(PolicyKind::Ppo.is_learned());
        assert!(!PolicyKind::Heuristic.is_learned());
        assert_eq!(PolicyKind::FixedK.ordering_rank(), None);
    }
}
