//! Experiment orchestration: per-seed training and evaluation runs,
//! metrics files, and the cross-run comparison report with the expected
//! performance-ordering check.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, PolicyKind};
use super::metrics::{
    final_window_mean, mean_std, pooled_standard_error, read_metrics, read_summary,
    rows_from_logs, write_file, write_metrics, write_stats_csv, write_summary, SeedSummary,
    SMOOTHING_WINDOW,
};
use super::HarnessError;
use crate::rl::{
    load_checkpoint, save_checkpoint, train_dqn, train_ppo, PolicyCheckpoint,
};
use crate::scheduler::{
    EpisodeLog, FixedKPolicy, HeuristicUncertaintyPolicy, NoRetrievalPolicy, RandomKPolicy,
    SchedulerEnv, SchedulerPolicy,
};
use crate::seeds;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Mean rounds to finish a scene; the round limit caps unfinished ones.
    pub mean_rounds: f64,
    pub tasks_completed: u32,
    pub tasks_total: u32,
    /// Cumulative completions by round index (1-based), summed over scenes.
    pub completion_curve: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train_rewards: Vec<f64>,
    pub final_window_reward: f64,
    pub eval: EvalOutcome,
    pub violations: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub policy: PolicyKind,
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    pub violations: u64,
}

impl RunOutcome {
    pub fn mean_final_window_reward(&self) -> f64 {
        let vals: Vec<f64> = self.seeds.iter().map(|s| s.final_window_reward).collect();
        mean_std(&vals).0
    }

    pub fn mean_eval_rounds(&self) -> f64 {
        let vals: Vec<f64> = self.seeds.iter().map(|s| s.eval.mean_rounds).collect();
        mean_std(&vals).0
    }
}

/// Runs one policy over every configured seed: train (when learned), then
/// evaluate greedily on the shared evaluation scenes, writing one metrics
/// CSV per phase and seed plus the summary files and the resolved config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(HarnessError::ConfigIssues(issues));
    }
    let policy = cfg.policy_kind()?;
    let out_dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let results: Vec<Result<SeedOutcome, HarnessError>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, policy, seed, &out_dir))
        .collect();
    let mut seeds = Vec::with_capacity(results.len());
    for r in results {
        seeds.push(r?);
    }

    let summaries: Vec<SeedSummary> = seeds
        .iter()
        .map(|s| SeedSummary {
            policy: policy.as_str().to_owned(),
            seed: s.seed,
            final_window_reward: s.final_window_reward,
            eval_mean_rounds: s.eval.mean_rounds,
            eval_tasks_completed: s.eval.tasks_completed,
        })
        .collect();
    write_summary(&out_dir.join("summary.csv"), &summaries)?;

    let finals: Vec<f64> = seeds.iter().map(|s| s.final_window_reward).collect();
    let rounds: Vec<f64> = seeds.iter().map(|s| s.eval.mean_rounds).collect();
    let tasks: Vec<f64> = seeds
        .iter()
        .map(|s| f64::from(s.eval.tasks_completed))
        .collect();
    let (fm, fs) = mean_std(&finals);
    let (rm, rs) = mean_std(&rounds);
    let (tm, ts) = mean_std(&tasks);
    let name = policy.as_str().to_owned();
    write_stats_csv(
        &out_dir.join("summary_stats.csv"),
        &[
            (name.clone(), "final_reward", fm, fs),
            (name.clone(), "rounds_to_completion", rm, rs),
            (name, "eval_tasks_completed", tm, ts),
        ],
    )?;
    write_file(&out_dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml().as_bytes())?;

    let violations = seeds.iter().map(|s| s.violations).sum();
    Ok(RunOutcome {
        policy,
        out_dir,
        seeds,
        violations,
    })
}

fn run_seed(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    seed: u64,
    out_dir: &Path,
) -> Result<SeedOutcome, HarnessError> {
    let mut env = SchedulerEnv::new(cfg.env_config()?)?;
    let name = policy.as_str();

    let (train_logs, mut eval_policy): (Vec<EpisodeLog>, Box<dyn SchedulerPolicy>) = match policy
    {
        PolicyKind::Dqn => {
            let result = train_dqn(&mut env, &cfg.dqn_config(), seed)?;
            let logs = env.take_history();
            save_checkpoint(
                &out_dir.join(format!("checkpoint_dqn_seed{seed}.rlck")),
                &PolicyCheckpoint::Dqn(result.policy.clone()),
            )?;
            (logs, Box::new(result.policy))
        }
        PolicyKind::Ppo => {
            let result = train_ppo(&mut env, &cfg.ppo_config(), seed)?;
            let logs = env.take_history();
            save_checkpoint(
                &out_dir.join(format!("checkpoint_ppo_seed{seed}.rlck")),
                &PolicyCheckpoint::Ppo(result.policy.clone()),
            )?;
            (logs, Box::new(result.policy))
        }
        _ => {
            let mut trace_policy = baseline_policy(policy, cfg, seed, "train");
            run_episodes(
                &mut env,
                trace_policy.as_mut(),
                cfg.episodes,
                |ep| seeds::train_episode_seed(seed, ep),
            )?;
            let logs = env.take_history();
            (logs, baseline_policy(policy, cfg, seed, "eval"))
        }
    };

    let train_rows = rows_from_logs(name, seed, &train_logs);
    write_metrics(
        &out_dir.join(format!("train_{name}_seed{seed}.csv")),
        &train_rows,
    )?;
    let train_rewards: Vec<f64> = train_logs.iter().map(|l| l.total_reward()).collect();

    run_episodes(&mut env, eval_policy.as_mut(), cfg.eval_scenes, |ep| {
        seeds::eval_episode_seed(seed, ep)
    })?;
    let eval_logs = env.take_history();
    write_metrics(
        &out_dir.join(format!("eval_{name}_seed{seed}.csv")),
        &rows_from_logs(name, seed, &eval_logs),
    )?;

    let eval = eval_outcome(&eval_logs, cfg);
    Ok(SeedOutcome {
        seed,
        final_window_reward: final_window_mean(&train_rewards),
        train_rewards,
        eval,
        violations: env.violations(),
    })
}

fn baseline_policy(
    policy: PolicyKind,
    cfg: &ExperimentConfig,
    seed: u64,
    phase: &str,
) -> Box<dyn SchedulerPolicy> {
    match policy {
        PolicyKind::Heuristic => Box::new(HeuristicUncertaintyPolicy),
        PolicyKind::NoRetrieval => Box::new(NoRetrievalPolicy),
        PolicyKind::FixedK => Box::new(FixedKPolicy { c: cfg.fixed_k.c }),
        PolicyKind::RandomK => Box::new(RandomKPolicy::new(seeds::derive_seed(
            seed,
            &format!("random-k-{phase}"),
        ))),
        PolicyKind::Ppo | PolicyKind::Dqn => unreachable!("learned policies are trained"),
    }
}

fn run_episodes(
    env: &mut SchedulerEnv,
    policy: &mut dyn SchedulerPolicy,
    episodes: usize,
    episode_seed: impl Fn(usize) -> u64,
) -> Result<(), HarnessError> {
    let space = env.action_space();
    for ep in 0..episodes {
        let mut state = env.reset(episode_seed(ep))?;
        loop {
            let action = policy.select_action(&state, &space);
            let out = env.step(action)?;
            state = out.state;
            if out.done {
                break;
            }
        }
    }
    Ok(())
}

fn eval_outcome(logs: &[EpisodeLog], cfg: &ExperimentConfig) -> EvalOutcome {
    let rounds: Vec<f64> = logs.iter().map(|l| f64::from(l.rounds_used())).collect();
    let tasks_completed = logs.iter().map(|l| l.tasks_completed).sum();
    let max_rounds = cfg.max_rounds as usize;
    let mut curve = vec![0u32; max_rounds];
    for log in logs {
        for (idx, slot) in curve.iter_mut().enumerate() {
            let round = (idx + 1) as u32;
            let cum = log
                .rounds
                .iter()
                .take_while(|r| r.round <= round)
                .last()
                .map_or(0, |r| r.cumulative_tasks_completed);
            *slot += cum;
        }
    }
    EvalOutcome {
        mean_rounds: mean_std(&rounds).0,
        tasks_completed,
        tasks_total: (cfg.eval_scenes * cfg.agents) as u32,
        completion_curve: curve,
    }
}

/// Evaluation-only run: loads a policy checkpoint and plays the evaluation
/// scenes for every seed, writing the eval metrics files.
pub fn run_evaluation_only(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
) -> Result<RunOutcome, HarnessError> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(HarnessError::ConfigIssues(issues));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let policy = match &ckpt {
        PolicyCheckpoint::Dqn(_) => PolicyKind::Dqn,
        PolicyCheckpoint::Ppo(_) => PolicyKind::Ppo,
    };
    let out_dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut seeds_out = Vec::new();
    let mut violations = 0;
    for &seed in &cfg.seeds {
        let mut env = SchedulerEnv::new(cfg.env_config()?)?;
        let mut eval_policy: Box<dyn SchedulerPolicy> = match &ckpt {
            PolicyCheckpoint::Dqn(p) => Box::new(p.clone()),
            PolicyCheckpoint::Ppo(p) => Box::new(p.clone()),
        };
        run_episodes(&mut env, eval_policy.as_mut(), cfg.eval_scenes, |ep| {
            seeds::eval_episode_seed(seed, ep)
        })?;
        let eval_logs = env.take_history();
        write_metrics(
            &out_dir.join(format!("eval_{}_seed{seed}.csv", policy.as_str())),
            &rows_from_logs(policy.as_str(), seed, &eval_logs),
        )?;
        violations += env.violations();
        seeds_out.push(SeedOutcome {
            seed,
            train_rewards: Vec::new(),
            final_window_reward: f64::NAN,
            eval: eval_outcome(&eval_logs, cfg),
            violations: env.violations(),
        });
    }
    Ok(RunOutcome {
        policy,
        out_dir,
        seeds: seeds_out,
        violations,
    })
}

// --- comparison -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CompareEntry {
    pub label: String,
    pub policy: PolicyKind,
    pub mean_final_reward: f64,
    pub std_final_reward: f64,
    pub mean_rounds: f64,
    pub std_rounds: f64,
    pub mean_eval_tasks: f64,
    /// Difference of mean final reward against the first run directory.
    pub delta_mean_final_reward: f64,
}

#[derive(Debug, Clone)]
pub struct OrderingCheck {
    pub better: String,
    pub worse: String,
    pub gap: f64,
    pub pooled_se: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct CompareReport {
    pub common_seeds: Vec<u64>,
    pub entries: Vec<CompareEntry>,
    pub checks: Vec<OrderingCheck>,
    pub ordering_pass: bool,
}

impl CompareReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "common seeds: {} ({} runs)\n",
            self.common_seeds.len(),
            self.entries.len()
        ));
        out.push_str(&format!(
            "{:<16} {:>14} {:>10} {:>12} {:>10} {:>12}\n",
            "run", "final_reward", "stddev", "mean_rounds", "stddev", "eval_tasks"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<16} {:>14.4} {:>10.4} {:>12.3} {:>10.3} {:>12.2}\n",
                e.label,
                e.mean_final_reward,
                e.std_final_reward,
                e.mean_rounds,
                e.std_rounds,
                e.mean_eval_tasks
            ));
        }
        if self.checks.is_empty() {
            out.push_str("ordering: no ranked pairs among the compared runs\n");
        } else {
            for c in &self.checks {
                out.push_str(&format!(
                    "ordering {:<12} > {:<12} gap {:>9.4} vs pooled se {:>8.4} ... {}\n",
                    c.better,
                    c.worse,
                    c.gap,
                    c.pooled_se,
                    if c.pass { "PASS" } else { "FAIL" }
                ));
            }
        }
        out.push_str(&format!(
            "ordering check: {}\n",
            if self.ordering_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

struct LoadedRun {
    label: String,
    policy: PolicyKind,
    cfg: ExperimentConfig,
    summaries: Vec<SeedSummary>,
    dir: PathBuf,
}

fn load_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let cfg_text = super::metrics::read_file(&dir.join(RESOLVED_CONFIG_FILE))?;
    let cfg = ExperimentConfig::parse(&cfg_text)?;
    let policy = cfg.policy_kind()?;
    let summaries = read_summary(&dir.join("summary.csv"))?;
    Ok(LoadedRun {
        label: policy.as_str().to_owned(),
        policy,
        cfg,
        summaries,
        dir: dir.to_path_buf(),
    })
}

/// Key paths on which two configs differ, ignoring the per-run fields
/// (policy, seeds, output directory).
pub fn config_diff_keys(a: &ExperimentConfig, b: &ExperimentConfig) -> Vec<String> {
    let strip = |cfg: &ExperimentConfig| -> toml::Value {
        let mut v: toml::Value = toml::Value::try_from(cfg).expect("config serializes");
        if let Some(t) = v.as_table_mut() {
            t.remove("policy");
            t.remove("seeds");
            t.remove("out");
        }
        v
    };
    let mut keys = Vec::new();
    diff_values("", &strip(a), &strip(b), &mut keys);
    keys
}

fn diff_values(prefix: &str, a: &toml::Value, b: &toml::Value, out: &mut Vec<String>) {
    match (a, b) {
        (toml::Value::Table(ta), toml::Value::Table(tb)) => {
            let names: BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
            for name in names {
                let path = if prefix.is_empty() {
                    name.to_string()
                } else {
                    format!("{prefix}.{name}")
                };
                match (ta.get(name), tb.get(name)) {
                    (Some(x), Some(y)) => diff_values(&path, x, y, out),
                    _ => out.push(path),
                }
            }
        }
        _ if a != b => out.push(prefix.to_owned()),
        _ => {}
    }
}

/// Compares completed run directories: emits the summary table, plot-ready
/// reward and completion curves, and the performance-ordering check.
pub fn compare(dirs: &[PathBuf], out_dir: &Path) -> Result<CompareReport, HarnessError> {
    if dirs.len() < 2 {
        return Err(HarnessError::NotEnoughRuns(dirs.len()));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        runs.push(load_run(dir)?);
    }

    // Refuse to compare runs whose environments differ.
    for run in &runs[1..] {
        let diff = config_diff_keys(&runs[0].cfg, &run.cfg);
        if !diff.is_empty() {
            return Err(HarnessError::ConfigMismatch { keys: diff });
        }
    }

    // Disambiguate duplicate policy labels deterministically.
    for i in 0..runs.len() {
        let dups = runs[..i]
            .iter()
            .filter(|r| r.policy == runs[i].policy)
            .count();
        if dups > 0 {
            runs[i].label = format!("{}_{}", runs[i].label, dups + 1);
        }
    }

    let mut common: BTreeSet<u64> = runs[0].summaries.iter().map(|s| s.seed).collect();
    for run in &runs[1..] {
        let theirs: BTreeSet<u64> = run.summaries.iter().map(|s| s.seed).collect();
        common = common.intersection(&theirs).copied().collect();
    }
    if common.len() < 2 {
        return Err(HarnessError::InsufficientOverlap(common.len()));
    }
    let common_seeds: Vec<u64> = common.iter().copied().collect();

    let finals: Vec<Vec<f64>> = runs
        .iter()
        .map(|run| {
            common_seeds
                .iter()
                .map(|seed| {
                    run.summaries
                        .iter()
                        .find(|s| s.seed == *seed)
                        .expect("seed in common set")
                        .final_window_reward
                })
                .collect()
        })
        .collect();

    let mut entries = Vec::with_capacity(runs.len());
    let first_mean = mean_std(&finals[0]).0;
    for (run, vals) in runs.iter().zip(&finals) {
        let (fm, fs) = mean_std(vals);
        let rounds: Vec<f64> = common_seeds
            .iter()
            .map(|seed| {
                run.summaries
                    .iter()
                    .find(|s| s.seed == *seed)
                    .unwrap()
                    .eval_mean_rounds
            })
            .collect();
        let tasks: Vec<f64> = common_seeds
            .iter()
            .map(|seed| {
                f64::from(
                    run.summaries
                        .iter()
                        .find(|s| s.seed == *seed)
                        .unwrap()
                        .eval_tasks_completed,
                )
            })
            .collect();
        let (rm, rs) = mean_std(&rounds);
        entries.push(CompareEntry {
            label: run.label.clone(),
            policy: run.policy,
            mean_final_reward: fm,
            std_final_reward: fs,
            mean_rounds: rm,
            std_rounds: rs,
            mean_eval_tasks: mean_std(&tasks).0,
            delta_mean_final_reward: fm - first_mean,
        });
    }

    // Every ranked pair must be separated by more than one pooled
    // standard error of the final-window rewards.
    let mut checks = Vec::new();
    for i in 0..runs.len() {
        for j in 0..runs.len() {
            if i == j {
                continue;
            }
            let (Some(ri), Some(rj)) = (
                runs[i].policy.ordering_rank(),
                runs[j].policy.ordering_rank(),
            ) else {
                continue;
            };
            if ri < rj {
                let gap = entries[i].mean_final_reward - entries[j].mean_final_reward;
                let se = pooled_standard_error(&finals[i], &finals[j]);
                checks.push(OrderingCheck {
                    better: runs[i].label.clone(),
                    worse: runs[j].label.clone(),
                    gap,
                    pooled_se: se,
                    pass: gap > se,
                });
            }
        }
    }
    let ordering_pass = checks.iter().all(|c| c.pass);

    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_comparison_files(out_dir, &runs, &entries, &common_seeds)?;

    Ok(CompareReport {
        common_seeds,
        entries,
        checks,
        ordering_pass,
    })
}

fn write_comparison_files(
    out_dir: &Path,
    runs: &[LoadedRun],
    entries: &[CompareEntry],
    common_seeds: &[u64],
) -> Result<(), HarnessError> {
    // Per-episode mean training reward (raw and trailing-window smoothed).
    let episodes = runs[0].cfg.episodes;
    let mut header = String::from("episode");
    for run in runs {
        header.push_str(&format!(",{0},{0}_window10", run.label));
    }
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    for run in runs {
        let mut per_episode = vec![0.0f64; episodes];
        for &seed in common_seeds {
            let path = run
                .dir
                .join(format!("train_{}_seed{seed}.csv", run.policy.as_str()));
            let rows = read_metrics(&path)?;
            for row in rows {
                per_episode[row.episode as usize] += row.reward;
            }
        }
        for v in &mut per_episode {
            *v /= common_seeds.len() as f64;
        }
        curves.push(per_episode);
    }
    let mut out = format!("{header}\r\n");
    for ep in 0..episodes {
        out.push_str(&ep.to_string());
        for curve in &curves {
            let lo = ep.saturating_sub(SMOOTHING_WINDOW - 1);
            let window = &curve[lo..=ep];
            let smoothed = window.iter().sum::<f64>() / window.len() as f64;
            out.push_str(&format!(",{},{}", curve[ep], smoothed));
        }
        out.push_str("\r\n");
    }
    write_file(&out_dir.join("reward_curves.csv"), out.as_bytes())?;

    // Mean cumulative task completions per evaluation round.
    let max_rounds = runs[0].cfg.max_rounds as usize;
    let eval_scenes = runs[0].cfg.eval_scenes;
    let mut header = String::from("round");
    for run in runs {
        header.push_str(&format!(",{}", run.label));
    }
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    for run in runs {
        let mut per_round = vec![0.0f64; max_rounds];
        for &seed in common_seeds {
            let path = run
                .dir
                .join(format!("eval_{}_seed{seed}.csv", run.policy.as_str()));
            let rows = read_metrics(&path)?;
            for episode in 0..eval_scenes as u32 {
                let ep_rows: Vec<_> = rows.iter().filter(|r| r.episode == episode).collect();
                for (idx, slot) in per_round.iter_mut().enumerate() {
                    let round = (idx + 1) as u32;
                    let cum = ep_rows
                        .iter()
                        .take_while(|r| r.round <= round)
                        .last()
                        .map_or(0, |r| r.cum_tasks_completed);
                    *slot += f64::from(cum);
                }
            }
        }
        for v in &mut per_round {
            *v /= common_seeds.len() as f64;
        }
        curves.push(per_round);
    }
    let mut out = format!("{header}\r\n");
    for idx in 0..max_rounds {
        out.push_str(&(idx + 1).to_string());
        for curve in &curves {
            out.push_str(&format!(",{}", curve[idx]));
        }
        out.push_str("\r\n");
    }
    write_file(&out_dir.join("completion_curves.csv"), out.as_bytes())?;

    // Summary table mirror.
    let mut out = String::from(
        "label,policy,seeds,mean_final_reward,stddev_final_reward,\
         mean_rounds_to_completion,stddev_rounds_to_completion,\
         mean_eval_tasks_completed,delta_mean_final_reward\r\n",
    );
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\r\n",
            e.label,
            e.policy.as_str(),
            common_seeds.len(),
            e.mean_final_reward,
            e.std_final_reward,
            e.mean_rounds,
            e.std_rounds,
            e.mean_eval_tasks,
            e.delta_mean_final_reward
        ));
    }
    write_file(&out_dir.join("comparison_summary.csv"), out.as_bytes())?;
    Ok(())
}
