//! CSV metrics: one row per (episode, round), plus per-seed summaries and
//! aggregate statistics. RFC-4180 style: header row, CRLF line endings,
//! UTF-8, no quoting needed by construction.

use std::path::Path;

use super::HarnessError;
use crate::scheduler::EpisodeLog;

pub const METRICS_HEADER: &str =
    "run_id,seed,episode,round,policy,reward,cum_tasks_completed,bits_spent,budget_bits,k_alloc";
pub const SUMMARY_HEADER: &str =
    "policy,seed,final_window_reward,eval_mean_rounds,eval_tasks_completed";
pub const STATS_HEADER: &str = "policy,metric,mean,stddev";

/// Trailing window used to smooth the comparison reward curves.
pub const SMOOTHING_WINDOW: usize = 10;

/// Length of the "final window" over which converged reward is averaged:
/// the last tenth of the trace, never fewer than 10 episodes.
pub fn final_window_len(episodes: usize) -> usize {
    (episodes / 10).max(10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub episode: u32,
    pub round: u32,
    pub policy: String,
    pub reward: f64,
    pub cum_tasks_completed: u32,
    pub bits_spent: u64,
    pub budget_bits: u64,
    pub k_alloc: Vec<u8>,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let k = self
            .k_alloc
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.episode,
            self.round,
            self.policy,
            self.reward,
            self.cum_tasks_completed,
            self.bits_spent,
            self.budget_bits,
            k
        )
    }

    pub fn parse(line: &str) -> Result<Self, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(HarnessError::Metrics(format!(
                "expected 10 fields, got {} in '{line}'",
                fields.len()
            )));
        }
        let bad = |what: &str| HarnessError::Metrics(format!("bad {what} in '{line}'"));
        Ok(MetricsRow {
            run_id: fields[0].to_owned(),
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            episode: fields[2].parse().map_err(|_| bad("episode"))?,
            round: fields[3].parse().map_err(|_| bad("round"))?,
            policy: fields[4].to_owned(),
            reward: fields[5].parse().map_err(|_| bad("reward"))?,
            cum_tasks_completed: fields[6].parse().map_err(|_| bad("cum_tasks"))?,
            bits_spent: fields[7].parse().map_err(|_| bad("bits_spent"))?,
            budget_bits: fields[8].parse().map_err(|_| bad("budget_bits"))?,
            k_alloc: if fields[9].is_empty() {
                Vec::new()
            } else {
                fields[9]
                    .split(';')
                    .map(|k| k.parse().map_err(|_| bad("k_alloc")))
                    .collect::<Result<_, _>>()?
            },
        })
    }
}

/// Expands per-episode logs into metrics rows (rounds are 1-based; round 0
/// is the summary transmission and carries no scheduling decision).
pub fn rows_from_logs(
    policy: &str,
    seed: u64,
    logs: &[EpisodeLog],
) -> Vec<MetricsRow> {
    let run_id = format!("{policy}-s{seed}");
    let mut rows = Vec::new();
    for (episode, log) in logs.iter().enumerate() {
        for r in &log.rounds {
            rows.push(MetricsRow {
                run_id: run_id.clone(),
                seed,
                episode: episode as u32,
                round: r.round,
                policy: policy.to_owned(),
                reward: r.reward,
                cum_tasks_completed: r.cumulative_tasks_completed,
                bits_spent: r.bits_spent,
                budget_bits: r.budget_bits,
                k_alloc: r.allocation.clone(),
            });
        }
    }
    rows
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut out = String::with_capacity(rows.len() * 64 + 64);
    out.push_str(METRICS_HEADER);
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.csv_line());
        out.push_str("\r\n");
    }
    write_file(path, out.as_bytes())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == METRICS_HEADER => {}
        other => {
            return Err(HarnessError::Metrics(format!(
                "unexpected metrics header {other:?} in {}",
                path.display()
            )))
        }
    }
    lines.filter(|l| !l.is_empty()).map(MetricsRow::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub policy: String,
    pub seed: u64,
    /// Mean reward over the final window of training episodes.
    pub final_window_reward: f64,
    /// Mean rounds to complete an evaluation scene (round limit caps
    /// incomplete scenes).
    pub eval_mean_rounds: f64,
    pub eval_tasks_completed: u32,
}

impl SeedSummary {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.policy,
            self.seed,
            self.final_window_reward,
            self.eval_mean_rounds,
            self.eval_tasks_completed
        )
    }

    fn parse(line: &str) -> Result<Self, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(HarnessError::Metrics(format!(
                "expected 5 summary fields in '{line}'"
            )));
        }
        let bad = |what: &str| HarnessError::Metrics(format!("bad {what} in '{line}'"));
        Ok(SeedSummary {
            policy: fields[0].to_owned(),
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            final_window_reward: fields[2].parse().map_err(|_| bad("final_window_reward"))?,
            eval_mean_rounds: fields[3].parse().map_err(|_| bad("eval_mean_rounds"))?,
            eval_tasks_completed: fields[4].parse().map_err(|_| bad("eval_tasks"))?,
        })
    }
}

pub fn write_summary(path: &Path, rows: &[SeedSummary]) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.csv_line());
        out.push_str("\r\n");
    }
    write_file(path, out.as_bytes())
}

pub fn read_summary(path: &Path) -> Result<Vec<SeedSummary>, HarnessError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == SUMMARY_HEADER => {}
        other => {
            return Err(HarnessError::Metrics(format!(
                "unexpected summary header {other:?} in {}",
                path.display()
            )))
        }
    }
    lines.filter(|l| !l.is_empty()).map(SeedSummary::parse).collect()
}

/// Mean and sample standard deviation (n-1 in the denominator; zero for a
/// single observation).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Pooled standard error of the difference of two means.
pub fn pooled_standard_error(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (_, sa) = mean_std(a);
    let (_, sb) = mean_std(b);
    let pooled_var = ((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0);
    (pooled_var * (1.0 / na + 1.0 / nb)).sqrt()
}

/// Mean reward over the final window of a training trace.
pub fn final_window_mean(rewards: &[f64]) -> f64 {
    let n = rewards.len().min(final_window_len(rewards.len()));
    if n == 0 {
        return f64::NAN;
    }
    rewards[rewards.len() - n..].iter().sum::<f64>() / n as f64
}

pub fn write_stats_csv(
    path: &Path,
    rows: &[(String, &str, f64, f64)],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(STATS_HEADER);
    out.push_str("\r\n");
    for (policy, metric, mean, std) in rows {
        out.push_str(&format!("{policy},{metric},{mean},{std}\r\n"));
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_row_round_trips_through_csv() {
        let row = MetricsRow {
            run_id: "ppo-s3".into(),
            seed: 3,
            episode: 17,
            round: 4,
            policy: "ppo".into(),
            reward: -0.12345678901234567,
            cum_tasks_completed: 2,
            bits_spent: 502_780,
            budget_bits: 502_780,
            k_alloc: vec![4, 0, 2],
        };
        let line = row.csv_line();
        assert_eq!(MetricsRow::parse(&line).unwrap(), row);
        assert!(line.contains("4;0;2"));
    }

    #[test]
    fn csv_files_have_fixed_header_and_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\r\n"));
    }

    #[test]
    fn mean_std_and_pooled_se() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);

        let se = pooled_standard_error(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
        // Equal variances of 1.0 pool to 1.0; se = sqrt(1 * (1/3 + 1/3)).
        assert!((se - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn final_window_uses_trailing_episodes() {
        // 20 episodes: window is max(10, 2) = 10, covering rewards 10..19.
        let rewards: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(final_window_len(20), 10);
        assert!((final_window_mean(&rewards) - 14.5).abs() < 1e-12);
        assert!((final_window_mean(&[2.0, 4.0]) - 3.0).abs() < 1e-12);
        // 3000 episodes: the window is the last tenth.
        assert_eq!(final_window_len(3000), 300);
    }
}
