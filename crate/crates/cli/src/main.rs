//! Command-line entry point: run experiments, compare completed runs,
//! validate configs, and execute the self-test oracle suites.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 i/o error,
//! 4 failed ordering check in `compare` (or a failed selftest oracle).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ramsemcom_core::harness::{
    self, validate_config, ExperimentConfig, HarnessError,
};

/// Environment variable that overrides the configured seed list with a
/// single seed.
const SEED_ENV: &str = "RAMSEMCOM_SEED";

#[derive(Parser)]
#[command(
    name = "ramsemcom",
    about = "Round-based simulator of retrieval-augmented semantic communication \
             with learned patch scheduling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (if learned) and evaluate one policy across seeds.
    Run(RunArgs),
    /// Compare two or more completed run directories.
    Compare(CompareArgs),
    /// Validate a config file and echo the fully-resolved form.
    Validate(ValidateArgs),
    /// Execute the oracle suites (capacity, gradients, retrieval, wire
    /// goldens, toy decision processes).
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Policy name; overrides the config
    /// (ppo, dqn, heuristic, random_k, fixed_k, no_retrieval).
    #[arg(long)]
    policy: Option<String>,
    /// Seed range `a..b` (inclusive) or a single seed; overrides the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate an existing policy checkpoint instead of training.
    #[arg(long)]
    load_checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Completed run directories (at least two).
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Where the comparison CSVs are written.
    #[arg(long, default_value = "compare_report")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Validate(args) => validate(args),
        Command::Selftest => selftest(),
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range start '{a}'"))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range end '{b}'"))?;
        if hi < lo {
            return Err(format!("empty seed range {lo}..{hi}"));
        }
        Ok((lo..=hi).collect())
    } else {
        spec.trim()
            .parse()
            .map(|s| vec![s])
            .map_err(|_| format!("bad seed '{spec}'"))
    }
}

fn load_run_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(policy) = &args.policy {
        cfg.policy = policy.clone();
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let seed: u64 = seed
            .parse()
            .map_err(|_| format!("{SEED_ENV} must be an integer, got '{seed}'"))?;
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match load_run_config(&args) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    let outcome = if let Some(ckpt) = &args.load_checkpoint {
        harness::run_evaluation_only(&cfg, ckpt)
    } else {
        harness::run_experiment(&cfg)
    };
    match outcome {
        Ok(outcome) => {
            println!(
                "run complete: policy {} over {} seeds -> {}",
                outcome.policy,
                outcome.seeds.len(),
                outcome.out_dir.display()
            );
            if args.load_checkpoint.is_none() {
                println!(
                    "mean final-window reward {:.4}, mean eval rounds {:.3}",
                    outcome.mean_final_window_reward(),
                    outcome.mean_eval_rounds()
                );
            } else {
                println!("mean eval rounds {:.3}", outcome.mean_eval_rounds());
            }
            if outcome.violations > 0 {
                eprintln!("WARNING: {} invariant violations recorded", outcome.violations);
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(e),
    }
}

fn compare(args: CompareArgs) -> ExitCode {
    match harness::compare(&args.dirs, &args.out) {
        Ok(report) => {
            print!("{}", report.render_table());
            println!("report files written to {}", args.out.display());
            if report.ordering_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => report(e),
    }
}

fn validate(args: ValidateArgs) -> ExitCode {
    match validate_config(&args.config) {
        Ok(cfg) => {
            print!("{}", cfg.to_toml());
            ExitCode::SUCCESS
        }
        Err(HarnessError::ConfigIssues(issues)) => {
            for issue in &issues {
                eprintln!("error: {issue}");
            }
            eprintln!("{} issue(s) found", issues.len());
            ExitCode::from(2)
        }
        Err(e) => report(e),
    }
}

fn selftest() -> ExitCode {
    let reports = harness::run_selftest();
    let mut all_ok = true;
    for r in &reports {
        println!(
            "{} {:<12} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all_ok &= r.passed;
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

fn report(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
