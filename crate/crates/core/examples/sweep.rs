use ramsemcom_core::harness::{run_experiment, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // args: policy episodes [key=val ...]
    let policy = args.get(1).cloned().unwrap_or_else(|| "ppo".into());
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seeds: Vec<u64> = (0..6).collect();

    let mut cfg = ExperimentConfig::default();
    cfg.policy = policy.clone();
    cfg.episodes = episodes;
    cfg.seeds = seeds;
    cfg.out = format!("/tmp/sweep/{policy}");
    for kv in args.iter().skip(3) {
        let (k, v) = kv.split_once('=').expect("key=val");
        match k {
            "ppo.lr" => cfg.ppo.learning_rate = v.parse().unwrap(),
            "ppo.rollout" => cfg.ppo.rollout_steps = v.parse().unwrap(),
            "ppo.epochs" => cfg.ppo.epochs = v.parse().unwrap(),
            "ppo.minibatch" => cfg.ppo.minibatch_size = v.parse().unwrap(),
            "ppo.entropy" => cfg.ppo.entropy_coef = v.parse().unwrap(),
            "ppo.gamma" => cfg.ppo.gamma = v.parse().unwrap(),
            "dqn.lr" => cfg.dqn.learning_rate = v.parse().unwrap(),
            "dqn.eps_decay" => cfg.dqn.epsilon_decay_steps = v.parse().unwrap(),
            "dqn.eps_end" => cfg.dqn.epsilon_end = v.parse().unwrap(),
            "dqn.sync" => cfg.dqn.target_sync_interval = v.parse().unwrap(),
            "dqn.update_interval" => cfg.dqn.update_interval = v.parse().unwrap(),
            "dqn.batch" => cfg.dqn.batch_size = v.parse().unwrap(),
            "dqn.gamma" => cfg.dqn.gamma = v.parse().unwrap(),
            other => panic!("unknown key {other}"),
        }
    }
    let t0 = std::time::Instant::now();
    let outcome = run_experiment(&cfg).unwrap();
    let finals: Vec<f64> = outcome.seeds.iter().map(|s| s.final_window_reward).collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let var = finals.iter().map(|v| (v-mean)*(v-mean)).sum::<f64>() / (finals.len() as f64 - 1.0);
    let rounds = outcome.mean_eval_rounds();
    let tasks: f64 = outcome.seeds.iter().map(|s| s.eval.tasks_completed as f64).sum::<f64>() / outcome.seeds.len() as f64;
    let per_seed: Vec<String> = finals.iter().map(|f| format!("{f:.3}")).collect();
    println!("{policy:<10} ep={episodes:<5} final {mean:7.4} +/- {:6.4}  rounds {rounds:6.3}  tasks {tasks:5.2}/30  [{:5.1}s] seeds: {}",
        var.sqrt(), t0.elapsed().as_secs_f64(), per_seed.join(" "));
}
