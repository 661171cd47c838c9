use ramsemcom_core::harness::ExperimentConfig;
use ramsemcom_core::rl::{train_ppo, train_dqn};
use ramsemcom_core::scheduler::*;
use ramsemcom_core::seeds;

fn eval_policy(cfg: &ExperimentConfig, policy: &mut dyn SchedulerPolicy, episodes: u64) -> (f64, f64, f64, f64) {
    let mut env = SchedulerEnv::new(cfg.env_config().unwrap()).unwrap();
    let space = env.action_space();
    let (mut tot_r, mut tot_rounds, mut tot_util, mut tot_tasks) = (0.0, 0.0, 0.0, 0.0);
    for ep in 0..episodes {
        let mut state = env.reset(seeds::derive_seed_indexed(999_000, "diag-ep", ep)).unwrap();
        let mut r_sum = 0.0;
        loop {
            let a = policy.select_action(&state, &space);
            let out = env.step(a).unwrap();
            r_sum += out.reward;
            tot_util += out.info.bits_spent as f64 / out.info.budget_bits as f64;
            state = out.state;
            if out.done { break; }
        }
        let log = env.take_history().pop().unwrap();
        tot_r += r_sum;
        tot_rounds += log.rounds_used() as f64;
        tot_tasks += log.tasks_completed as f64;
    }
    let n = episodes as f64;
    (tot_r / n, tot_rounds / n, tot_util / n, tot_tasks / n)
}

fn main() {
    let cfg = ExperimentConfig::default();
    let episodes = 50u64;

    let mut h = HeuristicUncertaintyPolicy;
    let (r, rounds, util, tasks) = eval_policy(&cfg, &mut h, episodes);
    println!("heuristic greedy: reward {r:7.4} rounds {rounds:5.2} util {util:5.2} tasks {tasks:4.2}");

    let mut train_cfg = cfg.clone();
    train_cfg.episodes = 2000;
    train_cfg.ppo.rollout_steps = 128;
    train_cfg.ppo.epochs = 8;
    train_cfg.ppo.learning_rate = 1e-3;
    train_cfg.ppo.entropy_coef = 0.001;
    let mut env = SchedulerEnv::new(train_cfg.env_config().unwrap()).unwrap();
    let res = train_ppo(&mut env, &train_cfg.ppo_config(), 0).unwrap();
    let tail: f64 = res.episode_rewards[res.episode_rewards.len()-10..].iter().sum::<f64>() / 10.0;
    let mut p = res.policy;
    let (r, rounds, util, tasks) = eval_policy(&cfg, &mut p, episodes);
    println!("ppo greedy:       reward {r:7.4} rounds {rounds:5.2} util {util:5.2} tasks {tasks:4.2}  (train tail {tail:.4})");

    let mut dqn_cfg = cfg.clone();
    dqn_cfg.episodes = 1500;
    dqn_cfg.dqn.learning_rate = 5e-4;
    dqn_cfg.dqn.epsilon_decay_steps = 6000;
    dqn_cfg.dqn.epsilon_end = 0.02;
    dqn_cfg.dqn.target_sync_interval = 300;
    let mut env = SchedulerEnv::new(dqn_cfg.env_config().unwrap()).unwrap();
    let res = train_dqn(&mut env, &dqn_cfg.dqn_config(), 0).unwrap();
    let tail: f64 = res.episode_rewards[res.episode_rewards.len()-10..].iter().sum::<f64>() / 10.0;
    let mut p = res.policy;
    let (r, rounds, util, tasks) = eval_policy(&cfg, &mut p, episodes);
    println!("dqn greedy:       reward {r:7.4} rounds {rounds:5.2} util {util:5.2} tasks {tasks:4.2}  (train tail {tail:.4})");
}
