use ramsemcom_core::harness::ExperimentConfig;
use ramsemcom_core::rl::train_ppo;
use ramsemcom_core::scheduler::*;
use ramsemcom_core::seeds;

fn trace(env: &mut SchedulerEnv, policy: &mut dyn SchedulerPolicy, seed: u64, label: &str) {
    let space = env.action_space();
    let mut state = env.reset(seed).unwrap();
    println!("--- {label} seed {seed} ---");
    let mut total = 0.0;
    loop {
        let a = policy.select_action(&state, &space);
        let alloc = space.allocation(a);
        let us: Vec<String> = state.agents.iter().map(|x| format!("{:.2}", x.uncertainty)).collect();
        let ts: Vec<String> = state.agents.iter().map(|x| format!("{:.2}", x.top_similarity)).collect();
        let out = env.step(a).unwrap();
        total += out.reward;
        println!("  u=[{}] sim=[{}] k={:?} bits={:>6}k r={:+.3} done={}",
            us.join(","), ts.join(","), alloc.as_slice(),
            out.info.bits_spent/1000, out.reward, out.done);
        state = out.state;
        if out.done { break; }
    }
    println!("  episode reward {total:.4}");
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.episodes = 3000;
    cfg.ppo.rollout_steps = 128;
    cfg.ppo.epochs = 8;
    cfg.ppo.learning_rate = 1e-3;
    cfg.ppo.entropy_coef = 0.001;
    cfg.ppo.gamma = 1.0;

    let mut env = SchedulerEnv::new(cfg.env_config().unwrap()).unwrap();
    let res = train_ppo(&mut env, &cfg.ppo_config(), 0).unwrap();

    // Greedy reward on the exact trailing training scenes vs the stochastic tail.
    let tail_stochastic: f64 = res.episode_rewards[cfg.episodes-10..].iter().sum::<f64>() / 10.0;
    let mut p = res.policy;
    let space = env.action_space();
    let mut greedy_tail = 0.0;
    for ep in cfg.episodes-10..cfg.episodes {
        let mut state = env.reset(seeds::train_episode_seed(0, ep)).unwrap();
        loop {
            let a = p.select_action(&state, &space);
            let out = env.step(a).unwrap();
            greedy_tail += out.reward;
            state = out.state;
            if out.done { break; }
        }
    }
    println!("tail stochastic {tail_stochastic:.4} vs greedy same scenes {:.4}", greedy_tail / 10.0);

    trace(&mut env, &mut p, 777, "ppo greedy");
    trace(&mut env, &mut HeuristicUncertaintyPolicy, 777, "heuristic");
}
