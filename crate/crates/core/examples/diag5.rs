use ramsemcom_core::harness::ExperimentConfig;
use ramsemcom_core::scheduler::*;
use ramsemcom_core::seeds;

struct NeedPolicy;
impl SchedulerPolicy for NeedPolicy {
    fn name(&self) -> &str { "need" }
    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize {
        let k: Vec<u8> = state.agents.iter().map(|a| {
            if a.task_done { return 0; }
            let need = ((a.uncertainty - 0.2) * 6.0).ceil().max(1.0);
            (need as u8).min(space.k_max)
        }).collect();
        space.index_of(&Allocation(k))
    }
}

fn eval_policy(cfg: &ExperimentConfig, policy: &mut dyn SchedulerPolicy, episodes: u64) -> (f64, f64, f64) {
    let mut env = SchedulerEnv::new(cfg.env_config().unwrap()).unwrap();
    let space = env.action_space();
    let (mut tot_r, mut tot_rounds, mut tot_tasks) = (0.0, 0.0, 0.0);
    for ep in 0..episodes {
        let mut state = env.reset(seeds::derive_seed_indexed(999_000, "diag-ep", ep)).unwrap();
        loop {
            let a = policy.select_action(&state, &space);
            let out = env.step(a).unwrap();
            tot_r += out.reward;
            state = out.state;
            if out.done { break; }
        }
        let log = env.take_history().pop().unwrap();
        tot_rounds += log.rounds_used() as f64;
        tot_tasks += log.tasks_completed as f64;
    }
    let n = episodes as f64;
    (tot_r / n, tot_rounds / n, tot_tasks / n)
}

fn main() {
    for duration in [0.08, 0.07, 0.06, 0.05] {
        let mut cfg = ExperimentConfig::default();
        cfg.channel.round_duration_s = duration;
        println!("=== round_duration {duration} s (budget {} bits) ===",
            cfg.channel_model().unwrap().round_budget(1).budget_bits);
        let pols: Vec<(&str, Box<dyn SchedulerPolicy>)> = vec![
            ("heuristic", Box::new(HeuristicUncertaintyPolicy)),
            ("need", Box::new(NeedPolicy)),
            ("random_k", Box::new(RandomKPolicy::new(1))),
            ("fixed_k(1)", Box::new(FixedKPolicy{c:1})),
            ("fixed_k(2)", Box::new(FixedKPolicy{c:2})),
            ("no_retrieval", Box::new(NoRetrievalPolicy)),
        ];
        for (label, mut p) in pols {
            let (r, rounds, tasks) = eval_policy(&cfg, p.as_mut(), 120);
            println!("  {label:<14} reward {r:7.4} rounds {rounds:5.2} tasks {tasks:4.2}");
        }
    }
}
