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

// Budget-aware: scale the need-based request by the upcoming budget.
struct BudgetAware;
impl SchedulerPolicy for BudgetAware {
    fn name(&self) -> &str { "budget_aware" }
    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize {
        let scale = state.budget_norm.max(0.1);
        let k: Vec<u8> = state.agents.iter().map(|a| {
            if a.task_done { return 0; }
            let need = ((a.uncertainty - 0.2) * 6.0).ceil().max(1.0);
            ((need * scale).round().max(1.0) as u8).min(space.k_max)
        }).collect();
        space.index_of(&Allocation(k))
    }
}

fn eval_policy(cfg: &ExperimentConfig, policy: &mut dyn SchedulerPolicy, episodes: u64, label: &str) {
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
    println!("{label:<22} reward {:7.4} rounds {:5.2} tasks {:4.2}", tot_r/n, tot_rounds/n, tot_tasks/n);
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.channel.fading.enabled = true;
    println!("--- fading ON [-5,+5] dB ---");
    eval_policy(&cfg, &mut HeuristicUncertaintyPolicy, 200, "heuristic");
    eval_policy(&cfg, &mut NeedPolicy, 200, "need");
    eval_policy(&cfg, &mut BudgetAware, 200, "budget_aware");
    eval_policy(&cfg, &mut RandomKPolicy::new(1), 200, "random_k");
    eval_policy(&cfg, &mut FixedKPolicy{c:2}, 200, "fixed_k(2)");
}
