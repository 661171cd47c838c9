use ramsemcom_core::harness::ExperimentConfig;
use ramsemcom_core::scheduler::*;
use ramsemcom_core::seeds;

struct NeedPolicy { flush: bool }
impl SchedulerPolicy for NeedPolicy {
    fn name(&self) -> &str { "need" }
    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize {
        // estimated patches still needed to cross theta=0.8 with ~equal weights (C=6)
        let k: Vec<u8> = state.agents.iter().map(|a| {
            if a.task_done { return 0; }
            let need = ((a.uncertainty - 0.2) * 6.0).ceil().max(1.0);
            let mut k = (need as u8).min(space.k_max);
            if self.flush && a.top_similarity < 0.40 { k = space.k_max; }
            k
        }).collect();
        space.index_of(&Allocation(k))
    }
}

struct SerialFlood;
impl SchedulerPolicy for SerialFlood {
    fn name(&self) -> &str { "serial" }
    fn select_action(&mut self, state: &EnvState, space: &ActionSpace) -> usize {
        // focus the budget: most uncertain incomplete agent gets 3, next 1
        let mut order: Vec<usize> = (0..state.agents.len()).collect();
        order.sort_by(|&a, &b| state.agents[b].uncertainty.partial_cmp(&state.agents[a].uncertainty).unwrap());
        let mut k = vec![0u8; state.agents.len()];
        let mut first = true;
        for &i in &order {
            let a = &state.agents[i];
            if a.task_done { continue; }
            let need = ((a.uncertainty - 0.2) * 6.0).ceil().max(1.0) as u8;
            k[i] = if first { need.min(3).max(1) } else { 1 };
            first = false;
        }
        space.index_of(&Allocation(k))
    }
}

fn eval_policy(cfg: &ExperimentConfig, policy: &mut dyn SchedulerPolicy, episodes: u64, label: &str) {
    let mut env = SchedulerEnv::new(cfg.env_config().unwrap()).unwrap();
    let space = env.action_space();
    let (mut tot_r, mut tot_rounds, mut tot_util) = (0.0, 0.0, 0.0);
    for ep in 0..episodes {
        let mut state = env.reset(seeds::derive_seed_indexed(999_000, "diag-ep", ep)).unwrap();
        loop {
            let a = policy.select_action(&state, &space);
            let out = env.step(a).unwrap();
            tot_r += out.reward;
            tot_util += out.info.bits_spent as f64 / out.info.budget_bits as f64;
            state = out.state;
            if out.done { break; }
        }
        tot_rounds += env.take_history().pop().unwrap().rounds_used() as f64;
    }
    let n = episodes as f64;
    println!("{label:<22} reward {:7.4} rounds {:5.2} util {:5.2}", tot_r/n, tot_rounds/n, tot_util/n);
}

fn main() {
    let cfg = ExperimentConfig::default();
    eval_policy(&cfg, &mut HeuristicUncertaintyPolicy, 200, "heuristic");
    eval_policy(&cfg, &mut NeedPolicy{flush:false}, 200, "need");
    eval_policy(&cfg, &mut NeedPolicy{flush:true}, 200, "need+flush");
    eval_policy(&cfg, &mut SerialFlood, 200, "serial-focus");
    eval_policy(&cfg, &mut FixedKPolicy{c:1}, 200, "fixed_k(1)");
    eval_policy(&cfg, &mut FixedKPolicy{c:2}, 200, "fixed_k(2)");
}
