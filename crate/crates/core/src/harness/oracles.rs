//! Self-check oracle suites: independent verifications of the capacity
//! formula, the MLP gradients, exact retrieval, the frozen wire-format
//! bytes, and trainer optimality on the toy decision processes. Run by
//! the CLI `selftest` verb and re-used by the acceptance tests.

use rayon::prelude::*;

use crate::protocol::{ContextBlock, ProtocolError};
use crate::rl::toy::{chain_q_star, ChainMdp, TwoArmedBandit};
use crate::rl::{train_dqn, train_ppo, DqnConfig, Mlp, PpoConfig};
use crate::seeds;
use crate::store::PatchIndex;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl OracleReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

/// Runs every oracle suite and reports one line each.
pub fn run_selftest() -> Vec<OracleReport> {
    vec![
        check_capacity(),
        check_gradients(),
        check_top_k(),
        check_wire_goldens(),
        check_toy_mdps(),
    ]
}

/// The channel capacity at the published operating point: 1 MHz at 15 dB
/// must give 5.03 Mbps within 0.01 Mbps.
pub fn check_capacity() -> OracleReport {
    let c = match crate::channel::shannon_capacity(1_000_000.0, 15.0) {
        Ok(c) => c,
        Err(e) => return OracleReport::new("capacity", false, e.to_string()),
    };
    let ok = (c - 5.03e6).abs() <= 0.01e6;
    OracleReport::new(
        "capacity",
        ok,
        format!("shannon_capacity(1 MHz, 15 dB) = {:.6} Mbps (target 5.03 +/- 0.01)", c / 1e6),
    )
}

/// Analytic gradients against central finite differences (h = 1e-5) over
/// every parameter of 20 random 14-64-64-125 networks.
pub fn check_gradients() -> OracleReport {
    const NETS: usize = 20;
    const H: f64 = 1e-5;
    const TOLERANCE: f64 = 1e-4;

    let max_rel = (0..NETS as u64)
        .into_par_iter()
        .map(|net_seed| {
            let mut rng = seeds::rng_from(net_seed, "gradcheck");
            let net = Mlp::new(&[14, 64, 64, 125], &mut rng);
            let x: Vec<f64> = (0..14).map(|_| seeds::gaussian(&mut rng)).collect();
            let upstream: Vec<f64> = (0..125).map(|_| seeds::gaussian(&mut rng)).collect();
            let trace = net.forward_trace(&x);
            let grads = net.backward(&trace, &upstream);

            let eval = |net: &Mlp| -> f64 {
                net.forward(&x)
                    .iter()
                    .zip(&upstream)
                    .map(|(y, u)| y * u)
                    .sum()
            };

            let mut probe = net.clone();
            let mut worst = 0.0f64;
            for l in 0..net.layers.len() {
                for i in 0..net.layers[l].weights.len() {
                    let orig = probe.layers[l].weights[i];
                    probe.layers[l].weights[i] = orig + H;
                    let plus = eval(&probe);
                    probe.layers[l].weights[i] = orig - H;
                    let minus = eval(&probe);
                    probe.layers[l].weights[i] = orig;
                    let numeric = (plus - minus) / (2.0 * H);
                    let analytic = grads.layers[l].weights[i];
                    let rel =
                        (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
                for i in 0..net.layers[l].biases.len() {
                    let orig = probe.layers[l].biases[i];
                    probe.layers[l].biases[i] = orig + H;
                    let plus = eval(&probe);
                    probe.layers[l].biases[i] = orig - H;
                    let minus = eval(&probe);
                    probe.layers[l].biases[i] = orig;
                    let numeric = (plus - minus) / (2.0 * H);
                    let analytic = grads.layers[l].biases[i];
                    let rel =
                        (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    OracleReport::new(
        "gradients",
        max_rel < TOLERANCE,
        format!("max relative error {max_rel:.3e} over {NETS} nets (tolerance {TOLERANCE:.0e})"),
    )
}

/// Exact retrieval against a full-sort oracle, tie order included, over
/// 1000 random instances with forced ties and exclusion sets.
pub fn check_top_k() -> OracleReport {
    let mut rng = seeds::rng_from(2024, "topk-acceptance");
    let dim = 16;
    for case in 0..1000 {
        let p: usize = rng.gen_range(1..=100);
        let mut entries: Vec<(u64, Vec<f64>)> = Vec::with_capacity(p);
        for id in 0..p as u64 {
            let emb = if id > 0 && rng.gen::<f64>() < 0.3 {
                entries[rng.gen_range(0..entries.len())].1.clone()
            } else {
                crate::model::random_unit_vector(&mut rng, dim)
            };
            entries.push((id, emb));
        }
        let exclude: std::collections::BTreeSet<u64> =
            (0..p as u64).filter(|_| rng.gen::<f64>() < 0.2).collect();
        let query = crate::model::random_unit_vector(&mut rng, dim);
        let k = rng.gen_range(0..=p);

        let mut oracle: Vec<(u64, f64)> = entries
            .iter()
            .filter(|(id, _)| !exclude.contains(id))
            .map(|(id, e)| {
                let mut s = 0.0;
                for d in 0..dim {
                    s += e[d] * query[d];
                }
                (*id, s)
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        oracle.truncate(k);

        let index = PatchIndex::new(dim, entries);
        let got = match index.top_k(&query, k, &exclude) {
            Ok(got) => got,
            Err(e) => return OracleReport::new("top_k", false, e.to_string()),
        };
        if got != oracle {
            return OracleReport::new(
                "top_k",
                false,
                format!("case {case}: mismatch against full-sort oracle (P={p}, k={k})"),
            );
        }
    }
    OracleReport::new("top_k", true, "1000 instances match the full-sort oracle".into())
}

/// The three canonical context blocks frozen as golden byte files.
pub fn canonical_blocks() -> [ContextBlock; 3] {
    [
        ContextBlock {
            source_id: 1,
            timestamp_ms: 0,
            priority: 0,
            tags: vec!["a".into()],
            payload: vec![],
            version: 1,
        },
        ContextBlock {
            source_id: 42,
            timestamp_ms: 1_723_456_789_012,
            priority: 7,
            tags: vec!["traffic".into(), "north".into(), "sensor:3".into()],
            payload: (0u8..32).collect(),
            version: 9,
        },
        ContextBlock {
            source_id: u32::MAX,
            timestamp_ms: u64::MAX,
            priority: 255,
            tags: vec!["café".into(), "号".into()],
            payload: vec![0xDE, 0xAD, 0xBE, 0xEF],
            version: u32::MAX,
        },
    ]
}

/// Golden bytes for the canonical blocks, frozen in the repository.
pub fn golden_bytes() -> [&'static [u8]; 3] {
    [
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/golden/block_minimal.bin")),
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/golden/block_typical.bin")),
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/golden/block_edge.bin")),
    ]
}

/// Encoding must reproduce the golden bytes exactly; decoding must invert
/// them; and each mutated golden must fire its decode error path.
pub fn check_wire_goldens() -> OracleReport {
    let blocks = canonical_blocks();
    let goldens = golden_bytes();
    for (i, (block, golden)) in blocks.iter().zip(goldens).enumerate() {
        let encoded = match block.encode() {
            Ok(b) => b,
            Err(e) => return OracleReport::new("wire_goldens", false, e.to_string()),
        };
        if encoded != golden {
            return OracleReport::new(
                "wire_goldens",
                false,
                format!("canonical block {i} no longer matches its golden bytes"),
            );
        }
        match ContextBlock::decode(golden) {
            Ok(decoded) if &decoded == block => {}
            other => {
                return OracleReport::new(
                    "wire_goldens",
                    false,
                    format!("golden {i} failed to decode back: {other:?}"),
                )
            }
        }
    }

    // Error paths on mutated goldens: magic, CRC, truncation.
    let golden = goldens[1];
    let mut bad_magic = golden.to_vec();
    bad_magic[0] ^= 0xFF;
    if !matches!(
        ContextBlock::decode(&bad_magic),
        Err(ProtocolError::BadMagic(_))
    ) {
        return OracleReport::new("wire_goldens", false, "magic mutation not caught".into());
    }
    let mut corrupt = golden.to_vec();
    let mid = corrupt.len() - 10;
    corrupt[mid] ^= 0x01;
    if !matches!(
        ContextBlock::decode(&corrupt),
        Err(ProtocolError::CrcMismatch { .. })
    ) {
        return OracleReport::new("wire_goldens", false, "payload corruption not caught".into());
    }
    if !matches!(
        ContextBlock::decode(&golden[..golden.len() - 5]),
        Err(ProtocolError::Truncated { .. })
    ) {
        return OracleReport::new("wire_goldens", false, "truncation not caught".into());
    }

    OracleReport::new(
        "wire_goldens",
        true,
        "3 golden blocks stable; magic/CRC/truncation errors fire".into(),
    )
}

/// Canonical trainer settings for the chain oracle.
pub fn chain_dqn_config() -> DqnConfig {
    DqnConfig {
        learning_rate: 5e-4,
        gamma: 0.9,
        buffer_capacity: 20_000,
        batch_size: 32,
        epsilon_start: 1.0,
        epsilon_end: 0.1,
        epsilon_decay_steps: 3_000,
        target_sync_interval: 250,
        update_interval: 2,
        episodes: 800,
        loss_guard: 1e6,
    }
}

/// Canonical trainer settings for the bandit oracle.
pub fn bandit_ppo_config() -> PpoConfig {
    PpoConfig {
        learning_rate: 3e-3,
        gamma: 0.99,
        gae_lambda: 0.95,
        clip: 0.2,
        epochs: 4,
        minibatch_size: 32,
        entropy_coef: 0.01,
        value_coef: 0.5,
        rollout_steps: 128,
        episodes: 1200,
        non_finite_limit: 20,
    }
}

/// DQN must recover the value-iteration optimum on the two-state chain
/// (max |Q - Q*| < 0.05) and PPO must prefer the better bandit arm with
/// probability above 0.95.
pub fn check_toy_mdps() -> OracleReport {
    let cfg = chain_dqn_config();
    let mut chain = ChainMdp::new(30);
    let dqn = match train_dqn(&mut chain, &cfg, 7) {
        Ok(r) => r,
        Err(e) => return OracleReport::new("toy_mdps", false, e.to_string()),
    };
    let q_star = chain_q_star(cfg.gamma);
    let mut max_err = 0.0f64;
    for s in 0..2 {
        let q = dqn.policy.q_values(&ChainMdp::encode(s));
        for a in 0..2 {
            max_err = max_err.max((q[a] - q_star[s][a]).abs());
        }
        let greedy = dqn.policy.greedy_action(&ChainMdp::encode(s));
        let optimal = if q_star[s][0] >= q_star[s][1] { 0 } else { 1 };
        if greedy != optimal {
            return OracleReport::new(
                "toy_mdps",
                false,
                format!("DQN greedy action {greedy} != optimal {optimal} in state {s}"),
            );
        }
    }
    if max_err >= 0.05 {
        return OracleReport::new(
            "toy_mdps",
            false,
            format!("DQN max |Q - Q*| = {max_err:.4} (tolerance 0.05)"),
        );
    }

    let mut bandit = TwoArmedBandit::new(1.0, 0.0);
    let ppo = match train_ppo(&mut bandit, &bandit_ppo_config(), 5) {
        Ok(r) => r,
        Err(e) => return OracleReport::new("toy_mdps", false, e.to_string()),
    };
    let probs = ppo.policy.action_probabilities(&TwoArmedBandit::state());
    let p_better = probs[bandit.better_arm()];
    if p_better <= 0.95 {
        return OracleReport::new(
            "toy_mdps",
            false,
            format!("PPO better-arm probability {p_better:.4} (needs > 0.95)"),
        );
    }

    OracleReport::new(
        "toy_mdps",
        true,
        format!("DQN max |Q - Q*| = {max_err:.4}; PPO better-arm p = {p_better:.4}"),
    )
}
