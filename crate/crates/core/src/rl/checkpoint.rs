//! Binary policy checkpoints.
//!
//! Layout (little-endian): magic `RLCK`, format version (u8), policy kind
//! (u8: 0 = dqn, 1 = ppo), network count (u8); then per network a u32
//! layer-size count followed by the u32 sizes, then per layer the
//! row-major f64 weights and the f64 biases; trailing CRC32 over all
//! preceding bytes.

use std::path::Path;

use super::dqn::DqnPolicy;
use super::mlp::{Layer, Mlp};
use super::ppo::PpoPolicy;
use super::RlError;
use crate::protocol::crc32;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RLCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyCheckpoint {
    Dqn(DqnPolicy),
    Ppo(PpoPolicy),
}

impl PolicyCheckpoint {
    pub fn policy_kind(&self) -> &'static str {
        match self {
            PolicyCheckpoint::Dqn(_) => "dqn",
            PolicyCheckpoint::Ppo(_) => "ppo",
        }
    }

    fn kind_byte(&self) -> u8 {
        match self {
            PolicyCheckpoint::Dqn(_) => 0,
            PolicyCheckpoint::Ppo(_) => 1,
        }
    }

    fn nets(&self) -> Vec<&Mlp> {
        match self {
            PolicyCheckpoint::Dqn(p) => vec![&p.net],
            PolicyCheckpoint::Ppo(p) => vec![&p.policy_net, &p.value_net],
        }
    }
}

pub fn encode_checkpoint(ckpt: &PolicyCheckpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.push(ckpt.kind_byte());
    let nets = ckpt.nets();
    out.push(nets.len() as u8);
    for net in nets {
        let sizes = net.layer_sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        for layer in &net.layers {
            for w in &layer.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in &layer.biases {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyCheckpoint, RlError> {
    let fail = |msg: &str| RlError::CheckpointFormat(msg.to_owned());
    if bytes.len() < 11 {
        return Err(fail("too short"));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic"));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(fail("unsupported version"));
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32(&bytes[..bytes.len() - 4]);
    if stored != computed {
        return Err(fail("CRC mismatch"));
    }
    let kind = bytes[5];
    let net_count = bytes[6] as usize;
    let mut pos = 7usize;
    let body_end = bytes.len() - 4;

    let mut take = |n: usize| -> Result<&[u8], RlError> {
        if pos + n > body_end {
            return Err(RlError::CheckpointFormat("truncated body".into()));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };

    let mut nets = Vec::with_capacity(net_count);
    for _ in 0..net_count {
        let size_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if size_count < 2 {
            return Err(fail("network needs at least two layer sizes"));
        }
        let mut sizes = Vec::with_capacity(size_count);
        for _ in 0..size_count {
            sizes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let mut layers = Vec::with_capacity(size_count - 1);
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let mut weights = Vec::with_capacity(n_in * n_out);
            for _ in 0..n_in * n_out {
                weights.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            let mut biases = Vec::with_capacity(n_out);
            for _ in 0..n_out {
                biases.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            layers.push(Layer {
                in_dim: n_in,
                out_dim: n_out,
                weights,
                biases,
            });
        }
        nets.push(Mlp { layers });
    }
    if pos != body_end {
        return Err(fail("trailing bytes in body"));
    }

    match (kind, nets.len()) {
        (0, 1) => {
            let net = nets.pop().unwrap();
            Ok(PolicyCheckpoint::Dqn(DqnPolicy { net }))
        }
        (1, 2) => {
            let value_net = nets.pop().unwrap();
            let policy_net = nets.pop().unwrap();
            Ok(PolicyCheckpoint::Ppo(PpoPolicy {
                policy_net,
                value_net,
            }))
        }
        _ => Err(fail("unknown policy kind / net count combination")),
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &PolicyCheckpoint) -> Result<(), RlError> {
    std::fs::write(path, encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyCheckpoint, RlError> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn sample_ppo() -> PolicyCheckpoint {
        let mut rng = seeds::rng_from(4, "ckpt");
        PolicyCheckpoint::Ppo(PpoPolicy {
            policy_net: Mlp::new(&[14, 64, 64, 125], &mut rng),
            value_net: Mlp::new(&[14, 64, 64, 1], &mut rng),
        })
    }

    #[test]
    fn round_trips_bit_exactly() {
        let ckpt = sample_ppo();
        let bytes = encode_checkpoint(&ckpt);
        assert_eq!(&bytes[0..4], b"RLCK");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ckpt, back);

        let mut rng = seeds::rng_from(5, "ckpt-dqn");
        let dqn = PolicyCheckpoint::Dqn(DqnPolicy {
            net: Mlp::new(&[2, 64, 64, 2], &mut rng),
        });
        let back = decode_checkpoint(&encode_checkpoint(&dqn)).unwrap();
        assert_eq!(dqn, back);
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let bytes = encode_checkpoint(&sample_ppo());

        let mut flipped = bytes.clone();
        flipped[100] ^= 0xff;
        assert!(matches!(
            decode_checkpoint(&flipped),
            Err(RlError::CheckpointFormat(msg)) if msg.contains("CRC")
        ));

        assert!(decode_checkpoint(&bytes[..bytes.len() - 9]).is_err());

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad_magic),
            Err(RlError::CheckpointFormat(msg)) if msg.contains("magic")
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.rlck");
        let ckpt = sample_ppo();
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }
}
