use crate::ledger::{validate_chain, Block, BlockHeader, Chain, Hash};

use super::SimError;

/// True if `hash` starts with at least `difficulty` zero bits.
pub fn meets_difficulty(hash: &Hash, difficulty: u32) -> bool {
    hash.leading_zero_bits() >= difficulty
}

/// `template` with the 8-byte big-endian `nonce` appended to its meta.
pub fn with_nonce(template: &BlockHeader, nonce: u64) -> BlockHeader {
    let mut h = template.clone();
    h.meta.extend_from_slice(&nonce.to_be_bytes());
    h
}

/// Searches nonces from 0 upward until the header hash meets `difficulty`.
/// The number of attempts is the returned nonce plus one.
pub fn pow_mine(template: &BlockHeader, difficulty: u32) -> u64 {
    let mut header = with_nonce(template, 0);
    let at = header.meta.len() - 8;
    for nonce in 0u64.. {
        header.meta[at..].copy_from_slice(&nonce.to_be_bytes());
        let hash = header.hash().expect("template meta fits its bound");
        if meets_difficulty(&hash, difficulty) {
            return nonce;
        }
    }
    unreachable!("nonce space exhausted")
}

/// True if every block from `from_height` on meets the difficulty.
pub fn chain_meets_difficulty(chain: &Chain, from_height: u64, difficulty: u32) -> bool {
    chain.blocks().iter().skip(from_height as usize).all(|b| meets_difficulty(&b.block_hash, difficulty))
}

/// Orders chains by length, then by smaller tip hash.
pub fn fork_key(chain: &Chain) -> (usize, std::cmp::Reverse<Hash>) {
    (chain.len(), std::cmp::Reverse(chain.tip_hash()))
}

/// Longest valid chain; equal lengths go to the lexicographically smaller tip hash.
pub fn fork_choice(candidates: &[Chain]) -> Result<&Chain, SimError> {
    for (i, c) in candidates.iter().enumerate() {
        if c.is_empty() {
            return Err(SimError::InvalidCandidate(format!("candidate {i} is empty")));
        }
        validate_chain(c).map_err(|f| SimError::InvalidCandidate(format!("candidate {i}: {f}")))?;
    }
    candidates.iter().max_by_key(|c| fork_key(c)).ok_or_else(|| SimError::InvalidCandidate("no candidates".into()))
}

/// Meta prefix of a mined block: `pow`, the miner index, then the nonce.
pub fn pow_meta_prefix(miner: u32) -> Vec<u8> {
    let mut m = b"pow".to_vec();
    m.extend_from_slice(&miner.to_be_bytes());
    m
}

/// Miner index recorded in a mined block's meta.
pub fn pow_miner(block: &Block) -> Option<u32> {
    let m = &block.header.meta;
    (m.len() == 15 && m.starts_with(b"pow")).then(|| u32::from_be_bytes(m[3..7].try_into().unwrap()))
}
