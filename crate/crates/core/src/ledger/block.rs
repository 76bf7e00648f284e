use serde::Serialize;

use super::codec::{Decoder, Encoder};
use super::hash::{hash_bytes, Hash};
use super::tx::SignedTransaction;
use super::LedgerError;
use crate::exec::Exec;

/// Upper bound on the opaque per-block `meta` field.
pub const MAX_META_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash,
    /// Unix seconds, UTC, assigned by the producer.
    pub timestamp: u64,
    pub tx_root: Hash,
    #[serde(with = "hex_bytes")]
    pub meta: Vec<u8>,
}

mod hex_bytes {
    pub fn serialize<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }
}

impl BlockHeader {
    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let mut e = Encoder::new();
        e.u64(self.height).hash(&self.prev_hash).u64(self.timestamp).hash(&self.tx_root);
        e.bytes("meta", &self.meta, MAX_META_LEN)?;
        Ok(e.finish())
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, LedgerError> {
        Ok(BlockHeader {
            height: d.u64()?,
            prev_hash: d.hash()?,
            timestamp: d.u64()?,
            tx_root: d.hash()?,
            meta: d.bytes("meta", MAX_META_LEN)?.to_vec(),
        })
    }

    pub fn hash(&self) -> Result<Hash, LedgerError> {
        Ok(hash_bytes(&self.encode()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<SignedTransaction>,
    /// Stored digest of the header; recomputed and compared on every validation.
    pub block_hash: Hash,
}

/// Flat hash-of-hashes over the transactions in order.
pub fn tx_root(txs: &[SignedTransaction]) -> Hash {
    let mut cat = Vec::with_capacity(txs.len() * 32);
    for tx in txs {
        cat.extend_from_slice(&tx.hash().0);
    }
    hash_bytes(&cat)
}

/// Builds the successor of `prev`, or a genesis block when `prev` is `None`.
pub fn build_block(
    prev: Option<&Block>,
    txs: Vec<SignedTransaction>,
    timestamp: u64,
    meta: Vec<u8>,
) -> Result<Block, LedgerError> {
    let (height, prev_hash) = match prev {
        None => (0, Hash::ZERO),
        Some(p) => {
            if timestamp < p.header.timestamp {
                return Err(LedgerError::NonMonotonicTimestamp { prev: p.header.timestamp, got: timestamp });
            }
            if txs.is_empty() {
                return Err(LedgerError::EmptyBlock);
            }
            (p.header.height + 1, p.block_hash)
        }
    };
    for tx in &txs {
        tx.encode()?;
    }
    let header = BlockHeader { height, prev_hash, timestamp, tx_root: tx_root(&txs), meta };
    let block_hash = header.hash()?;
    Ok(Block { header, txs, block_hash })
}

impl Block {
    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn is_genesis(&self) -> bool {
        self.header.height == 0 && self.header.prev_hash.is_zero()
    }

    /// Self-contained checks plus the link to `prev` (or the genesis convention).
    pub fn check(&self, expected_height: u64, prev: Option<&Block>) -> Result<(), LedgerError> {
        let h = &self.header;
        if h.height != expected_height {
            return Err(LedgerError::HeightMismatch { expected: expected_height, got: h.height });
        }
        match prev {
            None => {
                if !h.prev_hash.is_zero() {
                    return Err(LedgerError::LinkMismatch { height: h.height });
                }
            }
            Some(p) => {
                if h.prev_hash.is_zero() || h.prev_hash != p.block_hash {
                    return Err(LedgerError::LinkMismatch { height: h.height });
                }
                if h.timestamp < p.header.timestamp {
                    return Err(LedgerError::NonMonotonicTimestamp { prev: p.header.timestamp, got: h.timestamp });
                }
                if self.txs.is_empty() {
                    return Err(LedgerError::EmptyBlock);
                }
            }
        }
        if h.hash()? != self.block_hash {
            return Err(LedgerError::BadBlockHash { height: h.height });
        }
        if tx_root(&self.txs) != h.tx_root {
            return Err(LedgerError::BadTxRoot { height: h.height });
        }
        if let Some(index) = self.txs.iter().position(|tx| !tx.signature_valid()) {
            return Err(LedgerError::BadSignature { height: h.height, index });
        }
        Ok(())
    }

    /// Canonical record: header, stored hash, tx count, then length-prefixed txs.
    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let mut e = Encoder::new();
        e.fixed(&self.header.encode()?).hash(&self.block_hash).u32(self.txs.len() as u32);
        for tx in &self.txs {
            e.bytes("transaction", &tx.encode()?, u32::MAX as usize)?;
        }
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut d = Decoder::new(bytes);
        let header = BlockHeader::decode_from(&mut d)?;
        let block_hash = d.hash()?;
        let n = d.u32()? as usize;
        // each tx needs at least its 4-byte length prefix
        if n > d.remaining() / 4 {
            return Err(LedgerError::Malformed(format!("tx count {n} exceeds record size")));
        }
        let mut txs = Vec::with_capacity(n);
        for _ in 0..n {
            txs.push(SignedTransaction::decode(d.bytes("transaction", u32::MAX as usize)?)?);
        }
        d.finish()?;
        Ok(Block { header, txs, block_hash })
    }
}

/// Where and why a chain first fails validation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("chain invalid at height {height}: {reason}")]
pub struct ChainFault {
    pub height: u64,
    pub reason: LedgerError,
}

/// Append-only list of hash-linked blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_genesis(genesis: Block) -> Result<Self, LedgerError> {
        let mut c = Chain::new();
        c.append(genesis)?;
        Ok(c)
    }

    /// Wraps blocks without checking them; pair with [`validate_chain`].
    pub fn from_blocks_unchecked(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn tip_hash(&self) -> Hash {
        self.tip().map(|b| b.block_hash).unwrap_or(Hash::ZERO)
    }

    pub fn get(&self, height: u64) -> Option<&Block> {
        usize::try_from(height).ok().and_then(|h| self.blocks.get(h))
    }

    /// Appends `block` if it is the valid successor of the current tip.
    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        block.check(self.blocks.len() as u64, self.blocks.last())?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }
}

/// Checks every link, height, tx root, block hash and tx signature; returns the lowest
/// failing height.
pub fn validate_chain(chain: &Chain) -> Result<(), ChainFault> {
    validate_chain_with(chain, Exec::default())
}

pub fn validate_chain_with(chain: &Chain, exec: Exec) -> Result<(), ChainFault> {
    let blocks = chain.blocks();
    match exec.find_first(blocks.len(), |i| {
        let prev = i.checked_sub(1).map(|p| &blocks[p]);
        blocks[i].check(i as u64, prev).err()
    }) {
        None => Ok(()),
        Some((i, reason)) => Err(ChainFault { height: i as u64, reason }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{sign_tx, Keypair, TxPayload};
    use crate::types::TemperatureReading;

    fn tx(n: u64) -> SignedTransaction {
        let kp = Keypair::from_label("sensor");
        sign_tx(&kp, TxPayload::TemperatureReading(TemperatureReading::new("F-1", n, 500)), n).unwrap()
    }

    fn genesis() -> Block {
        let kp = Keypair::from_label("admin");
        build_block(None, vec![sign_tx(&kp, TxPayload::Deploy, 1).unwrap()], 1_000, vec![]).unwrap()
    }

    fn chain_of(n: usize) -> Chain {
        let mut c = Chain::with_genesis(genesis()).unwrap();
        for i in 1..n {
            let b = build_block(c.tip(), vec![tx(i as u64)], 1_000 + i as u64, vec![]).unwrap();
            c.append(b).unwrap();
        }
        c
    }

    #[test]
    fn genesis_convention() {
        let g = genesis();
        assert_eq!(g.header.height, 0);
        assert!(g.header.prev_hash.is_zero());
        assert!(g.is_genesis());
    }

    #[test]
    fn tx_root_is_hash_of_concatenated_tx_hashes() {
        let g = genesis();
        let txs = vec![tx(1), tx(2), tx(3)];
        let b = build_block(Some(&g), txs.clone(), 1_001, vec![]).unwrap();
        let mut cat = Vec::new();
        for t in &txs {
            cat.extend_from_slice(&hash_bytes(&t.encode().unwrap()).0);
        }
        assert_eq!(b.header.tx_root, hash_bytes(&cat));
        assert_eq!(b.header.height, 1);
        assert_eq!(b.header.prev_hash, g.block_hash);
    }

    #[test]
    fn earlier_timestamp_rejected() {
        let g = genesis();
        assert!(matches!(
            build_block(Some(&g), vec![tx(1)], 999, vec![]),
            Err(LedgerError::NonMonotonicTimestamp { prev: 1_000, got: 999 })
        ));
        assert!(build_block(Some(&g), vec![tx(1)], 1_000, vec![]).is_ok());
    }

    #[test]
    fn empty_non_genesis_block_rejected() {
        assert!(matches!(build_block(Some(&genesis()), vec![], 1_001, vec![]), Err(LedgerError::EmptyBlock)));
    }

    #[test]
    fn oversize_meta_rejected() {
        assert!(matches!(
            build_block(None, vec![], 0, vec![0; MAX_META_LEN + 1]),
            Err(LedgerError::OversizeField { field: "meta", .. })
        ));
    }

    #[test]
    fn append_checks_link_height_and_hash() {
        let mut c = chain_of(3);
        let good = build_block(c.tip(), vec![tx(9)], 2_000, vec![]).unwrap();

        let mut wrong_link = good.clone();
        wrong_link.header.prev_hash = hash_bytes(b"elsewhere");
        wrong_link.block_hash = wrong_link.header.hash().unwrap();
        assert!(matches!(c.append(wrong_link), Err(LedgerError::LinkMismatch { height: 3 })));

        let mut wrong_height = good.clone();
        wrong_height.header.height = 7;
        wrong_height.block_hash = wrong_height.header.hash().unwrap();
        assert!(matches!(c.append(wrong_height), Err(LedgerError::HeightMismatch { expected: 3, got: 7 })));

        let mut corrupted = good.clone();
        corrupted.header.timestamp += 1;
        assert!(matches!(c.append(corrupted), Err(LedgerError::BadBlockHash { height: 3 })));

        assert_eq!(c.len(), 3);
        c.append(good).unwrap();
        assert_eq!(c.len(), 4);
        assert!(validate_chain(&c).is_ok());
    }

    #[test]
    fn validate_reports_mutated_height() {
        let c = chain_of(50);
        assert!(validate_chain(&c).is_ok());
        let mut blocks = c.into_blocks();
        blocks[7].txs[0].payload = TxPayload::TemperatureReading(TemperatureReading::new("F-1", 7, 501));
        let fault = validate_chain(&Chain::from_blocks_unchecked(blocks)).unwrap_err();
        assert_eq!(fault.height, 7);
        assert!(matches!(fault.reason, LedgerError::BadTxRoot { height: 7 }));
    }

    #[test]
    fn genesis_only_and_empty_chains_validate() {
        assert!(validate_chain(&chain_of(1)).is_ok());
        assert!(validate_chain(&Chain::new()).is_ok());
    }

    #[test]
    fn block_record_round_trip() {
        let c = chain_of(4);
        for b in c.blocks() {
            assert_eq!(&Block::decode(&b.encode().unwrap()).unwrap(), b);
        }
    }

    #[test]
    fn sequential_and_default_validation_agree() {
        let c = chain_of(20);
        let mut blocks = c.into_blocks();
        blocks[12].header.meta = vec![1];
        blocks[15].header.timestamp = 0;
        let c = Chain::from_blocks_unchecked(blocks);
        assert_eq!(validate_chain_with(&c, Exec::Sequential), validate_chain(&c));
        assert_eq!(validate_chain(&c).unwrap_err().height, 12);
    }
}
