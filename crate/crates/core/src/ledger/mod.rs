//! Hash-linked block ledger: canonical encoding, SHA-256 hashing, Ed25519-signed
//! transactions, block construction, append and whole-chain validation.

mod block;
pub mod codec;
mod file;
mod hash;
mod keys;
mod tx;

pub use block::{build_block, tx_root, validate_chain, validate_chain_with, Block, BlockHeader, Chain, ChainFault, MAX_META_LEN};
pub use file::{append_ledger, decode_ledger, encode_ledger, read_ledger, write_ledger, LedgerFileError, LEDGER_MAGIC};
pub use hash::{hash_bytes, Hash};
pub use keys::{KeyId, Keypair};
pub use tx::{sign_tx, signing_bytes, verify_tx, KeyRegistry, LoggerDumpRef, SignedTransaction, TxPayload};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("OversizeField: {field} is {len} bytes, max {max}")]
    OversizeField { field: &'static str, len: usize, max: usize },
    #[error("malformed encoding: {0}")]
    Malformed(String),
    #[error("bad key: {0}")]
    BadKey(String),
    #[error("UnknownSubmitter: {0:?}")]
    UnknownSubmitter(KeyId),
    #[error("NonMonotonicTimestamp: {got} earlier than previous block {prev}")]
    NonMonotonicTimestamp { prev: u64, got: u64 },
    #[error("non-genesis block carries no transactions")]
    EmptyBlock,
    #[error("LinkMismatch at height {height}")]
    LinkMismatch { height: u64 },
    #[error("HeightMismatch: expected {expected}, got {got}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("BadBlockHash at height {height}")]
    BadBlockHash { height: u64 },
    #[error("tx_root mismatch at height {height}")]
    BadTxRoot { height: u64 },
    #[error("invalid signature on tx {index} at height {height}")]
    BadSignature { height: u64, index: usize },
}
