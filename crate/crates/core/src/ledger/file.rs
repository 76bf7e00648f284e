//! `BCC1` ledger file: the magic bytes followed by one record per block, each record a
//! `u32` big-endian length and the block's canonical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::block::{Block, Chain};
use super::LedgerError;

pub const LEDGER_MAGIC: &[u8; 4] = b"BCC1";

#[derive(Debug, thiserror::Error)]
pub enum LedgerFileError {
    #[error("ledger i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a ledger file (bad magic)")]
    BadMagic,
    /// A record could not be decoded; `height` is the record's position in the file.
    #[error("record at height {height} unreadable: {source}")]
    Record { height: u64, source: LedgerError },
}

impl LedgerFileError {
    /// Height of the first unreadable record, when the failure is record-specific.
    pub fn height(&self) -> Option<u64> {
        match self {
            LedgerFileError::Record { height, .. } => Some(*height),
            _ => None,
        }
    }
}

pub fn encode_ledger(chain: &Chain) -> Result<Vec<u8>, LedgerError> {
    let mut out = LEDGER_MAGIC.to_vec();
    for b in chain.blocks() {
        append_record(&mut out, b)?;
    }
    Ok(out)
}

fn append_record(out: &mut Vec<u8>, block: &Block) -> Result<(), LedgerError> {
    let rec = block.encode()?;
    let len = u32::try_from(rec.len()).map_err(|_| LedgerError::OversizeField {
        field: "block record",
        len: rec.len(),
        max: u32::MAX as usize,
    })?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&rec);
    Ok(())
}

/// Parses ledger bytes into an unvalidated chain; run `validate_chain` on the result.
pub fn decode_ledger(bytes: &[u8]) -> Result<Chain, LedgerFileError> {
    let rest = bytes.strip_prefix(LEDGER_MAGIC.as_slice()).ok_or(LedgerFileError::BadMagic)?;
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < rest.len() {
        let height = blocks.len() as u64;
        let bad = |source| LedgerFileError::Record { height, source };
        let len_bytes: [u8; 4] = rest
            .get(pos..pos + 4)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| bad(LedgerError::Malformed("truncated record length".into())))?;
        let len = u32::from_be_bytes(len_bytes) as usize;
        pos += 4;
        let rec = rest
            .get(pos..pos.saturating_add(len))
            .ok_or_else(|| bad(LedgerError::Malformed("truncated record".into())))?;
        blocks.push(Block::decode(rec).map_err(bad)?);
        pos += len;
    }
    Ok(Chain::from_blocks_unchecked(blocks))
}

pub fn read_ledger(path: &Path) -> Result<Chain, LedgerFileError> {
    decode_ledger(&fs::read(path)?)
}

/// Writes the whole chain, replacing `path` atomically.
pub fn write_ledger(path: &Path, chain: &Chain) -> Result<(), LedgerFileError> {
    let bytes = encode_ledger(chain).map_err(|source| LedgerFileError::Record { height: 0, source })?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Appends blocks to an existing ledger file without rewriting earlier records.
pub fn append_ledger(path: &Path, blocks: &[Block]) -> Result<(), LedgerFileError> {
    let mut out = Vec::new();
    for b in blocks {
        append_record(&mut out, b).map_err(|source| LedgerFileError::Record { height: b.height(), source })?;
    }
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    f.write_all(&out)?;
    f.sync_data()?;
    Ok(())
}
