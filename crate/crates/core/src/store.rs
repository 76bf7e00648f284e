//! Content-addressed store for logger dumps. The chain carries only a
//! [`LoggerDumpRef`]; the readings live here in a file named by the lowercase hex
//! SHA-256 of their canonical bytes, and every read re-verifies that hash.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::contract::{Alarm, ContractError, ContractState};
use crate::ledger::codec::{Decoder, Encoder};
use crate::ledger::{hash_bytes, Hash, KeyId, LedgerError};
pub use crate::ledger::LoggerDumpRef;
use crate::types::{LocationId, TempCenti, TemperatureReading, MAX_ID_LEN};

/// 30 days of readings at a 10-minute cadence.
pub const MAX_DUMP_READINGS: usize = 4320;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("Missing: {0}")]
    Missing(Hash),
    #[error("CorruptPayload: {0}")]
    CorruptPayload(Hash),
    #[error("invalid dump: {0}")]
    InvalidDump(String),
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

/// A batch of readings from one location's temperature logger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggerDump {
    pub location: LocationId,
    pub readings: Vec<TemperatureReading>,
}

impl LoggerDump {
    pub fn new(location: LocationId, readings: Vec<TemperatureReading>) -> Result<Self, StoreError> {
        let d = LoggerDump { location, readings };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::InvalidDump(m));
        if self.readings.is_empty() {
            return bad("no readings".into());
        }
        if self.readings.len() > MAX_DUMP_READINGS {
            return bad(format!("{} readings exceeds {MAX_DUMP_READINGS}", self.readings.len()));
        }
        if let Some(r) = self.readings.iter().find(|r| r.location != self.location) {
            return bad(format!("reading for {} in a dump for {}", r.location, self.location));
        }
        if self.readings.windows(2).any(|w| w[0].ts >= w[1].ts) {
            return bad("timestamps not strictly increasing".into());
        }
        Ok(())
    }

    /// Location, reading count, then `(ts u64, temp i32)` pairs.
    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let mut e = Encoder::new();
        e.str("location id", self.location.as_str(), MAX_ID_LEN)?;
        e.u32(self.readings.len() as u32);
        for r in &self.readings {
            e.u64(r.ts).i32(r.temp.get());
        }
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut d = Decoder::new(bytes);
        let location = LocationId(d.string("location id", MAX_ID_LEN)?);
        let n = d.u32()? as usize;
        if n > MAX_DUMP_READINGS {
            return Err(LedgerError::OversizeField { field: "readings", len: n, max: MAX_DUMP_READINGS });
        }
        let mut readings = Vec::with_capacity(n);
        for _ in 0..n {
            readings.push(TemperatureReading { location: location.clone(), ts: d.u64()?, temp: TempCenti(d.i32()?) });
        }
        d.finish()?;
        Ok(LoggerDump { location, readings })
    }

    pub fn hash(&self) -> Result<Hash, LedgerError> {
        Ok(hash_bytes(&self.encode()?))
    }

    /// The on-chain reference describing this dump.
    pub fn reference(&self) -> Result<LoggerDumpRef, StoreError> {
        self.validate()?;
        Ok(LoggerDumpRef {
            location: self.location.clone(),
            dump_hash: self.hash().map_err(|e| StoreError::InvalidDump(e.to_string()))?,
            first_ts: self.readings[0].ts,
            last_ts: self.readings[self.readings.len() - 1].ts,
            count: self.readings.len() as u32,
        })
    }
}

/// Anything that can hand back a verified dump by hash.
pub trait DumpSource: Sync {
    fn fetch(&self, hash: &Hash) -> Result<LoggerDump, StoreError>;
}

/// A source with nothing in it; every fetch is `Missing`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDumps;

impl DumpSource for NoDumps {
    fn fetch(&self, hash: &Hash) -> Result<LoggerDump, StoreError> {
        Err(StoreError::Missing(*hash))
    }
}

impl DumpSource for BTreeMap<Hash, LoggerDump> {
    fn fetch(&self, hash: &Hash) -> Result<LoggerDump, StoreError> {
        self.get(hash).cloned().ok_or(StoreError::Missing(*hash))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Directory of hash-named payload files.
#[derive(Debug, Clone)]
pub struct PayloadStore {
    dir: PathBuf,
}

impl PayloadStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(PayloadStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &Hash) -> PathBuf {
        self.dir.join(hash.to_hex())
    }

    /// Stores the dump under its content hash. Idempotent; concurrent writers of the
    /// same content race only on an atomic rename of identical bytes.
    pub fn put(&self, dump: &LoggerDump) -> Result<Hash, StoreError> {
        dump.validate()?;
        let bytes = dump.encode().map_err(|e| StoreError::InvalidDump(e.to_string()))?;
        let hash = hash_bytes(&bytes);
        let path = self.path_for(&hash);
        if path.exists() {
            return Ok(hash);
        }
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            hash.to_hex(),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(hash)
    }

    pub fn get(&self, hash: &Hash) -> Result<LoggerDump, StoreError> {
        let bytes = match fs::read(self.path_for(hash)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::Missing(*hash)),
            Err(e) => return Err(e.into()),
        };
        if hash_bytes(&bytes) != *hash {
            return Err(StoreError::CorruptPayload(*hash));
        }
        LoggerDump::decode(&bytes).map_err(|_| StoreError::CorruptPayload(*hash))
    }

    /// Number of payloads currently stored.
    pub fn len(&self) -> Result<usize, StoreError> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if name.to_str().is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())) {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool, StoreError> {
        Ok(self.len()? == 0)
    }
}

impl DumpSource for PayloadStore {
    fn fetch(&self, hash: &Hash) -> Result<LoggerDump, StoreError> {
        self.get(hash)
    }
}

impl ContractState {
    /// Folds every reading of the referenced dump into the location's series, exactly
    /// as if each had been submitted on its own. All or nothing.
    pub fn ingest_dump(&mut self, caller: &KeyId, r: &LoggerDumpRef, store: &dyn DumpSource) -> Result<Vec<Alarm>, ContractError> {
        self.require_location_actor(caller, &r.location)?;
        let dump = store.fetch(&r.dump_hash)?;
        if dump.hash().ok() != Some(r.dump_hash) {
            return Err(ContractError::CorruptPayload(r.dump_hash));
        }
        dump.validate()?;
        let first = dump.readings.first().map(|x| x.ts);
        let last = dump.readings.last().map(|x| x.ts);
        if dump.location != r.location
            || dump.readings.len() != r.count as usize
            || first != Some(r.first_ts)
            || last != Some(r.last_ts)
        {
            return Err(ContractError::DumpMismatch(format!(
                "reference ({}, {} readings, {}..{}) does not describe the stored dump",
                r.location, r.count, r.first_ts, r.last_ts
            )));
        }
        self.record_temperature_batch(caller, &dump.readings)
    }
}
