use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bcc_core::contract::{ContractError, ContractState};
use bcc_core::ledger::{append_ledger, read_ledger, sign_tx, Chain, KeyId, KeyRegistry, Keypair, TxPayload};
use bcc_core::sim::{NetworkConfig, Scenario, SimError, Simulation, TxReceipt};
use bcc_core::store::PayloadStore;

/// A failed command: message for stderr and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub fn new(code: i32, msg: impl Into<String>) -> Self {
        Failure { code, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(1, e.to_string())
            }
        }
    )*};
}

failure_from!(
    std::io::Error,
    bcc_core::ledger::LedgerError,
    bcc_core::ledger::LedgerFileError,
    bcc_core::store::StoreError,
    bcc_core::sensor::SensorError,
    serde_json::Error
);

impl From<ContractError> for Failure {
    fn from(e: ContractError) -> Self {
        Failure::new(1, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Contract(c) => c.into(),
            other => Failure::new(1, other.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

pub struct Ctx {
    pub ledger: PathBuf,
    pub store_dir: PathBuf,
    pub keys: PathBuf,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    pub fn store(&self) -> CliResult<PayloadStore> {
        Ok(PayloadStore::open(&self.store_dir)?)
    }

    pub fn load_scenario(&self) -> CliResult<Scenario> {
        let mut s = match &self.scenario {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::new(1, format!("{}: {e}", p.display())))?;
                Scenario::from_toml(&text)?
            }
            None => Scenario::default(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn network(&self) -> CliResult<NetworkConfig> {
        Ok(self.load_scenario()?.network)
    }

    pub fn key_path(&self, name: &str) -> PathBuf {
        if name.contains('/') || name.ends_with(".key") {
            PathBuf::from(name)
        } else {
            self.keys.join(format!("{name}.key"))
        }
    }

    pub fn load_key(&self, name: &str) -> CliResult<Keypair> {
        let path = self.key_path(name);
        let text = fs::read_to_string(&path).map_err(|e| Failure::new(1, format!("key {}: {e}", path.display())))?;
        Ok(Keypair::from_secret_hex(text.trim())?)
    }

    /// Public id from a key name, or from 64 hex characters.
    pub fn key_id(&self, name_or_hex: &str) -> CliResult<KeyId> {
        if name_or_hex.len() == 64 && name_or_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Ok(KeyId::from_hex(name_or_hex)?);
        }
        Ok(self.load_key(name_or_hex)?.id())
    }

    pub fn write_key(&self, name: &str, key: &Keypair) -> CliResult<PathBuf> {
        let path = self.key_path(name);
        if path.exists() {
            return Err(Failure::new(1, format!("key {} already exists", path.display())));
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, format!("{}\n", key.secret_hex()))?;
        Ok(path)
    }

    pub fn chain(&self) -> CliResult<Chain> {
        if !self.ledger.exists() {
            return Err(Failure::new(1, format!("no ledger at {}; run `bcc init` first", self.ledger.display())));
        }
        read_ledger(&self.ledger).map_err(|e| match e.height() {
            Some(h) => Failure::new(1, format!("invalid at height {h}: {e}")),
            None => Failure::new(1, e.to_string()),
        })
    }

    /// Contract state replayed from the ledger file.
    pub fn state(&self) -> CliResult<ContractState> {
        let chain = self.chain()?;
        bcc_core::ledger::validate_chain(&chain).map_err(|f| Failure::new(1, f.to_string()))?;
        let store = self.store()?;
        bcc_core::contract::replay(chain.blocks(), &store).map_err(|(h, e)| Failure::new(1, format!("replay failed at height {h}: {e}")))
    }

    /// Signs `payload` with the next nonce of `key`, runs it through the embedded network
    /// until it commits, and appends the new blocks to the ledger.
    pub fn submit(&self, key: &Keypair, payload: TxPayload) -> CliResult<Committed> {
        let chain = self.chain()?;
        let before = chain.len();
        let store = Arc::new(self.store()?);
        let mut sim = Simulation::new(self.network()?, chain, store, self.seed(), 0)?;
        let via = sim.config().peers()[0];
        let nonce = sim.node(via)?.state().last_nonce(&key.id()) + 1;
        let tx = sign_tx(key, payload, nonce)?;
        let receipt = sim.submit(tx, via)?;
        let deadline = sim.now_ms() + 3_600_000;
        sim.run_until_settled(deadline);
        let receipt = sim.receipt(&receipt.tx_id).cloned().expect("submitted");
        let node = sim.node(via)?;
        if let Some(err) = receipt.rejected {
            return Err(Failure::new(1, format!("{err}: rejected at ordering")));
        }
        if receipt.committed_at.is_none() {
            return Err(Failure::new(1, "transaction did not commit".to_string()));
        }
        let new_blocks = &node.chain().blocks()[before..];
        append_ledger(&self.ledger, new_blocks)?;
        let height = new_blocks
            .iter()
            .find(|b| b.txs.iter().any(|t| t.hash() == receipt.tx_id))
            .map(|b| b.height())
            .expect("committed tx is in a new block");
        Ok(Committed { receipt, height, nonce })
    }
}

pub struct Committed {
    pub receipt: TxReceipt,
    pub height: u64,
    pub nonce: u64,
}

pub fn ensure_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}
