use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Index of a node in the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Peer,
    Orderer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusMode {
    /// Round-robin proof of authority with quorum acknowledgements.
    Poa,
    /// Toy proof of work with longest-chain fork choice.
    Pow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub org: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    pub mode: ConsensusMode,
    #[serde(default = "defaults::block_interval_s")]
    pub block_interval_s: u64,
    #[serde(default = "defaults::batch_max")]
    pub batch_max: usize,
    /// Orderer acks needed to commit; defaults to a simple majority of orderers.
    #[serde(default)]
    pub quorum: Option<usize>,
    /// Leading zero bits required of a block hash in PoW mode.
    #[serde(default = "defaults::pow_difficulty")]
    pub pow_difficulty: u32,
    /// Uniform per-message link latency bounds, milliseconds.
    #[serde(default = "defaults::latency_ms")]
    pub latency_ms: (u64, u64),
}

mod defaults {
    pub fn block_interval_s() -> u64 {
        11
    }
    pub fn batch_max() -> usize {
        100
    }
    pub fn pow_difficulty() -> u32 {
        8
    }
    pub fn latency_ms() -> (u64, u64) {
        (5, 50)
    }
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            mode: ConsensusMode::Poa,
            block_interval_s: defaults::block_interval_s(),
            batch_max: defaults::batch_max(),
            quorum: None,
            pow_difficulty: defaults::pow_difficulty(),
            latency_ms: defaults::latency_ms(),
        }
    }
}

/// Largest PoW difficulty the simulator accepts.
pub const MAX_POW_DIFFICULTY: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub consensus: ConsensusConfig,
    pub nodes: Vec<NodeSpec>,
}

impl NetworkConfig {
    /// `orderers` orderers and `peers` peers, spread round-robin over four organisations.
    pub fn standard(mode: ConsensusMode, orderers: usize, peers: usize) -> Self {
        const ORGS: [&str; 4] = ["who", "manufacturer", "government", "distributor"];
        let mut nodes = Vec::new();
        for i in 0..orderers {
            nodes.push(NodeSpec { name: format!("orderer-{}", i + 1), org: ORGS[i % 4].into(), kind: NodeKind::Orderer });
        }
        for i in 0..peers {
            nodes.push(NodeSpec { name: format!("peer-{}", i + 1), org: ORGS[i % 4].into(), kind: NodeKind::Peer });
        }
        NetworkConfig { consensus: ConsensusConfig { mode, ..ConsensusConfig::default() }, nodes }
    }

    pub fn orderers(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Orderer)
    }

    pub fn peers(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Peer)
    }

    fn ids_of(&self, kind: NodeKind) -> Vec<NodeId> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.kind == kind).map(|(i, _)| NodeId(i as u32)).collect()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| NodeId(i as u32))
    }

    pub fn quorum(&self) -> usize {
        self.consensus.quorum.unwrap_or(self.orderers().len() / 2 + 1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let c = &self.consensus;
        let n = self.orderers().len();
        if n == 0 {
            return bad("at least one orderer is required".into());
        }
        if self.peers().is_empty() {
            return bad("at least one peer is required".into());
        }
        if c.block_interval_s == 0 {
            return bad("block_interval_s must be positive".into());
        }
        if c.batch_max == 0 {
            return bad("batch_max must be positive".into());
        }
        let q = self.quorum();
        if q < n / 2 + 1 || q > n {
            return bad(format!("quorum {q} must be between {} and {n}", n / 2 + 1));
        }
        if c.pow_difficulty > MAX_POW_DIFFICULTY {
            return bad(format!("pow_difficulty {} exceeds {MAX_POW_DIFFICULTY}", c.pow_difficulty));
        }
        if c.latency_ms.0 > c.latency_ms.1 {
            return bad("latency_ms lower bound above upper bound".into());
        }
        let mut names: Vec<_> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("node names must be unique".into());
        }
        Ok(())
    }
}
