//! Discrete-event simulation of the consortium network: peers validate and serve reads,
//! orderers batch transactions into blocks under round-robin proof of authority or a
//! toy proof of work. Faults (crash, recover, partition, heal) can be injected at any
//! virtual time.

mod clock;
mod config;
mod network;
mod pow;
mod scenario;

pub use clock::SimClock;
pub use config::{ConsensusConfig, ConsensusMode, NetworkConfig, NodeId, NodeKind, NodeSpec, MAX_POW_DIFFICULTY};
pub use network::{CommitRecord, Fault, NodeSim, NodeStatus, PoaMeta, QueryResult, Simulation, TxReceipt};
pub use pow::{chain_meets_difficulty, fork_choice, fork_key, meets_difficulty, pow_meta_prefix, pow_mine, pow_miner, with_nonce};
pub use scenario::{
    bootstrap_chain, commit_log_csv, latency_csv, FaultEvent, FaultKind, Scenario, ScenarioReport, Workload, WorkloadKeys,
};

use crate::contract::ContractError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("UnknownNode: {0}")]
    UnknownNode(String),
    #[error("NodeDown: {0} is crashed")]
    NodeDown(NodeId),
    #[error("{0} is not a peer")]
    NotAPeer(NodeId),
    #[error("InvalidSignature")]
    InvalidSignature,
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("InvalidCandidate: {0}")]
    InvalidCandidate(String),
    #[error("starting chain rejected: {0}")]
    BadChain(String),
    #[error("ScenarioError: {0}")]
    Scenario(String),
}
