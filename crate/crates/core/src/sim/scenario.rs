use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::{ConsensusMode, NetworkConfig, NodeId};
use super::network::{CommitRecord, Fault, Simulation, TxReceipt};
use super::SimError;
use crate::contract::Item;
use crate::ledger::{build_block, sign_tx, Chain, Hash, Keypair, TxPayload};
use crate::store::NoDumps;
use crate::types::{LocationId, LocationKind, TemperatureReading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    Crash,
    Recover,
    Partition,
    Heal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    /// Seconds after the simulation starts.
    pub at_s: f64,
    pub node: String,
    pub kind: FaultKind,
    #[serde(default)]
    pub group: Option<u32>,
}

impl FaultEvent {
    pub fn fault(&self) -> Result<Fault, SimError> {
        Ok(match self.kind {
            FaultKind::Crash => Fault::Crash,
            FaultKind::Recover => Fault::Recover,
            FaultKind::Heal => Fault::Heal,
            FaultKind::Partition => match self.group {
                Some(g) if g > 0 => Fault::Partition(g),
                _ => return Err(SimError::Scenario(format!("partition of {} needs a group above 0", self.node))),
            },
        })
    }
}

/// Temperature readings from one sensor per location, arriving as a Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    pub tx_count: usize,
    pub mean_gap_s: f64,
    pub locations: usize,
    pub items_per_location: usize,
    /// One view query per submission, via a random peer.
    pub queries: bool,
    /// Extra virtual time after the last submission for the backlog to commit.
    pub drain_s: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { tx_count: 500, mean_gap_s: 60.0, locations: 4, items_per_location: 2, queries: true, drain_s: 600 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_unix: u64,
    pub network: NetworkConfig,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub faults: Vec<FaultEvent>,
}

fn default_seed() -> u64 {
    42
}

fn default_start() -> u64 {
    1_700_000_000
}

impl Default for Scenario {
    /// Four PoA orderers, four peers, 500 readings.
    fn default() -> Self {
        Scenario {
            seed: default_seed(),
            start_unix: default_start(),
            network: NetworkConfig::standard(ConsensusMode::Poa, 4, 4),
            workload: Workload::default(),
            faults: Vec::new(),
        }
    }
}

/// Keys of the bootstrap admin and the per-location sensors.
#[derive(Clone)]
pub struct WorkloadKeys {
    pub admin: Keypair,
    pub sensors: Vec<(LocationId, Keypair)>,
}

/// Genesis plus one setup block: `locations` fridges with bound sensors, each holding
/// `items_per_location` registered lots.
pub fn bootstrap_chain(start_unix: u64, locations: usize, items_per_location: usize) -> (Chain, WorkloadKeys) {
    let admin = Keypair::from_label("sim:admin");
    let genesis = build_block(None, vec![sign_tx(&admin, TxPayload::Deploy, 1).expect("deploy")], start_unix, b"genesis".to_vec())
        .expect("genesis");
    let mut chain = Chain::with_genesis(genesis).expect("genesis");
    let mut nonce = 1;
    let mut txs = Vec::new();
    let mut sensors = Vec::new();
    for i in 1..=locations {
        let loc = LocationId::new(format!("LOC-{i}"));
        let sensor = Keypair::from_label(&format!("sim:sensor:{loc}"));
        nonce += 1;
        let p = TxPayload::AddLocation { id: loc.clone(), kind: LocationKind::Refrigerator, sensor: Some(sensor.id()) };
        txs.push(sign_tx(&admin, p, nonce).expect("setup tx"));
        for j in 1..=items_per_location {
            nonce += 1;
            let item = Item::standard(format!("LOT-{i}-{j}"), loc.as_str(), start_unix);
            txs.push(sign_tx(&admin, item.to_payload(), nonce).expect("setup tx"));
        }
        sensors.push((loc, sensor));
    }
    if !txs.is_empty() {
        let setup = build_block(chain.tip(), txs, start_unix, b"setup".to_vec()).expect("setup block");
        chain.append(setup).expect("setup links");
    }
    (chain, WorkloadKeys { admin, sensors })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub settled: bool,
    pub receipts: Vec<TxReceipt>,
    pub commits: Vec<CommitRecord>,
    pub view_latencies_ms: Vec<u64>,
    /// Final state root of every node that is not crashed.
    pub state_roots: Vec<(NodeId, Hash)>,
    pub conflicts: Vec<(u64, Hash, Hash)>,
    pub submit_errors: usize,
    #[serde(skip)]
    pub final_chain: Chain,
}

impl ScenarioReport {
    /// Submit-to-commit latencies in milliseconds of every committed transaction.
    pub fn submit_latencies_ms(&self) -> Vec<u64> {
        self.receipts.iter().filter_map(|r| r.committed_at.map(|c| c - r.accepted_at)).collect()
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.network.validate()?;
        let w = &self.workload;
        if w.tx_count > 0 && (w.locations == 0 || w.mean_gap_s.is_nan() || w.mean_gap_s <= 0.0) {
            return Err(SimError::Scenario("a workload needs locations and a positive mean_gap_s".into()));
        }
        for f in &self.faults {
            if self.network.node_by_name(&f.node).is_none() {
                return Err(SimError::UnknownNode(f.node.clone()));
            }
            if f.at_s.is_nan() || f.at_s < 0.0 {
                return Err(SimError::Scenario(format!("fault at_s {} must be non-negative", f.at_s)));
            }
            f.fault()?;
        }
        Ok(())
    }

    /// Boots the network, schedules the faults, feeds the workload and lets the backlog drain.
    pub fn run(&self) -> Result<ScenarioReport, SimError> {
        self.validate()?;
        let w = &self.workload;
        let (chain, keys) = bootstrap_chain(self.start_unix, w.locations, w.items_per_location);
        let start_ms = self.start_unix * 1000;
        let mut sim = Simulation::new(self.network.clone(), chain, Arc::new(NoDumps), self.seed, start_ms)?;
        for f in &self.faults {
            let node = self.network.node_by_name(&f.node).expect("validated");
            sim.schedule_fault(start_ms + (f.at_s * 1000.0).round() as u64, node, f.fault()?)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let peers = self.network.peers();
        let mut nonces = vec![0u64; keys.sensors.len()];
        let mut last_ts = vec![0u64; keys.sensors.len()];
        let mut t = start_ms;
        let mut views = Vec::new();
        let mut submit_errors = 0;
        let gap = Exp::new(1.0 / (w.mean_gap_s * 1000.0)).ok();
        for _ in 0..w.tx_count {
            t += gap.as_ref().map_or(0, |g| g.sample(&mut rng).round() as u64);
            sim.run_until(t);
            let up: Vec<NodeId> = peers.iter().copied().filter(|p| sim.node(*p).is_ok_and(|n| n.status() != super::NodeStatus::Crashed)).collect();
            if up.is_empty() {
                submit_errors += 1;
                continue;
            }
            let loc = rng.random_range(0..keys.sensors.len());
            let (loc_id, sensor) = &keys.sensors[loc];
            let ts = (t / 1000).max(last_ts[loc] + 1);
            let temp = 500 + rng.random_range(-150..=150);
            let reading = TemperatureReading::new(loc_id.as_str(), ts, temp);
            let tx = sign_tx(sensor, TxPayload::TemperatureReading(reading), nonces[loc] + 1).expect("reading encodes");
            let via = up[rng.random_range(0..up.len())];
            match sim.submit(tx, via) {
                Ok(_) => {
                    nonces[loc] += 1;
                    last_ts[loc] = ts;
                }
                Err(_) => submit_errors += 1,
            }
            if w.queries {
                let reader = up[rng.random_range(0..up.len())];
                let to = ts;
                let q = sim.query(reader, |s| s.query_location_temps(loc_id, to.saturating_sub(3600), to).map(|v| v.len()))?;
                views.push(q.latency_ms);
            }
        }
        let settled = sim.run_until_settled(t + w.drain_s * 1000);
        let nodes = sim.nodes();
        let state_roots = nodes
            .iter()
            .filter(|n| n.status() != super::NodeStatus::Crashed)
            .map(|n| (n.id, n.state().state_root()))
            .collect();
        let final_chain = nodes.iter().map(|n| n.chain()).max_by_key(|c| c.len()).cloned().unwrap_or_default();
        Ok(ScenarioReport {
            seed: self.seed,
            start_ms,
            end_ms: sim.now_ms(),
            settled,
            receipts: sim.receipts().into_iter().cloned().collect(),
            commits: sim.commit_log().to_vec(),
            view_latencies_ms: views,
            state_roots,
            conflicts: sim.safety_conflicts().to_vec(),
            submit_errors,
            final_chain,
        })
    }
}

/// Per-transaction latency CSV; times are milliseconds since the simulation started.
pub fn latency_csv(reports: &[ScenarioReport]) -> String {
    let mut out = String::from("tx_id,kind,accepted_ms,committed_ms\n");
    for rep in reports {
        for r in &rep.receipts {
            let committed = r.committed_at.map(|c| (c - rep.start_ms).to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.tx_id, r.kind, r.accepted_at - rep.start_ms, committed);
        }
    }
    out
}

pub fn commit_log_csv(report: &ScenarioReport) -> String {
    let mut out = String::from("node,height,block_hash,committed_ms\n");
    for c in &report.commits {
        let _ = writeln!(out, "{},{},{},{}", c.node, c.height, c.hash, c.at_ms - report.start_ms);
    }
    out
}
