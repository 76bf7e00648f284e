use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::clock::SimClock;
use super::config::{ConsensusMode, NetworkConfig, NodeId, NodeKind};
use super::pow::{chain_meets_difficulty, fork_key, meets_difficulty, pow_meta_prefix, pow_mine};
use super::SimError;
use crate::contract::{replay, ContractState};
use crate::ledger::{build_block, validate_chain, Block, Chain, Hash, SignedTransaction};
use crate::store::DumpSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeStatus {
    Up,
    Crashed,
    Partitioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    Crash,
    Recover,
    /// Moves the node into a numbered partition; nodes only hear others in the same one.
    Partition(u32),
    /// Returns the node to the main partition.
    Heal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxReceipt {
    pub tx_id: Hash,
    pub kind: &'static str,
    pub via: NodeId,
    pub accepted_at: u64,
    pub committed_at: Option<u64>,
    /// Contract error name if an orderer dropped the transaction at ordering time.
    pub rejected: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitRecord {
    pub node: NodeId,
    pub height: u64,
    pub hash: Hash,
    pub at_ms: u64,
}

/// Proposal metadata carried in a PoA block's meta field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoaMeta {
    pub leader: u32,
    pub view: u32,
    pub sealed_at_ms: u64,
}

impl PoaMeta {
    pub fn encode(&self) -> Vec<u8> {
        let mut m = b"poa".to_vec();
        m.extend_from_slice(&self.leader.to_be_bytes());
        m.extend_from_slice(&self.view.to_be_bytes());
        m.extend_from_slice(&self.sealed_at_ms.to_be_bytes());
        m
    }

    pub fn decode(meta: &[u8]) -> Option<Self> {
        if meta.len() != 19 || !meta.starts_with(b"poa") {
            return None;
        }
        Some(PoaMeta {
            leader: u32::from_be_bytes(meta[3..7].try_into().ok()?),
            view: u32::from_be_bytes(meta[7..11].try_into().ok()?),
            sealed_at_ms: u64::from_be_bytes(meta[11..19].try_into().ok()?),
        })
    }
}

#[derive(Debug, Clone)]
struct Pending {
    tx: SignedTransaction,
    accepted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Round {
    height: u64,
    start: u64,
}

/// One simulated node with its own copy of the chain and contract state.
pub struct NodeSim {
    pub id: NodeId,
    pub name: String,
    pub org: String,
    pub kind: NodeKind,
    crashed: bool,
    group: u32,
    chain: Chain,
    state: ContractState,
    in_chain: BTreeSet<Hash>,
    // orderer pool
    pool: BTreeMap<Hash, Pending>,
    // peer: own accepted, uncommitted txs and the state they lead to
    accepted: Vec<SignedTransaction>,
    speculative: ContractState,
    // PoA
    proposals: BTreeMap<u64, BTreeMap<Hash, Block>>,
    acks: BTreeMap<(u64, Hash), BTreeSet<NodeId>>,
    locked: Option<(u64, Hash)>,
    round: Option<Round>,
    timer_gen: u64,
    // PoW
    mine_gen: u64,
}

impl NodeSim {
    pub fn status(&self) -> NodeStatus {
        if self.crashed {
            NodeStatus::Crashed
        } else if self.group != 0 {
            NodeStatus::Partitioned
        } else {
            NodeStatus::Up
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn pending(&self) -> usize {
        self.pool.len()
    }

    fn next_height(&self) -> u64 {
        self.chain.len() as u64
    }
}

#[derive(Debug, Clone)]
enum Msg {
    Forward { tx: SignedTransaction, accepted_at: u64 },
    Propose { block: Block },
    Ack { height: u64, hash: Hash },
    SyncRequest { from_height: u64 },
    Blocks { blocks: Vec<Block> },
    NewBlock { block: Block },
    TipAnnounce { len: usize, tip: Hash },
    ChainRequest,
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { from: NodeId, to: NodeId, msg: Msg },
    Timer { node: NodeId, gen: u64 },
    Mine { node: NodeId, gen: u64 },
    Fault { node: NodeId, fault: Fault },
}

/// Answer to a read served from a peer's local state.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult<R> {
    pub value: R,
    pub latency_ms: u64,
}

/// Discrete-event simulation of the consortium network. Time is virtual unix
/// milliseconds; everything is a function of the config, starting chain and seed.
pub struct Simulation {
    cfg: NetworkConfig,
    orderers: Vec<NodeId>,
    quorum: usize,
    interval_ms: u64,
    clock: SimClock<Event>,
    rng: ChaCha8Rng,
    nodes: Vec<NodeSim>,
    store: Arc<dyn DumpSource + Send>,
    base_height: u64,
    receipts: BTreeMap<Hash, TxReceipt>,
    submitted: Vec<Hash>,
    commits: Vec<CommitRecord>,
    first_commit: BTreeMap<u64, Hash>,
    conflicts: Vec<(u64, Hash, Hash)>,
    blocks_mined: u64,
}

impl Simulation {
    /// Boots every node from `chain`, which must be valid and start with a deploy genesis.
    /// The clock starts at `start_ms`, or at the tip's timestamp if that is later.
    pub fn new(
        cfg: NetworkConfig,
        chain: Chain,
        store: Arc<dyn DumpSource + Send>,
        seed: u64,
        start_ms: u64,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        validate_chain(&chain).map_err(|f| SimError::BadChain(f.to_string()))?;
        let state = replay(chain.blocks(), store.as_ref()).map_err(|(h, e)| SimError::BadChain(format!("height {h}: {e}")))?;
        let start_ms = start_ms.max(chain.tip().map_or(0, |b| b.header.timestamp * 1000));
        let in_chain: BTreeSet<Hash> = chain.blocks().iter().flat_map(|b| b.txs.iter().map(|t| t.hash())).collect();
        let nodes = cfg
            .nodes
            .iter()
            .enumerate()
            .map(|(i, spec)| NodeSim {
                id: NodeId(i as u32),
                name: spec.name.clone(),
                org: spec.org.clone(),
                kind: spec.kind,
                crashed: false,
                group: 0,
                chain: chain.clone(),
                state: state.clone(),
                in_chain: in_chain.clone(),
                pool: BTreeMap::new(),
                accepted: Vec::new(),
                speculative: state.clone(),
                proposals: BTreeMap::new(),
                acks: BTreeMap::new(),
                locked: None,
                round: None,
                timer_gen: 0,
                mine_gen: 0,
            })
            .collect();
        let mut sim = Simulation {
            orderers: cfg.orderers(),
            quorum: cfg.quorum(),
            interval_ms: cfg.consensus.block_interval_s * 1000,
            cfg,
            clock: SimClock::new(start_ms),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes,
            store,
            base_height: chain.len() as u64,
            receipts: BTreeMap::new(),
            submitted: Vec::new(),
            commits: Vec::new(),
            first_commit: BTreeMap::new(),
            conflicts: Vec::new(),
            blocks_mined: 0,
        };
        if sim.mode() == ConsensusMode::Pow {
            for o in sim.orderers.clone() {
                sim.schedule_mine(o);
            }
        }
        Ok(sim)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    fn mode(&self) -> ConsensusMode {
        self.cfg.consensus.mode
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now()
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeSim, SimError> {
        self.nodes.get(id.index()).ok_or_else(|| SimError::UnknownNode(id.to_string()))
    }

    pub fn nodes(&self) -> &[NodeSim] {
        &self.nodes
    }

    /// Receipts in submission order.
    pub fn receipts(&self) -> Vec<&TxReceipt> {
        self.submitted.iter().map(|h| &self.receipts[h]).collect()
    }

    pub fn receipt(&self, tx_id: &Hash) -> Option<&TxReceipt> {
        self.receipts.get(tx_id)
    }

    pub fn commit_log(&self) -> &[CommitRecord] {
        &self.commits
    }

    /// Heights at which two nodes committed different blocks (PoA only), with both hashes.
    pub fn safety_conflicts(&self) -> &[(u64, Hash, Hash)] {
        &self.conflicts
    }

    pub fn blocks_mined(&self) -> u64 {
        self.blocks_mined
    }

    /// Height of the chain every node booted from.
    pub fn base_height(&self) -> u64 {
        self.base_height
    }

    /// True when every node that is not crashed has the same tip.
    pub fn tips_agree(&self) -> bool {
        let mut tips = self.nodes.iter().filter(|n| !n.crashed).map(|n| n.chain.tip_hash());
        match tips.next() {
            Some(first) => tips.all(|t| t == first),
            None => true,
        }
    }

    /// Transactions still waiting at orderers that are not crashed.
    pub fn pending_txs(&self) -> usize {
        self.orderers.iter().map(|o| &self.nodes[o.index()]).filter(|n| !n.crashed).map(|n| n.pool.len()).max().unwrap_or(0)
    }

    fn latency(&mut self) -> u64 {
        let (lo, hi) = self.cfg.consensus.latency_ms;
        self.rng.random_range(lo..=hi)
    }

    fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        let (na, nb) = (&self.nodes[a.index()], &self.nodes[b.index()]);
        !nb.crashed && na.group == nb.group
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        if from == to {
            self.clock.schedule(self.clock.now(), Event::Deliver { from, to, msg });
        } else if self.reachable(from, to) {
            let at = self.clock.now() + self.latency();
            self.clock.schedule(at, Event::Deliver { from, to, msg });
        }
    }

    fn broadcast(&mut self, from: NodeId, msg: &Msg) {
        for i in 0..self.nodes.len() {
            self.send(from, NodeId(i as u32), msg.clone());
        }
    }

    fn send_to_orderers(&mut self, from: NodeId, msg: &Msg) {
        for o in self.orderers.clone() {
            self.send(from, o, msg.clone());
        }
    }

    // ---- client surface ----

    /// Validates `tx` at peer `via` against its committed state plus its own pending
    /// transactions, then forwards it to the orderers.
    pub fn submit(&mut self, tx: SignedTransaction, via: NodeId) -> Result<TxReceipt, SimError> {
        let node = self.nodes.get_mut(via.index()).ok_or_else(|| SimError::UnknownNode(via.to_string()))?;
        if node.kind != NodeKind::Peer {
            return Err(SimError::NotAPeer(via));
        }
        if node.crashed {
            return Err(SimError::NodeDown(via));
        }
        if !tx.signature_valid() {
            return Err(SimError::InvalidSignature);
        }
        node.speculative.apply_signed(&tx, self.store.as_ref())?;
        node.accepted.push(tx.clone());
        let now = self.clock.now();
        let receipt = TxReceipt {
            tx_id: tx.hash(),
            kind: tx.payload.kind(),
            via,
            accepted_at: now,
            committed_at: None,
            rejected: None,
        };
        self.receipts.insert(receipt.tx_id, receipt.clone());
        self.submitted.push(receipt.tx_id);
        self.send_to_orderers(via, &Msg::Forward { tx, accepted_at: now });
        Ok(receipt)
    }

    /// Reads from peer `via`'s committed state; costs one network hop, never waits for ordering.
    pub fn query<R>(&mut self, via: NodeId, f: impl FnOnce(&ContractState) -> R) -> Result<QueryResult<R>, SimError> {
        let node = self.nodes.get(via.index()).ok_or_else(|| SimError::UnknownNode(via.to_string()))?;
        if node.kind != NodeKind::Peer {
            return Err(SimError::NotAPeer(via));
        }
        if node.crashed {
            return Err(SimError::NodeDown(via));
        }
        let value = f(&node.state);
        Ok(QueryResult { value, latency_ms: self.latency() })
    }

    pub fn inject_fault(&mut self, node: NodeId, fault: Fault) -> Result<(), SimError> {
        if node.index() >= self.nodes.len() {
            return Err(SimError::UnknownNode(node.to_string()));
        }
        self.apply_fault(node, fault);
        Ok(())
    }

    pub fn schedule_fault(&mut self, at_ms: u64, node: NodeId, fault: Fault) -> Result<(), SimError> {
        if node.index() >= self.nodes.len() {
            return Err(SimError::UnknownNode(node.to_string()));
        }
        self.clock.schedule(at_ms, Event::Fault { node, fault });
        Ok(())
    }

    /// Fires the next event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some((_, ev)) = self.clock.pop() else {
            return false;
        };
        match ev {
            Event::Deliver { from, to, msg } => {
                let (f, t) = (&self.nodes[from.index()], &self.nodes[to.index()]);
                if !t.crashed && f.group == t.group {
                    self.handle(to, from, msg);
                }
            }
            Event::Timer { node, gen } => self.on_timer(node, gen),
            Event::Mine { node, gen } => self.on_mine(node, gen),
            Event::Fault { node, fault } => self.apply_fault(node, fault),
        }
        true
    }

    /// Fires every event up to and including `t_ms`, then sets the clock to `t_ms`.
    pub fn run_until(&mut self, t_ms: u64) {
        while self.clock.peek_time().is_some_and(|t| t <= t_ms) {
            self.step();
        }
        self.clock.advance_to(t_ms);
    }

    /// Runs until no orderer holds pending transactions and the network is quiet, or
    /// until `deadline_ms`. Returns true if it drained.
    pub fn run_until_settled(&mut self, deadline_ms: u64) -> bool {
        loop {
            if self.pending_txs() == 0 && self.all_receipts_final() && self.quiet() {
                return true;
            }
            match self.clock.peek_time() {
                Some(t) if t <= deadline_ms => {
                    self.step();
                }
                _ => {
                    self.clock.advance_to(deadline_ms);
                    return false;
                }
            }
        }
    }

    fn all_receipts_final(&self) -> bool {
        self.receipts.values().all(|r| r.committed_at.is_some() || r.rejected.is_some() || self.nodes[r.via.index()].crashed)
    }

    fn quiet(&self) -> bool {
        self.mode() == ConsensusMode::Pow || self.nodes.iter().all(|n| n.crashed || n.proposals.is_empty())
    }

    // ---- faults ----

    fn apply_fault(&mut self, id: NodeId, fault: Fault) {
        let n = &mut self.nodes[id.index()];
        match fault {
            Fault::Crash => {
                n.crashed = true;
                return;
            }
            Fault::Recover => {
                if !n.crashed {
                    return;
                }
                n.crashed = false;
            }
            Fault::Partition(g) => {
                n.group = g;
                return;
            }
            Fault::Heal => {
                if n.group == 0 {
                    return;
                }
                n.group = 0;
            }
        }
        self.rejoin(id);
    }

    /// Catch-up after a node comes back: fetch what it missed and restart its timers.
    fn rejoin(&mut self, id: NodeId) {
        match self.mode() {
            ConsensusMode::Poa => {
                let n = &mut self.nodes[id.index()];
                n.round = None;
                n.timer_gen += 1;
                let from_height = n.next_height();
                self.broadcast(id, &Msg::SyncRequest { from_height });
                self.refresh_round(id);
            }
            ConsensusMode::Pow => {
                let n = &self.nodes[id.index()];
                let msg = Msg::TipAnnounce { len: n.chain.len(), tip: n.chain.tip_hash() };
                let is_orderer = n.kind == NodeKind::Orderer;
                self.broadcast(id, &msg);
                if is_orderer {
                    self.schedule_mine(id);
                }
            }
        }
    }

    // ---- message handling ----

    fn handle(&mut self, me: NodeId, from: NodeId, msg: Msg) {
        match msg {
            Msg::Forward { tx, accepted_at } => self.on_forward(me, tx, accepted_at),
            Msg::Propose { block } => self.on_propose(me, from, block),
            Msg::Ack { height, hash } => {
                let n = &mut self.nodes[me.index()];
                if height >= n.next_height() {
                    n.acks.entry((height, hash)).or_default().insert(from);
                    self.try_commit(me);
                }
            }
            Msg::SyncRequest { from_height } => {
                let n = &self.nodes[me.index()];
                if n.chain.len() as u64 > from_height {
                    let blocks = n.chain.blocks()[from_height as usize..].to_vec();
                    self.send(me, from, Msg::Blocks { blocks });
                }
            }
            Msg::Blocks { blocks } => match self.mode() {
                ConsensusMode::Poa => {
                    for b in blocks {
                        if b.height() == self.nodes[me.index()].next_height() && !self.commit_block(me, b) {
                            break;
                        }
                    }
                    self.try_commit(me);
                }
                ConsensusMode::Pow => self.on_candidate_chain(me, Chain::from_blocks_unchecked(blocks)),
            },
            Msg::NewBlock { block } => self.on_new_block(me, from, block),
            Msg::TipAnnounce { len, tip } => {
                let n = &self.nodes[me.index()];
                let theirs = (len, std::cmp::Reverse(tip));
                let mine = fork_key(&n.chain);
                if theirs > mine {
                    self.send(me, from, Msg::ChainRequest);
                } else if mine > theirs {
                    let msg = Msg::TipAnnounce { len: n.chain.len(), tip: n.chain.tip_hash() };
                    self.send(me, from, msg);
                }
            }
            Msg::ChainRequest => {
                let blocks = self.nodes[me.index()].chain.blocks().to_vec();
                self.send(me, from, Msg::Blocks { blocks });
            }
        }
    }

    fn on_forward(&mut self, me: NodeId, tx: SignedTransaction, accepted_at: u64) {
        let n = &mut self.nodes[me.index()];
        if n.kind != NodeKind::Orderer {
            return;
        }
        let h = tx.hash();
        if n.in_chain.contains(&h) || n.pool.contains_key(&h) {
            return;
        }
        n.pool.insert(h, Pending { tx, accepted_at });
        if self.mode() == ConsensusMode::Poa {
            self.refresh_round(me);
        }
    }

    /// Pool entries in ordering priority: arrival time, then tx hash.
    fn ordered_pool(&self, me: NodeId) -> Vec<(Hash, SignedTransaction)> {
        let mut v: Vec<_> = self.nodes[me.index()].pool.iter().map(|(h, p)| (p.accepted_at, *h, p.tx.clone())).collect();
        v.sort_by_key(|(at, h, _)| (*at, *h));
        v.into_iter().map(|(_, h, tx)| (h, tx)).collect()
    }

    /// Takes up to `batch_max` pool transactions that apply cleanly in order. Ones that
    /// fail are dropped from the pool and their receipts marked rejected.
    fn select_batch(&mut self, me: NodeId) -> Vec<SignedTransaction> {
        let batch_max = self.cfg.consensus.batch_max;
        let mut scratch = self.nodes[me.index()].state.clone();
        let mut batch = Vec::new();
        for (h, tx) in self.ordered_pool(me) {
            if batch.len() == batch_max {
                break;
            }
            match scratch.apply_signed(&tx, self.store.as_ref()) {
                Ok(_) => batch.push(tx),
                Err(e) => {
                    self.nodes[me.index()].pool.remove(&h);
                    if let Some(r) = self.receipts.get_mut(&h) {
                        if r.committed_at.is_none() && r.rejected.is_none() {
                            r.rejected = Some(e.name());
                        }
                    }
                }
            }
        }
        batch
    }

    /// Applies `block`'s transactions to a copy of `state`, or None if any fails.
    fn apply_block(&self, state: &ContractState, block: &Block) -> Option<ContractState> {
        let mut s = state.clone();
        for tx in &block.txs {
            s.apply_signed(tx, self.store.as_ref()).ok()?;
        }
        Some(s)
    }

    /// Appends a successor block to the node's chain, if it links and applies.
    fn commit_block(&mut self, me: NodeId, block: Block) -> bool {
        let n = &self.nodes[me.index()];
        let h = n.next_height();
        if block.check(h, n.chain.tip()).is_err() {
            return false;
        }
        let Some(state) = self.apply_block(&n.state, &block) else {
            return false;
        };
        let now = self.clock.now();
        let hash = block.block_hash;
        let tx_ids: Vec<Hash> = block.txs.iter().map(|t| t.hash()).collect();
        let n = &mut self.nodes[me.index()];
        n.state = state;
        n.chain.append(block).expect("checked above");
        for id in &tx_ids {
            n.in_chain.insert(*id);
            n.pool.remove(id);
        }
        n.proposals.retain(|&ph, _| ph > h);
        n.acks.retain(|&(ah, _), _| ah > h);
        if n.locked.is_some_and(|(lh, _)| lh <= h) {
            n.locked = None;
        }
        self.commits.push(CommitRecord { node: me, height: h, hash, at_ms: now });
        if self.mode() == ConsensusMode::Poa {
            match self.first_commit.get(&h) {
                Some(first) if *first != hash => self.conflicts.push((h, *first, hash)),
                Some(_) => {}
                None => {
                    self.first_commit.insert(h, hash);
                }
            }
        }
        self.mark_committed(me, &tx_ids);
        self.after_chain_change(me);
        true
    }

    fn mark_committed(&mut self, me: NodeId, tx_ids: &[Hash]) {
        let now = self.clock.now();
        for id in tx_ids {
            if let Some(r) = self.receipts.get_mut(id) {
                if r.via == me && r.committed_at.is_none() {
                    r.committed_at = Some(now);
                }
            }
        }
    }

    /// Rebuilds a peer's speculative state, or restarts an orderer's round or mining.
    fn after_chain_change(&mut self, me: NodeId) {
        let n = &mut self.nodes[me.index()];
        match n.kind {
            NodeKind::Peer => {
                let in_chain = &n.in_chain;
                n.accepted.retain(|t| !in_chain.contains(&t.hash()));
                let mut spec = n.state.clone();
                let store = self.store.as_ref();
                n.accepted.retain(|t| spec.apply_signed(t, store).is_ok());
                n.speculative = spec;
            }
            NodeKind::Orderer => match self.mode() {
                ConsensusMode::Poa => self.refresh_round(me),
                ConsensusMode::Pow => self.schedule_mine(me),
            },
        }
    }

    // ---- PoA ----

    fn leader(&self, height: u64, view: u64) -> NodeId {
        self.orderers[((height + view) % self.orderers.len() as u64) as usize]
    }

    /// Recomputes the orderer's batch round. The round for the next height starts at
    /// the earliest pending arrival, but not before the previous block was sealed.
    /// View `v` fires at `start + (v + 1) * interval`.
    fn refresh_round(&mut self, me: NodeId) {
        let n = &self.nodes[me.index()];
        if n.kind != NodeKind::Orderer || n.crashed {
            return;
        }
        let height = n.next_height();
        let earliest = n.pool.values().map(|p| p.accepted_at).min();
        let round = match earliest {
            None if n.locked.is_some_and(|(lh, _)| lh == height) => n.round,
            None => None,
            Some(first) => {
                let sealed = n.chain.tip().and_then(|b| PoaMeta::decode(&b.header.meta)).map_or(0, |m| m.sealed_at_ms);
                Some(Round { height, start: first.max(sealed) })
            }
        };
        if round == n.round {
            return;
        }
        let n = &mut self.nodes[me.index()];
        n.round = round;
        n.timer_gen += 1;
        if let Some(r) = round {
            let gen = n.timer_gen;
            let at = self.next_view_time(r, self.clock.now());
            self.clock.schedule(at, Event::Timer { node: me, gen });
        }
    }

    /// Earliest view deadline of `r` at or after `now`.
    fn next_view_time(&self, r: Round, now: u64) -> u64 {
        let first = r.start + self.interval_ms;
        if now <= first {
            first
        } else {
            first + (now - first).div_ceil(self.interval_ms) * self.interval_ms
        }
    }

    fn on_timer(&mut self, me: NodeId, gen: u64) {
        let n = &self.nodes[me.index()];
        if n.crashed || gen != n.timer_gen {
            return;
        }
        let Some(r) = n.round else {
            return;
        };
        let now = self.clock.now();
        let view = (now - r.start) / self.interval_ms - 1;
        if r.height == n.next_height() && self.leader(r.height, view) == me {
            self.propose(me, r.height, view);
        }
        let at = r.start + (view + 2) * self.interval_ms;
        self.clock.schedule(at, Event::Timer { node: me, gen });
    }

    fn propose(&mut self, me: NodeId, height: u64, view: u64) {
        let n = &self.nodes[me.index()];
        if let Some((lh, lhash)) = n.locked {
            if lh == height {
                if let Some(b) = n.proposals.get(&lh).and_then(|m| m.get(&lhash)).cloned() {
                    self.broadcast(me, &Msg::Propose { block: b });
                    return;
                }
            }
        }
        let txs = self.select_batch(me);
        if txs.is_empty() {
            self.refresh_round(me);
            return;
        }
        let now = self.clock.now();
        let tip = self.nodes[me.index()].chain.tip().cloned();
        let ts = (now / 1000).max(tip.as_ref().map_or(0, |b| b.header.timestamp));
        let meta = PoaMeta { leader: me.0, view: view as u32, sealed_at_ms: now }.encode();
        let block = build_block(tip.as_ref(), txs, ts, meta).expect("batch of encodable transactions");
        self.broadcast(me, &Msg::Propose { block });
    }

    fn on_propose(&mut self, me: NodeId, from: NodeId, block: Block) {
        let height = block.height();
        let hash = block.block_hash;
        let n = &self.nodes[me.index()];
        let next = n.next_height();
        if height < next {
            return;
        }
        let from_orderer = self.orderers.contains(&from);
        let may_ack = n.kind == NodeKind::Orderer
            && from_orderer
            && height == next
            && n.locked.is_none_or(|l| l == (height, hash))
            && block.check(height, n.chain.tip()).is_ok()
            && self.apply_block(&n.state, &block).is_some();
        if height > next {
            self.send(me, from, Msg::SyncRequest { from_height: next });
        }
        let n = &mut self.nodes[me.index()];
        if from_orderer {
            n.proposals.entry(height).or_default().insert(hash, block);
        }
        if may_ack {
            n.locked = Some((height, hash));
            self.broadcast(me, &Msg::Ack { height, hash });
        }
        self.try_commit(me);
    }

    fn try_commit(&mut self, me: NodeId) {
        if self.mode() != ConsensusMode::Poa {
            return;
        }
        loop {
            let n = &self.nodes[me.index()];
            let h = n.next_height();
            let ready = n.proposals.get(&h).and_then(|m| {
                m.iter().find(|(hash, _)| n.acks.get(&(h, **hash)).is_some_and(|a| a.len() >= self.quorum)).map(|(_, b)| b.clone())
            });
            let Some(b) = ready else {
                return;
            };
            if !self.commit_block(me, b) {
                return;
            }
        }
    }

    // ---- PoW ----

    fn schedule_mine(&mut self, me: NodeId) {
        let n = &mut self.nodes[me.index()];
        if n.kind != NodeKind::Orderer || n.crashed {
            return;
        }
        n.mine_gen += 1;
        let gen = n.mine_gen;
        let mean = (self.interval_ms * self.orderers.len() as u64) as f64;
        let delay = Exp::new(1.0 / mean).expect("positive rate").sample(&mut self.rng).ceil().max(1.0) as u64;
        self.clock.schedule(self.clock.now() + delay, Event::Mine { node: me, gen });
    }

    fn on_mine(&mut self, me: NodeId, gen: u64) {
        let n = &self.nodes[me.index()];
        if n.crashed || gen != n.mine_gen {
            return;
        }
        let txs = self.select_batch(me);
        if txs.is_empty() {
            self.schedule_mine(me);
            return;
        }
        let tip = self.nodes[me.index()].chain.tip().cloned();
        let ts = (self.clock.now() / 1000).max(tip.as_ref().map_or(0, |b| b.header.timestamp));
        let prefix = pow_meta_prefix(me.0);
        let template = build_block(tip.as_ref(), txs.clone(), ts, prefix.clone()).expect("encodable batch").header;
        let nonce = pow_mine(&template, self.cfg.consensus.pow_difficulty);
        let mut meta = prefix;
        meta.extend_from_slice(&nonce.to_be_bytes());
        let block = build_block(tip.as_ref(), txs, ts, meta).expect("encodable batch");
        self.blocks_mined += 1;
        if self.commit_block(me, block.clone()) {
            self.broadcast(me, &Msg::NewBlock { block });
        } else {
            self.schedule_mine(me);
        }
    }

    fn on_new_block(&mut self, me: NodeId, from: NodeId, block: Block) {
        let n = &self.nodes[me.index()];
        if n.chain.get(block.height()).is_some_and(|b| b.block_hash == block.block_hash) {
            return;
        }
        let difficulty = self.cfg.consensus.pow_difficulty;
        if block.header.prev_hash == n.chain.tip_hash() && block.height() == n.next_height() {
            if meets_difficulty(&block.block_hash, difficulty) {
                self.commit_block(me, block);
            }
        } else if (block.height() as usize + 1, std::cmp::Reverse(block.block_hash)) > fork_key(&n.chain) {
            self.send(me, from, Msg::ChainRequest);
        }
    }

    /// Adopts `cand` if it is valid and beats the node's chain under fork choice.
    fn on_candidate_chain(&mut self, me: NodeId, cand: Chain) {
        let n = &self.nodes[me.index()];
        if fork_key(&cand) <= fork_key(&n.chain) {
            return;
        }
        let base = self.base_height as usize;
        let shares_base = cand.len() >= base && cand.blocks()[..base] == n.chain.blocks()[..base];
        if !shares_base
            || validate_chain(&cand).is_err()
            || !chain_meets_difficulty(&cand, self.base_height, self.cfg.consensus.pow_difficulty)
        {
            return;
        }
        let Ok(state) = replay(cand.blocks(), self.store.as_ref()) else {
            return;
        };
        let now = self.clock.now();
        let old = std::mem::replace(&mut self.nodes[me.index()].chain, cand);
        let n = &mut self.nodes[me.index()];
        n.state = state;
        n.in_chain = n.chain.blocks().iter().flat_map(|b| b.txs.iter().map(|t| t.hash())).collect();
        let mut records = Vec::new();
        for b in n.chain.blocks().iter().skip(base) {
            if old.get(b.height()).is_none_or(|o| o.block_hash != b.block_hash) {
                records.push(CommitRecord { node: me, height: b.height(), hash: b.block_hash, at_ms: now });
            }
        }
        let new_ids: Vec<Hash> = n.chain.blocks().iter().skip(base).flat_map(|b| b.txs.iter().map(|t| t.hash())).collect();
        if n.kind == NodeKind::Orderer {
            for b in old.blocks().iter().skip(base) {
                for tx in &b.txs {
                    let h = tx.hash();
                    if !n.in_chain.contains(&h) {
                        let accepted_at = self.receipts.get(&h).map_or(now, |r| r.accepted_at);
                        n.pool.insert(h, Pending { tx: tx.clone(), accepted_at });
                    }
                }
            }
            let in_chain = &n.in_chain;
            n.pool.retain(|h, _| !in_chain.contains(h));
        }
        self.commits.extend(records);
        self.mark_committed(me, &new_ids);
        self.after_chain_change(me);
    }
}
