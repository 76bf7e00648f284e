//! The custody contract: a deterministic state machine over signed transactions.
//!
//! Admins manage locations and other admins; each location may bind one sensor key,
//! which is allowed to report that location's temperatures and custody events.
//! Items (vaccine lots) carry a safe temperature range and move between locations
//! strictly depart-then-arrive, so at most one custody interval per item is open.

mod query;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use query::{audit_items, Excursion, Gap, HopReport, ItemReport, Verdict, Violations, DEFAULT_GAP_THRESHOLD};

use crate::ledger::codec::Encoder;
use crate::ledger::{hash_bytes, verify_tx, Block, Hash, KeyId, KeyRegistry, LedgerError, SignedTransaction, TxPayload};
use crate::store::{DumpSource, StoreError};
use crate::types::{ItemId, LocationId, LocationKind, TempCenti, TemperatureReading};

/// Default safe range, +2.00 to +8.00 °C.
pub const DEFAULT_SAFE_MIN: TempCenti = TempCenti(200);
pub const DEFAULT_SAFE_MAX: TempCenti = TempCenti(800);
/// Coldest permitted lower bound of a safe range (ultracold lots, −90.00 °C).
pub const ULTRACOLD_FLOOR: TempCenti = TempCenti(-9_000);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("Unauthorized: {0}")]
    Unauthorized(String),
    #[error("UnknownItem: {0}")]
    UnknownItem(ItemId),
    #[error("UnknownLocation: {0}")]
    UnknownLocation(LocationId),
    #[error("CustodyConflict: {0}")]
    CustodyConflict(String),
    #[error("StaleTimestamp: {got} is not after {last}")]
    StaleTimestamp { last: u64, got: u64 },
    #[error("InactiveLocation: {0}")]
    InactiveLocation(LocationId),
    #[error("DuplicateId: {0}")]
    DuplicateId(String),
    #[error("BadRange: {0}")]
    BadRange(String),
    #[error("OutOfGlobalBounds: {0} °C")]
    OutOfGlobalBounds(TempCenti),
    #[error("DuplicateDeploy: contract already deployed")]
    DuplicateDeploy,
    #[error("UnknownSubmitter: {0:?}")]
    UnknownSubmitter(KeyId),
    #[error("ReplayedNonce: nonce {got} not above {last}")]
    ReplayedNonce { last: u64, got: u64 },
    #[error("InvalidSignature")]
    InvalidSignature,
    #[error("Missing: payload {0} not in store")]
    Missing(Hash),
    #[error("CorruptPayload: stored bytes for {0} do not match their hash")]
    CorruptPayload(Hash),
    #[error("DumpMismatch: {0}")]
    DumpMismatch(String),
    #[error("NotGenesis: {0}")]
    NotGenesis(String),
}

impl ContractError {
    /// The bare error name, e.g. `Unauthorized`.
    pub fn name(&self) -> &'static str {
        match self {
            ContractError::Unauthorized(_) => "Unauthorized",
            ContractError::UnknownItem(_) => "UnknownItem",
            ContractError::UnknownLocation(_) => "UnknownLocation",
            ContractError::CustodyConflict(_) => "CustodyConflict",
            ContractError::StaleTimestamp { .. } => "StaleTimestamp",
            ContractError::InactiveLocation(_) => "InactiveLocation",
            ContractError::DuplicateId(_) => "DuplicateId",
            ContractError::BadRange(_) => "BadRange",
            ContractError::OutOfGlobalBounds(_) => "OutOfGlobalBounds",
            ContractError::DuplicateDeploy => "DuplicateDeploy",
            ContractError::UnknownSubmitter(_) => "UnknownSubmitter",
            ContractError::ReplayedNonce { .. } => "ReplayedNonce",
            ContractError::InvalidSignature => "InvalidSignature",
            ContractError::Missing(_) => "Missing",
            ContractError::CorruptPayload(_) => "CorruptPayload",
            ContractError::DumpMismatch(_) => "DumpMismatch",
            ContractError::NotGenesis(_) => "NotGenesis",
        }
    }
}

impl From<StoreError> for ContractError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Missing(h) => ContractError::Missing(h),
            StoreError::CorruptPayload(h) => ContractError::CorruptPayload(h),
            other => ContractError::DumpMismatch(other.to_string()),
        }
    }
}

type Result<T, E = ContractError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Location {
    pub id: LocationId,
    pub kind: LocationKind,
    pub active: bool,
    pub sensor: Option<KeyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Item {
    pub id: ItemId,
    pub manufacturer: LocationId,
    pub safe_min: TempCenti,
    pub safe_max: TempCenti,
    pub registered_at: u64,
}

impl Item {
    /// A lot with the default +2 to +8 °C range.
    pub fn standard(id: impl Into<String>, manufacturer: impl Into<String>, registered_at: u64) -> Self {
        Item {
            id: ItemId(id.into()),
            manufacturer: LocationId(manufacturer.into()),
            safe_min: DEFAULT_SAFE_MIN,
            safe_max: DEFAULT_SAFE_MAX,
            registered_at,
        }
    }

    /// Closed-range check: readings exactly on a bound are safe.
    pub fn is_excursion(&self, temp: TempCenti) -> bool {
        temp < self.safe_min || temp > self.safe_max
    }

    pub fn to_payload(&self) -> TxPayload {
        TxPayload::RegisterItem {
            id: self.id.clone(),
            manufacturer: self.manufacturer.clone(),
            safe_min: self.safe_min,
            safe_max: self.safe_max,
            registered_at: self.registered_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CustodyInterval {
    pub location: LocationId,
    pub arrived_at: u64,
    /// `None` while the item is still at the location.
    pub departed_at: Option<u64>,
}

impl CustodyInterval {
    pub fn is_open(&self) -> bool {
        self.departed_at.is_none()
    }

    /// Half-open membership `arrived_at <= ts < end`, where an open interval ends at `now`.
    pub fn covers(&self, ts: u64, now: u64) -> bool {
        self.arrived_at <= ts && ts < self.end(now)
    }

    pub fn end(&self, now: u64) -> u64 {
        self.departed_at.unwrap_or(now.max(self.arrived_at))
    }
}

/// Per-location view of an item's stay, kept alongside `custody`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Visit {
    item: ItemId,
    arrived_at: u64,
    departed_at: Option<u64>,
}

/// Raised when a reading falls outside the safe range of an item held at that location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Alarm {
    pub item: ItemId,
    pub location: LocationId,
    pub ts: u64,
    pub temp: TempCenti,
    pub safe_min: TempCenti,
    pub safe_max: TempCenti,
}

/// Side results of an accepted transaction. Alarms are not stored in the state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TxOutcome {
    pub alarms: Vec<Alarm>,
}

/// The world state: admins, locations, items, custody and temperature history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractState {
    deployer: KeyId,
    admins: BTreeSet<KeyId>,
    locations: BTreeMap<LocationId, Location>,
    items: BTreeMap<ItemId, Item>,
    custody: BTreeMap<ItemId, Vec<CustodyInterval>>,
    temps: BTreeMap<LocationId, Vec<TemperatureReading>>,
    sensor_bindings: BTreeMap<KeyId, LocationId>,
    last_nonce: BTreeMap<KeyId, u64>,
    visits: BTreeMap<LocationId, Vec<Visit>>,
}

impl KeyRegistry for ContractState {
    fn is_registered(&self, key: &KeyId) -> bool {
        self.admins.contains(key) || self.sensor_bindings.contains_key(key)
    }

    fn last_nonce(&self, key: &KeyId) -> u64 {
        self.last_nonce.get(key).copied().unwrap_or(0)
    }
}

impl ContractState {
    /// Fresh state whose only admin is the deployer.
    pub fn deploy(deployer: KeyId) -> Self {
        ContractState {
            deployer,
            admins: BTreeSet::from([deployer]),
            locations: BTreeMap::new(),
            items: BTreeMap::new(),
            custody: BTreeMap::new(),
            temps: BTreeMap::new(),
            sensor_bindings: BTreeMap::new(),
            last_nonce: BTreeMap::new(),
            visits: BTreeMap::new(),
        }
    }

    /// State from a genesis block holding exactly one signed `Deploy` transaction.
    pub fn from_genesis(genesis: &Block) -> Result<Self> {
        if !genesis.is_genesis() {
            return Err(ContractError::NotGenesis("block is not at height 0".into()));
        }
        let [tx] = genesis.txs.as_slice() else {
            return Err(ContractError::NotGenesis(format!("{} transactions in genesis", genesis.txs.len())));
        };
        if tx.payload != TxPayload::Deploy {
            return Err(ContractError::NotGenesis(format!("genesis carries {}", tx.payload.kind())));
        }
        if !tx.signature_valid() {
            return Err(ContractError::InvalidSignature);
        }
        let mut state = ContractState::deploy(tx.submitter);
        state.last_nonce.insert(tx.submitter, tx.nonce);
        Ok(state)
    }

    pub fn deployer(&self) -> &KeyId {
        &self.deployer
    }

    pub fn is_admin(&self, key: &KeyId) -> bool {
        self.admins.contains(key)
    }

    pub fn admins(&self) -> impl Iterator<Item = &KeyId> {
        self.admins.iter()
    }

    pub fn location(&self, id: &LocationId) -> Option<&Location> {
        self.locations.get(id)
    }

    pub fn locations(&self) -> impl Iterator<Item = &Location> {
        self.locations.values()
    }

    pub fn item(&self, id: &ItemId) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    pub fn custody(&self, item: &ItemId) -> &[CustodyInterval] {
        self.custody.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn temps(&self, location: &LocationId) -> &[TemperatureReading] {
        self.temps.get(location).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sensor_location(&self, key: &KeyId) -> Option<&LocationId> {
        self.sensor_bindings.get(key)
    }

    pub fn sensor_bindings(&self) -> impl Iterator<Item = (&KeyId, &LocationId)> {
        self.sensor_bindings.iter()
    }

    /// Latest timestamp mentioned anywhere in custody or temperature history.
    pub fn latest_event_ts(&self) -> u64 {
        let custody = self.custody.values().flatten().map(|c| c.departed_at.unwrap_or(c.arrived_at));
        let temps = self.temps.values().filter_map(|s| s.last()).map(|r| r.ts);
        let items = self.items.values().map(|i| i.registered_at);
        custody.chain(temps).chain(items).max().unwrap_or(0)
    }

    fn require_admin(&self, caller: &KeyId) -> Result<()> {
        if self.admins.contains(caller) {
            Ok(())
        } else {
            Err(ContractError::Unauthorized(format!("{} is not an admin", caller.short())))
        }
    }

    /// Admins act anywhere; a sensor key only for the location it is bound to.
    pub(crate) fn require_location_actor(&self, caller: &KeyId, location: &LocationId) -> Result<()> {
        if self.admins.contains(caller) || self.sensor_bindings.get(caller) == Some(location) {
            Ok(())
        } else {
            Err(ContractError::Unauthorized(format!("{} may not act for {location}", caller.short())))
        }
    }

    fn active_location(&self, id: &LocationId) -> Result<&Location> {
        let loc = self.locations.get(id).ok_or_else(|| ContractError::UnknownLocation(id.clone()))?;
        if !loc.active {
            return Err(ContractError::InactiveLocation(id.clone()));
        }
        Ok(loc)
    }

    pub fn add_admin(&mut self, caller: &KeyId, new_admin: KeyId) -> Result<()> {
        self.require_admin(caller)?;
        if !self.admins.insert(new_admin) {
            return Err(ContractError::DuplicateId(format!("admin {}", new_admin.short())));
        }
        Ok(())
    }

    pub fn add_location(&mut self, caller: &KeyId, id: LocationId, kind: LocationKind, sensor: Option<KeyId>) -> Result<()> {
        self.require_admin(caller)?;
        if self.locations.contains_key(&id) {
            return Err(ContractError::DuplicateId(format!("location {id}")));
        }
        if let Some(k) = sensor {
            if let Some(bound) = self.sensor_bindings.get(&k) {
                return Err(ContractError::DuplicateId(format!("sensor {} already bound to {bound}", k.short())));
            }
            self.sensor_bindings.insert(k, id.clone());
        }
        self.locations.insert(id.clone(), Location { id, kind, active: true, sensor });
        Ok(())
    }

    /// Marks the location inactive. Its custody and temperature history stay in place.
    pub fn remove_location(&mut self, caller: &KeyId, id: &LocationId) -> Result<()> {
        self.require_admin(caller)?;
        let loc = self.locations.get_mut(id).ok_or_else(|| ContractError::UnknownLocation(id.clone()))?;
        if !loc.active {
            return Err(ContractError::InactiveLocation(id.clone()));
        }
        loc.active = false;
        Ok(())
    }

    pub fn register_item(&mut self, caller: &KeyId, item: Item) -> Result<()> {
        self.require_location_actor(caller, &item.manufacturer)?;
        if self.items.contains_key(&item.id) {
            return Err(ContractError::DuplicateId(format!("item {}", item.id)));
        }
        self.active_location(&item.manufacturer)?;
        if item.safe_min >= item.safe_max {
            return Err(ContractError::BadRange(format!("safe_min {} must be below safe_max {}", item.safe_min, item.safe_max)));
        }
        if item.safe_min < ULTRACOLD_FLOOR || !item.safe_max.within_global_bounds() {
            return Err(ContractError::BadRange(format!(
                "safe range [{}, {}] outside [{ULTRACOLD_FLOOR}, {}]",
                item.safe_min,
                item.safe_max,
                crate::types::GLOBAL_TEMP_MAX
            )));
        }
        let interval = CustodyInterval { location: item.manufacturer.clone(), arrived_at: item.registered_at, departed_at: None };
        self.push_visit(&item.manufacturer, Visit { item: item.id.clone(), arrived_at: item.registered_at, departed_at: None });
        self.custody.insert(item.id.clone(), vec![interval]);
        self.items.insert(item.id.clone(), item);
        Ok(())
    }

    /// Keeps each location's visits sorted by arrival time.
    fn push_visit(&mut self, location: &LocationId, visit: Visit) {
        let vs = self.visits.entry(location.clone()).or_default();
        let at = vs.partition_point(|v| v.arrived_at <= visit.arrived_at);
        vs.insert(at, visit);
    }

    fn last_event_ts(&self, item: &ItemId) -> u64 {
        let registered = self.items.get(item).map_or(0, |i| i.registered_at);
        self.custody(item)
            .last()
            .map_or(registered, |c| c.departed_at.unwrap_or(c.arrived_at).max(registered))
    }

    pub fn record_arrival(&mut self, caller: &KeyId, item: &ItemId, location: &LocationId, ts: u64) -> Result<()> {
        self.require_location_actor(caller, location)?;
        if !self.items.contains_key(item) {
            return Err(ContractError::UnknownItem(item.clone()));
        }
        self.active_location(location)?;
        if let Some(open) = self.custody(item).iter().find(|c| c.is_open()) {
            return Err(ContractError::CustodyConflict(format!(
                "{item} is still held at {}; record its departure first",
                open.location
            )));
        }
        let last = self.last_event_ts(item);
        if ts <= last {
            return Err(ContractError::StaleTimestamp { last, got: ts });
        }
        self.custody.entry(item.clone()).or_default().push(CustodyInterval {
            location: location.clone(),
            arrived_at: ts,
            departed_at: None,
        });
        self.push_visit(location, Visit { item: item.clone(), arrived_at: ts, departed_at: None });
        Ok(())
    }

    /// Closes the item's open interval at `location`. Allowed even if the location has
    /// since been deactivated, so stock can still be moved out.
    pub fn record_departure(&mut self, caller: &KeyId, item: &ItemId, location: &LocationId, ts: u64) -> Result<()> {
        self.require_location_actor(caller, location)?;
        if !self.items.contains_key(item) {
            return Err(ContractError::UnknownItem(item.clone()));
        }
        if !self.locations.contains_key(location) {
            return Err(ContractError::UnknownLocation(location.clone()));
        }
        let intervals = self.custody.get_mut(item).expect("registered items always have custody");
        let open = intervals
            .iter_mut()
            .find(|c| c.is_open())
            .filter(|c| &c.location == location)
            .ok_or_else(|| ContractError::CustodyConflict(format!("{item} is not currently held at {location}")))?;
        if ts <= open.arrived_at {
            return Err(ContractError::StaleTimestamp { last: open.arrived_at, got: ts });
        }
        open.departed_at = Some(ts);
        let visit = self
            .visits
            .get_mut(location)
            .and_then(|vs| vs.iter_mut().rev().find(|v| &v.item == item && v.departed_at.is_none()))
            .expect("open custody has a matching visit");
        visit.departed_at = Some(ts);
        Ok(())
    }

    /// Checks a reading against location state without mutating anything.
    fn check_reading(&self, caller: &KeyId, reading: &TemperatureReading, last_ts: Option<u64>) -> Result<()> {
        self.require_location_actor(caller, &reading.location)?;
        self.active_location(&reading.location)?;
        if !reading.temp.within_global_bounds() {
            return Err(ContractError::OutOfGlobalBounds(reading.temp));
        }
        if let Some(last) = last_ts {
            if reading.ts <= last {
                return Err(ContractError::StaleTimestamp { last, got: reading.ts });
            }
        }
        Ok(())
    }

    fn alarms_for(&self, reading: &TemperatureReading) -> Vec<Alarm> {
        let Some(visits) = self.visits.get(&reading.location) else {
            return Vec::new();
        };
        visits
            .iter()
            .filter(|v| v.departed_at.is_none() && v.arrived_at <= reading.ts)
            .filter_map(|v| self.items.get(&v.item))
            .filter(|item| item.is_excursion(reading.temp))
            .map(|item| Alarm {
                item: item.id.clone(),
                location: reading.location.clone(),
                ts: reading.ts,
                temp: reading.temp,
                safe_min: item.safe_min,
                safe_max: item.safe_max,
            })
            .collect()
    }

    /// Appends a reading; out-of-range readings are still stored and reported as alarms.
    pub fn record_temperature(&mut self, caller: &KeyId, reading: TemperatureReading) -> Result<Vec<Alarm>> {
        let last = self.temps(&reading.location).last().map(|r| r.ts);
        self.check_reading(caller, &reading, last)?;
        let alarms = self.alarms_for(&reading);
        self.temps.entry(reading.location.clone()).or_default().push(reading);
        Ok(alarms)
    }

    /// Validates and folds a batch of readings for one location, all or nothing.
    pub(crate) fn record_temperature_batch(&mut self, caller: &KeyId, readings: &[TemperatureReading]) -> Result<Vec<Alarm>> {
        let mut last = readings.first().and_then(|r| self.temps(&r.location).last().map(|x| x.ts));
        for r in readings {
            self.check_reading(caller, r, last)?;
            last = Some(r.ts);
        }
        let mut alarms = Vec::new();
        for r in readings {
            alarms.extend(self.alarms_for(r));
            self.temps.entry(r.location.clone()).or_default().push(r.clone());
        }
        Ok(alarms)
    }

    /// Signature, registration and nonce checks, then [`apply_tx`](Self::apply_tx).
    pub fn apply_signed(&mut self, tx: &SignedTransaction, store: &dyn DumpSource) -> Result<TxOutcome> {
        if tx.payload == TxPayload::Deploy {
            return Err(ContractError::DuplicateDeploy);
        }
        match verify_tx(tx, self) {
            Err(LedgerError::UnknownSubmitter(k)) => return Err(ContractError::UnknownSubmitter(k)),
            Err(e) => unreachable!("verify_tx only fails with UnknownSubmitter: {e}"),
            Ok(true) => {}
            Ok(false) if !tx.signature_valid() => return Err(ContractError::InvalidSignature),
            Ok(false) => {
                return Err(ContractError::ReplayedNonce { last: KeyRegistry::last_nonce(self, &tx.submitter), got: tx.nonce })
            }
        }
        self.apply_tx(tx, store)
    }

    /// Executes a transaction whose signature and nonce have already been checked.
    /// On error the state is untouched.
    pub fn apply_tx(&mut self, tx: &SignedTransaction, store: &dyn DumpSource) -> Result<TxOutcome> {
        let caller = &tx.submitter;
        let mut outcome = TxOutcome::default();
        match &tx.payload {
            TxPayload::Deploy => return Err(ContractError::DuplicateDeploy),
            TxPayload::RegisterItem { id, manufacturer, safe_min, safe_max, registered_at } => self.register_item(
                caller,
                Item {
                    id: id.clone(),
                    manufacturer: manufacturer.clone(),
                    safe_min: *safe_min,
                    safe_max: *safe_max,
                    registered_at: *registered_at,
                },
            )?,
            TxPayload::AddAdmin { admin } => self.add_admin(caller, *admin)?,
            TxPayload::AddLocation { id, kind, sensor } => self.add_location(caller, id.clone(), *kind, *sensor)?,
            TxPayload::RemoveLocation { id } => self.remove_location(caller, id)?,
            TxPayload::ItemArrival { item, location, ts } => self.record_arrival(caller, item, location, *ts)?,
            TxPayload::ItemDeparture { item, location, ts } => self.record_departure(caller, item, location, *ts)?,
            TxPayload::TemperatureReading(r) => outcome.alarms = self.record_temperature(caller, r.clone())?,
            TxPayload::LoggerDumpRef(r) => outcome.alarms = self.ingest_dump(caller, r, store)?,
        }
        let n = self.last_nonce.entry(*caller).or_insert(0);
        *n = (*n).max(tx.nonce);
        Ok(outcome)
    }

    /// Canonical encoding of the full world state (the per-location index is derived and excluded).
    pub fn encode(&self) -> Vec<u8> {
        fn s(e: &mut Encoder, v: &str) {
            e.u32(v.len() as u32).fixed(v.as_bytes());
        }
        fn opt_u64(e: &mut Encoder, v: Option<u64>) {
            match v {
                Some(x) => e.u8(1).u64(x),
                None => e.u8(0),
            };
        }
        let mut e = Encoder::new();
        e.fixed(&self.deployer.0);
        e.u32(self.admins.len() as u32);
        for a in &self.admins {
            e.fixed(&a.0);
        }
        e.u32(self.locations.len() as u32);
        for l in self.locations.values() {
            s(&mut e, l.id.as_str());
            e.u8(l.kind.code()).u8(u8::from(l.active));
            match l.sensor {
                Some(k) => e.u8(1).fixed(&k.0),
                None => e.u8(0),
            };
        }
        e.u32(self.items.len() as u32);
        for i in self.items.values() {
            s(&mut e, i.id.as_str());
            s(&mut e, i.manufacturer.as_str());
            e.i32(i.safe_min.get()).i32(i.safe_max.get()).u64(i.registered_at);
        }
        e.u32(self.custody.len() as u32);
        for (item, intervals) in &self.custody {
            s(&mut e, item.as_str());
            e.u32(intervals.len() as u32);
            for c in intervals {
                s(&mut e, c.location.as_str());
                e.u64(c.arrived_at);
                opt_u64(&mut e, c.departed_at);
            }
        }
        e.u32(self.temps.len() as u32);
        for (loc, series) in &self.temps {
            s(&mut e, loc.as_str());
            e.u32(series.len() as u32);
            for r in series {
                e.u64(r.ts).i32(r.temp.get());
            }
        }
        e.u32(self.sensor_bindings.len() as u32);
        for (k, loc) in &self.sensor_bindings {
            e.fixed(&k.0);
            s(&mut e, loc.as_str());
        }
        e.u32(self.last_nonce.len() as u32);
        for (k, n) in &self.last_nonce {
            e.fixed(&k.0).u64(*n);
        }
        e.finish()
    }

    /// SHA-256 of [`encode`](Self::encode).
    pub fn state_root(&self) -> Hash {
        hash_bytes(&self.encode())
    }

    /// Structural invariants; used by tests after every applied transaction.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !self.admins.contains(&self.deployer) {
            return Err("deployer lost admin rights".into());
        }
        for (item, intervals) in &self.custody {
            if !self.items.contains_key(item) {
                return Err(format!("custody for unknown item {item}"));
            }
            if intervals.iter().filter(|c| c.is_open()).count() > 1 {
                return Err(format!("{item} has more than one open interval"));
            }
            for c in intervals {
                if !self.locations.contains_key(&c.location) {
                    return Err(format!("custody at unknown location {}", c.location));
                }
                if c.departed_at.is_some_and(|d| d <= c.arrived_at) {
                    return Err(format!("{item} departs {} before arriving", c.location));
                }
            }
            for w in intervals.windows(2) {
                match w[0].departed_at {
                    Some(d) if d < w[1].arrived_at => {}
                    _ => return Err(format!("{item} intervals overlap or are out of order")),
                }
            }
        }
        for (loc, series) in &self.temps {
            if series.windows(2).any(|w| w[0].ts >= w[1].ts) {
                return Err(format!("temperatures at {loc} not strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Rebuilds the state by executing every block's transactions from genesis.
pub fn replay(blocks: &[Block], store: &dyn DumpSource) -> std::result::Result<ContractState, (u64, ContractError)> {
    let (genesis, rest) = blocks.split_first().ok_or((0, ContractError::NotGenesis("empty chain".into())))?;
    let mut state = ContractState::from_genesis(genesis).map_err(|e| (0, e))?;
    for b in rest {
        for tx in &b.txs {
            state.apply_signed(tx, store).map_err(|e| (b.height(), e))?;
        }
    }
    Ok(state)
}
