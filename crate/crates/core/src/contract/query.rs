use serde::Serialize;

use super::{ContractError, ContractState, CustodyInterval, Item};
use crate::exec::Exec;
use crate::types::{ItemId, LocationId, TemperatureReading};

/// Longest tolerated silence within a custody interval: one logger period of 10 minutes.
pub const DEFAULT_GAP_THRESHOLD: u64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Safe,
    Compromised,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Safe => "SAFE",
            Verdict::Compromised => "COMPROMISED",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

/// A stretch of custody with no reading for longer than the gap threshold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Gap {
    pub location: LocationId,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Excursion {
    /// Index of the custody interval in the item's history.
    pub hop: usize,
    pub interval: CustodyInterval,
    pub reading: TemperatureReading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HopReport {
    pub interval: CustodyInterval,
    pub readings: Vec<TemperatureReading>,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemReport {
    pub item: Item,
    pub hops: Vec<HopReport>,
    pub verdict: Verdict,
    pub excursions: Vec<Excursion>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    pub excursions: Vec<Excursion>,
    pub gaps: Vec<Gap>,
}

impl ItemReport {
    pub fn violations(&self) -> Violations {
        Violations {
            excursions: self.excursions.clone(),
            gaps: self.hops.iter().flat_map(|h| h.gaps.iter().cloned()).collect(),
        }
    }
}

/// Silences longer than `threshold` between interval start, readings and interval end.
/// An interval without readings is one gap end to end.
fn gaps_in(location: &LocationId, start: u64, end: u64, readings: &[TemperatureReading], threshold: u64) -> Vec<Gap> {
    let gap = |from, to| Gap { location: location.clone(), from, to };
    if readings.is_empty() {
        return vec![gap(start, end)];
    }
    let mut out = Vec::new();
    let mut prev = start;
    for ts in readings.iter().map(|r| r.ts).chain(std::iter::once(end)) {
        if ts - prev > threshold {
            out.push(gap(prev, ts));
        }
        prev = ts;
    }
    out
}

impl ContractState {
    /// Readings at `location` with `from <= ts < to`, via binary search on the series.
    fn readings_between(&self, location: &LocationId, from: u64, to: u64) -> &[TemperatureReading] {
        let series = self.temps(location);
        let lo = series.partition_point(|r| r.ts < from);
        let hi = series.partition_point(|r| r.ts < to);
        &series[lo..hi.max(lo)]
    }

    /// Every hop of the item with its readings, gaps and excursions. Open intervals are
    /// evaluated up to `now`.
    pub fn query_item_history(&self, item: &ItemId, gap_threshold: u64, now: u64) -> Result<ItemReport, ContractError> {
        let it = self.item(item).ok_or_else(|| ContractError::UnknownItem(item.clone()))?;
        let mut hops = Vec::new();
        let mut excursions = Vec::new();
        for (hop, interval) in self.custody(item).iter().enumerate() {
            let end = interval.end(now);
            let readings = self.readings_between(&interval.location, interval.arrived_at, end);
            excursions.extend(readings.iter().filter(|r| it.is_excursion(r.temp)).map(|r| Excursion {
                hop,
                interval: interval.clone(),
                reading: r.clone(),
            }));
            hops.push(HopReport {
                interval: interval.clone(),
                gaps: gaps_in(&interval.location, interval.arrived_at, end, readings, gap_threshold),
                readings: readings.to_vec(),
            });
        }
        let verdict = if !excursions.is_empty() {
            Verdict::Compromised
        } else if hops.iter().any(|h| !h.gaps.is_empty() || h.readings.is_empty()) {
            Verdict::Unknown
        } else {
            Verdict::Safe
        };
        Ok(ItemReport { item: it.clone(), hops, verdict, excursions })
    }

    /// The excursions and gaps of [`query_item_history`](Self::query_item_history).
    pub fn detect_violations(&self, item: &ItemId, gap_threshold: u64, now: u64) -> Result<Violations, ContractError> {
        Ok(self.query_item_history(item, gap_threshold, now)?.violations())
    }

    /// Items whose custody at `location` covers `at` (`arrived_at <= at < departed_at`).
    pub fn query_location_items(&self, location: &LocationId, at: u64) -> Result<Vec<ItemId>, ContractError> {
        if self.location(location).is_none() {
            return Err(ContractError::UnknownLocation(location.clone()));
        }
        let Some(visits) = self.visits.get(location) else {
            return Ok(Vec::new());
        };
        let upto = visits.partition_point(|v| v.arrived_at <= at);
        let mut out: Vec<ItemId> = visits[..upto]
            .iter()
            .filter(|v| v.departed_at.is_none_or(|d| at < d))
            .map(|v| v.item.clone())
            .collect();
        out.sort();
        Ok(out)
    }

    /// Readings at `location` with `from <= ts <= to`, in time order.
    pub fn query_location_temps(&self, location: &LocationId, from: u64, to: u64) -> Result<Vec<TemperatureReading>, ContractError> {
        if self.location(location).is_none() {
            return Err(ContractError::UnknownLocation(location.clone()));
        }
        if from > to {
            return Err(ContractError::BadRange(format!("from {from} is after to {to}")));
        }
        let series = self.temps(location);
        let lo = series.partition_point(|r| r.ts < from);
        let hi = series.partition_point(|r| r.ts <= to);
        Ok(series[lo..hi].to_vec())
    }
}

/// Reports for many items at once, fanned out over `exec`.
pub fn audit_items(
    state: &ContractState,
    items: &[ItemId],
    gap_threshold: u64,
    now: u64,
    exec: Exec,
) -> Vec<Result<ItemReport, ContractError>> {
    exec.map(items, |id| state.query_item_history(id, gap_threshold, now))
}
