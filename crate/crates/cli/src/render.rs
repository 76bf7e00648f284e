use std::fmt::Write;

use serde_json::json;

use bcc_core::contract::{ContractState, ItemReport};
use bcc_core::types::{ItemId, LocationId, TemperatureReading};

use crate::ctx::Format;

fn span(from: u64, to: Option<u64>) -> String {
    match to {
        Some(t) => format!("[{from}, {t})"),
        None => format!("[{from}, open)"),
    }
}

pub fn inspect(state: &ContractState, blocks: u64, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Json => {
            let v = json!({
                "blocks": blocks,
                "state_root": state.state_root().to_hex(),
                "admins": state.admins().map(|k| k.to_hex()).collect::<Vec<_>>(),
                "locations": state.locations().collect::<Vec<_>>(),
                "items": state.items().map(|i| json!({
                    "item": i,
                    "custody": state.custody(&i.id),
                })).collect::<Vec<_>>(),
            });
            let _ = writeln!(out, "{v:#}");
        }
        Format::Csv => {
            let _ = writeln!(out, "record,id,detail");
            for l in state.locations() {
                let _ = writeln!(out, "location,{},{} active={}", l.id, l.kind, l.active);
            }
            for i in state.items() {
                let _ = writeln!(out, "item,{},{} {}..{}", i.id, i.manufacturer, i.safe_min, i.safe_max);
            }
        }
        Format::Table => {
            let _ = writeln!(out, "blocks {blocks}  state root {}", state.state_root());
            let _ = writeln!(out, "admins:");
            for a in state.admins() {
                let _ = writeln!(out, "  {}", a.to_hex());
            }
            let _ = writeln!(out, "locations:");
            for l in state.locations() {
                let sensor = l.sensor.map_or("-".to_string(), |k| k.short());
                let status = if l.active { "active" } else { "removed" };
                let _ = writeln!(out, "  {:<16} {:<18} {:<8} sensor {sensor}", l.id, l.kind, status);
            }
            let _ = writeln!(out, "items:");
            for i in state.items() {
                let here = state.custody(&i.id).last().map_or("-".to_string(), |c| {
                    if c.is_open() {
                        format!("at {}", c.location)
                    } else {
                        format!("left {}", c.location)
                    }
                });
                let _ = writeln!(
                    out,
                    "  {:<16} from {:<16} {}..{} °C  {} hops, {here}",
                    i.id,
                    i.manufacturer,
                    i.safe_min,
                    i.safe_max,
                    state.custody(&i.id).len()
                );
            }
        }
    }
    out
}

pub fn items(location: &LocationId, at: u64, items: &[ItemId], format: Format) -> String {
    match format {
        Format::Json => format!("{:#}\n", json!({ "location": location, "at": at, "items": items })),
        Format::Csv => std::iter::once("item\n".to_string()).chain(items.iter().map(|i| format!("{i}\n"))).collect(),
        Format::Table => {
            let mut out = format!("{} items at {location} as of {at}\n", items.len());
            for i in items {
                let _ = writeln!(out, "  {i}");
            }
            out
        }
    }
}

pub fn temps(temps: &[TemperatureReading], format: Format) -> String {
    match format {
        Format::Json => format!("{:#}\n", json!({ "count": temps.len(), "readings": temps })),
        Format::Csv => {
            let mut out = String::from("location,ts,temp\n");
            for r in temps {
                let _ = writeln!(out, "{},{},{}", r.location, r.ts, r.temp);
            }
            out
        }
        Format::Table => {
            let mut out = format!("{} readings\n", temps.len());
            for r in temps {
                let _ = writeln!(out, "  {} {:>8} °C  {}", r.ts, r.temp.to_string(), r.location);
            }
            out
        }
    }
}

pub fn report(r: &ItemReport, format: Format) -> String {
    match format {
        Format::Json => format!("{:#}\n", json!(r)),
        Format::Csv => {
            let mut out = String::from("hop,location,arrived_at,departed_at,readings,min,max,gaps,excursions\n");
            for (i, h) in r.hops.iter().enumerate() {
                let min = h.readings.iter().map(|x| x.temp).min().map_or(String::new(), |t| t.to_string());
                let max = h.readings.iter().map(|x| x.temp).max().map_or(String::new(), |t| t.to_string());
                let exc = r.excursions.iter().filter(|e| e.hop == i).count();
                let departed = h.interval.departed_at.map_or(String::new(), |d| d.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{departed},{},{min},{max},{},{exc}",
                    i + 1,
                    h.interval.location,
                    h.interval.arrived_at,
                    h.readings.len(),
                    h.gaps.len()
                );
            }
            out
        }
        Format::Table => {
            let it = &r.item;
            let mut out = format!(
                "item {}  manufacturer {}  safe {}..{} °C\n{} hops\n",
                it.id,
                it.manufacturer,
                it.safe_min,
                it.safe_max,
                r.hops.len()
            );
            for (i, h) in r.hops.iter().enumerate() {
                let iv = &h.interval;
                let temps = match (h.readings.iter().map(|x| x.temp).min(), h.readings.iter().map(|x| x.temp).max()) {
                    (Some(lo), Some(hi)) => format!("{lo}..{hi} °C"),
                    _ => "no readings".to_string(),
                };
                let _ = writeln!(
                    out,
                    "  hop {}  {:<16} {:<22} {:>4} readings  {temps}  {} gaps",
                    i + 1,
                    iv.location,
                    span(iv.arrived_at, iv.departed_at),
                    h.readings.len(),
                    h.gaps.len()
                );
            }
            for e in &r.excursions {
                let iv = &e.interval;
                let _ = writeln!(
                    out,
                    "excursion at {} ts {}: {} °C during hop {} {}",
                    iv.location,
                    e.reading.ts,
                    e.reading.temp,
                    e.hop + 1,
                    span(iv.arrived_at, iv.departed_at)
                );
            }
            for g in r.hops.iter().flat_map(|h| &h.gaps) {
                let _ = writeln!(out, "gap at {} from {} to {}", g.location, g.from, g.to);
            }
            let _ = writeln!(out, "verdict {}", r.verdict);
            out
        }
    }
}
