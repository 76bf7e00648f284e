//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr (bypassing the test harness capture) before asserting.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bcc_core::bench::run_bench;
use bcc_core::contract::{ContractState, CustodyInterval, Excursion, Gap, Item, Verdict, DEFAULT_GAP_THRESHOLD};
use bcc_core::ledger::{
    build_block, decode_ledger, encode_ledger, sign_tx, validate_chain, Chain, Hash, Keypair, TxPayload,
};
use bcc_core::sim::{
    bootstrap_chain, commit_log_csv, latency_csv, ConsensusMode, Fault, FaultEvent, FaultKind, NetworkConfig, NodeId, PoaMeta,
    Scenario, SimError, Simulation,
};
use bcc_core::store::LoggerDump;
use bcc_core::types::{ItemId, LocationId, LocationKind, TemperatureReading};
use bcc_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Bcc;

const T0: u64 = 1_700_000_000;
const INTERVAL_MS: u64 = 11_000;

fn verdict_line(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "criterion {n}: {status} - {detail}");
}

// ---------------------------------------------------------------- 1

fn random_chain(rng: &mut ChaCha8Rng, blocks: usize) -> Chain {
    let admin = Keypair::from_label("acc-admin");
    let sensors: Vec<Keypair> = (0..3).map(|i| Keypair::from_label(&format!("acc-sensor-{i}"))).collect();
    let g = build_block(None, vec![sign_tx(&admin, TxPayload::Deploy, 1).unwrap()], T0, b"genesis".to_vec()).unwrap();
    let mut chain = Chain::with_genesis(g).unwrap();
    let setup = sensors
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let p = TxPayload::AddLocation { id: LocationId::new(format!("L-{i}")), kind: LocationKind::ColdBox, sensor: Some(k.id()) };
            sign_tx(&admin, p, 2 + i as u64).unwrap()
        })
        .collect();
    chain.append(build_block(chain.tip(), setup, T0, Vec::new()).unwrap()).unwrap();
    let mut nonce = [0u64; 3];
    let mut ts = T0;
    for h in 2..blocks as u64 {
        let txs = (0..rng.random_range(1..=4))
            .map(|_| {
                let s = rng.random_range(0..3);
                nonce[s] += 1;
                ts += rng.random_range(1..120);
                let r = TemperatureReading::new(format!("L-{s}"), ts, rng.random_range(-500..1_500));
                sign_tx(&sensors[s], TxPayload::TemperatureReading(r), nonce[s]).unwrap()
            })
            .collect();
        let meta = rng.random::<u64>().to_be_bytes().to_vec();
        chain.append(build_block(chain.tip(), txs, T0 + h * 11, meta).unwrap()).unwrap();
    }
    chain
}

#[test]
fn criterion_1_tamper_evidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let (mut detected, mut within, mut total) = (0, 0, 0);
    for _ in 0..200 {
        let len = rng.random_range(10..=50);
        let chain = random_chain(&mut rng, len);
        let mut bytes = encode_ledger(&chain).unwrap();
        let spans = spans(&bytes);
        let pos = rng.random_range(4..bytes.len());
        let height = spans.iter().position(|(s, e)| (*s..*e).contains(&pos)).unwrap() as u64;
        bytes[pos] ^= rng.random_range(1..=255u8);
        total += 1;
        let reported = match decode_ledger(&bytes) {
            Err(e) => e.height(),
            Ok(c) => validate_chain(&c).err().map(|f| f.height),
        };
        if let Some(h) = reported {
            detected += 1;
            within += usize::from(h <= height);
        }
    }
    let elapsed = started.elapsed();
    let pass = detected == total && within == total && total >= 100 && elapsed < Duration::from_secs(10);
    verdict_line(1, pass, &format!("{detected}/{total} mutations detected, {within} at or below the mutated height, {elapsed:.2?} (limit 10 s)"));
    assert!(pass);
}

fn spans(bytes: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut at = 4;
    while at < bytes.len() {
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        spans.push((at, at + 4 + len));
        at += 4 + len;
    }
    spans
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_latency_shape() {
    let started = Instant::now();
    let r = Scenario::default().run().unwrap();
    let wall = started.elapsed();
    let lat: Vec<f64> = r.receipts.iter().filter_map(|x| x.committed_at.map(|c| (c - x.accepted_at) as f64 / 1000.0)).collect();
    let views: Vec<f64> = r.view_latencies_ms.iter().map(|&v| v as f64 / 1000.0).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let (ms, xs, mv, xv) = (mean(&lat), max(&lat), mean(&views), max(&views));
    let ratio = ms / mv;
    let pass = r.receipts.len() == 500
        && lat.len() == 500
        && (ms - 11.0).abs() <= 11.0 * 0.2
        && xs <= 71.0
        && mv <= 0.05 * 2.0
        && xv <= 0.3
        && ratio > 100.0
        && wall < Duration::from_secs(30);
    verdict_line(
        2,
        pass,
        &format!(
            "{} committed, submit mean {ms:.3} s max {xs:.3} s, view mean {mv:.4} s max {xv:.3} s, ratio {ratio:.0}x, wall {wall:.2?}",
            lat.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

struct World {
    state: ContractState,
    readings: BTreeMap<LocationId, Vec<TemperatureReading>>,
    items: Vec<(Item, Vec<CustodyInterval>)>,
    now: u64,
}

fn world(seed: u64) -> (World, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let admin = Keypair::from_label("acc-oracle").id();
    let mut state = ContractState::deploy(admin);
    let locs: Vec<LocationId> = (0..6).map(|i| LocationId::new(format!("SITE-{i}"))).collect();
    for l in &locs {
        state.add_location(&admin, l.clone(), LocationKind::ColdRoom, None).unwrap();
    }
    // custody plans first, so excursions can be aimed at a hop: (location, arrived, departed)
    let mut plans = Vec::new();
    for i in 0..rng.random_range(1..=10) {
        let mut t = T0 + rng.random_range(0..3_000);
        let first = rng.random_range(0..locs.len());
        let item = Item::standard(format!("LOT-{i}"), locs[first].as_str(), t);
        let mut hops: Vec<(usize, u64, Option<u64>)> = vec![(first, t, None)];
        for _ in 1..rng.random_range(1..=6) {
            t += rng.random_range(1_500..12_000);
            hops.last_mut().unwrap().2 = Some(t);
            t += rng.random_range(1..900);
            hops.push((rng.random_range(0..locs.len()), t, None));
        }
        if rng.random_bool(0.5) {
            hops.last_mut().unwrap().2 = Some(t + rng.random_range(600..6_000));
        }
        plans.push((item, hops));
    }
    let horizon = T0 + 90_000;
    let mut readings: BTreeMap<LocationId, Vec<TemperatureReading>> = BTreeMap::new();
    for l in &locs {
        let flaky = rng.random_bool(0.35);
        let mut ts = T0 + rng.random_range(1..300);
        let series = readings.entry(l.clone()).or_default();
        while ts < horizon {
            let temp = if rng.random_bool(0.02) { [200, 800][rng.random_range(0..2)] } else { rng.random_range(300..=700) };
            series.push(TemperatureReading::new(l.as_str(), ts, temp));
            ts += if flaky && rng.random_bool(0.05) { rng.random_range(601..2_400) } else { rng.random_range(60..=580) };
        }
    }
    let excursions = rng.random_range(0..=3);
    for _ in 0..excursions {
        let (item, hops) = &plans[rng.random_range(0..plans.len())];
        let (loc, from, to) = hops[rng.random_range(0..hops.len())];
        let to = to.unwrap_or(horizon);
        let series = readings.get_mut(&locs[loc]).unwrap();
        let inside: Vec<usize> = (0..series.len()).filter(|&k| series[k].ts >= from && series[k].ts < to).collect();
        if let Some(&k) = inside.get(rng.random_range(0..inside.len().max(1))) {
            series[k].temp.0 = if rng.random_bool(0.5) { 1_500 } else { item.safe_min.0 - rng.random_range(1..800) };
        }
    }
    for series in readings.values() {
        for r in series {
            state.record_temperature(&admin, r.clone()).unwrap();
        }
    }
    let mut items = Vec::new();
    for (item, hops) in plans {
        state.register_item(&admin, item.clone()).unwrap();
        for (k, &(loc, arrived, departed)) in hops.iter().enumerate() {
            if k > 0 {
                state.record_arrival(&admin, &item.id, &locs[loc], arrived).unwrap();
            }
            if let Some(d) = departed {
                state.record_departure(&admin, &item.id, &locs[loc], d).unwrap();
            }
        }
        items.push((item.clone(), state.custody(&item.id).to_vec()));
    }
    (World { state, readings, items, now: horizon }, excursions)
}

/// Every (reading, interval) pair checked one at a time.
fn brute_force(w: &World, item: &Item, hops: &[CustodyInterval]) -> (Vec<Excursion>, Vec<Gap>, Verdict) {
    let mut exc = Vec::new();
    let mut gaps = Vec::new();
    let mut empty_hop = false;
    let all: Vec<&TemperatureReading> = w.readings.values().flatten().collect();
    for (hop, iv) in hops.iter().enumerate() {
        let end = iv.departed_at.unwrap_or(w.now.max(iv.arrived_at));
        let mut times = Vec::new();
        for r in &all {
            if r.location != iv.location || r.ts < iv.arrived_at || r.ts >= end {
                continue;
            }
            times.push(r.ts);
            if r.temp < item.safe_min || r.temp > item.safe_max {
                exc.push(Excursion { hop, interval: iv.clone(), reading: (*r).clone() });
            }
        }
        if times.is_empty() {
            empty_hop = true;
            gaps.push(Gap { location: iv.location.clone(), from: iv.arrived_at, to: end });
            continue;
        }
        times.sort();
        let mut prev = iv.arrived_at;
        for t in times.into_iter().chain([end]) {
            if t - prev > DEFAULT_GAP_THRESHOLD {
                gaps.push(Gap { location: iv.location.clone(), from: prev, to: t });
            }
            prev = t;
        }
    }
    exc.sort_by_key(|e| (e.hop, e.reading.ts));
    let verdict = match (exc.is_empty(), gaps.is_empty() && !empty_hop) {
        (false, _) => Verdict::Compromised,
        (true, false) => Verdict::Unknown,
        (true, true) => Verdict::Safe,
    };
    (exc, gaps, verdict)
}

#[test]
fn criterion_3_violation_oracle() {
    let started = Instant::now();
    let (mut agree, mut checked, mut injected) = (0, 0, 0);
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    for seed in 0..1000 {
        let (w, n_exc) = world(seed);
        injected += n_exc;
        for (item, hops) in &w.items {
            checked += 1;
            let (exc, gaps, verdict) = brute_force(&w, item, hops);
            let v = w.state.detect_violations(&item.id, DEFAULT_GAP_THRESHOLD, w.now).unwrap();
            let report = w.state.query_item_history(&item.id, DEFAULT_GAP_THRESHOLD, w.now).unwrap();
            *verdicts.entry(report.verdict.to_string()).or_default() += 1;
            if v.excursions == exc && v.gaps == gaps && report.verdict == verdict {
                agree += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = agree == checked && verdicts.len() == 3 && elapsed < Duration::from_secs(60);
    verdict_line(3, pass, &format!("{agree}/{checked} items agree over 1000 scenarios ({injected} excursions injected), verdicts {verdicts:?}, {elapsed:.2?} (limit 60 s)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn reason(e: &SimError) -> &'static str {
    match e {
        SimError::Contract(c) => c.name(),
        SimError::InvalidSignature => "InvalidSignature",
        _ => "other",
    }
}

#[test]
fn criterion_4_access_control() {
    let (chain, keys) = bootstrap_chain(T0, 3, 1);
    let admin_nonce = chain.blocks()[1].txs.len() as u64 + 1;
    let mut dumps: BTreeMap<Hash, LoggerDump> = BTreeMap::new();
    for (i, (l, _)) in keys.sensors.iter().enumerate() {
        let readings = (0..6).map(|j| TemperatureReading::new(l.as_str(), T0 + 5_000 + i as u64 + j * 300, 450)).collect();
        let d = LoggerDump::new(l.clone(), readings).unwrap();
        dumps.insert(d.hash().unwrap(), d);
    }
    let store = Arc::new(dumps.clone());
    let mut sim = Simulation::new(NetworkConfig::standard(ConsensusMode::Poa, 4, 4), chain, store, 4, T0 * 1000).unwrap();
    let via = sim.config().peers()[0];
    let mut committed = Vec::new();
    for (i, (l, k)) in keys.sensors.iter().enumerate() {
        let tx = sign_tx(k, TxPayload::TemperatureReading(TemperatureReading::new(l.as_str(), T0 + 10 + i as u64, 500)), 1).unwrap();
        sim.submit(tx.clone(), via).unwrap();
        committed.push(tx);
    }
    sim.run_until(sim.now_ms() + 60_000);
    let roots: Vec<Hash> = sim.nodes().iter().map(|n| n.state().state_root()).collect();
    let height = sim.nodes()[0].chain().len();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut attempts, mut false_accepts, mut wrong_reason) = (0, 0, 0);
    let kinds = 8;
    for round in 0..16 {
        let t = round % 3;
        let (loc, own) = &keys.sensors[t];
        let other = &keys.sensors[(t + 1) % 3].1;
        let item = ItemId::new(format!("LOT-{}-1", t + 1));
        let ts = T0 + 20_000 + round as u64;
        let dump = dumps.values().find(|d| &d.location == loc).unwrap().reference().unwrap();
        let payloads = [
            TxPayload::TemperatureReading(TemperatureReading::new(loc.as_str(), ts, rng.random_range(-2_000..2_000))),
            TxPayload::ItemDeparture { item: item.clone(), location: loc.clone(), ts },
            TxPayload::ItemArrival { item, location: loc.clone(), ts },
            Item::standard(format!("NEW-{round}"), loc.as_str(), ts).to_payload(),
            TxPayload::LoggerDumpRef(dump),
            TxPayload::AddAdmin { admin: Keypair::from_label(&format!("new-admin-{round}")).id() },
            TxPayload::AddLocation { id: LocationId::new(format!("NEW-LOC-{round}")), kind: LocationKind::VaccineCarrier, sensor: None },
            TxPayload::RemoveLocation { id: loc.clone() },
        ];
        assert_eq!(payloads.len(), kinds);
        for p in payloads {
            let stranger = Keypair::from_label(&format!("stranger-{round}-{}", p.kind()));
            let own_is_admin_op = matches!(p, TxPayload::AddAdmin { .. } | TxPayload::AddLocation { .. } | TxPayload::RemoveLocation { .. });
            let tries = [
                (sign_tx(&stranger, p.clone(), 1).unwrap(), "UnknownSubmitter"),
                (sign_tx(other, p.clone(), 2 + round as u64).unwrap(), "Unauthorized"),
                (sign_tx(&keys.admin, p.clone(), rng.random_range(1..=admin_nonce)).unwrap(), "ReplayedNonce"),
                if own_is_admin_op {
                    (sign_tx(own, p.clone(), 2 + round as u64).unwrap(), "Unauthorized")
                } else {
                    (sign_tx(own, p.clone(), 1).unwrap(), "ReplayedNonce")
                },
            ];
            for (tx, want) in tries {
                attempts += 1;
                let peer = sim.config().peers()[attempts % 4];
                match sim.submit(tx, peer) {
                    Ok(_) => false_accepts += 1,
                    Err(e) => wrong_reason += usize::from(reason(&e) != want),
                }
            }
        }
        let replay = committed[rng.random_range(0..committed.len())].clone();
        attempts += 1;
        if sim.submit(replay, via).is_ok() {
            false_accepts += 1;
        }
    }
    sim.run_until(sim.now_ms() + 120_000);
    let after: Vec<Hash> = sim.nodes().iter().map(|n| n.state().state_root()).collect();
    let unchanged = after == roots && sim.nodes().iter().all(|n| n.chain().len() == height);
    let pass = attempts >= 500 && false_accepts == 0 && wrong_reason == 0 && unchanged;
    verdict_line(
        4,
        pass,
        &format!("{attempts} attempts over {kinds} payload kinds, {false_accepts} false accepts, {wrong_reason} with an unexpected reason, state roots unchanged: {unchanged}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

/// Longest stretch per block during which work was waiting and nothing was sealed:
/// sealed_at minus the later of its earliest transaction's acceptance and the previous seal.
fn halts_ms(r: &bcc_core::sim::ScenarioReport) -> (u64, usize) {
    let accepted: BTreeMap<Hash, u64> = r.receipts.iter().map(|x| (x.tx_id, x.accepted_at)).collect();
    let mut prev_seal = 0;
    let mut worst = 0;
    let mut view_changes = 0;
    for b in r.final_chain.blocks().iter().skip(2) {
        let m = PoaMeta::decode(&b.header.meta).expect("PoA block meta");
        let first = b.txs.iter().filter_map(|t| accepted.get(&t.hash())).min().copied().unwrap_or(m.sealed_at_ms);
        worst = worst.max(m.sealed_at_ms.saturating_sub(first.max(prev_seal)));
        view_changes += usize::from(m.view > 0);
        prev_seal = m.sealed_at_ms;
    }
    (worst, view_changes)
}

#[test]
fn criterion_5_crash_tolerance() {
    let mut worst_halt = 0;
    let mut worst_commit = 0;
    let (mut conflicts, mut uncommitted, mut diverged, mut handovers, mut quiet_runs) = (0, 0, 0, 0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let mut s = Scenario { seed, ..Scenario::default() };
        s.workload.tx_count = 150;
        s.workload.mean_gap_s = 30.0;
        s.workload.queries = false;
        assert_eq!(s.network.quorum(), 3);
        let mut at = rng.random_range(100.0..600.0);
        for _ in 0..3 {
            let victim = format!("orderer-{}", rng.random_range(1..=4));
            let down = rng.random_range(200.0..900.0);
            s.faults.push(FaultEvent { at_s: at, node: victim.clone(), kind: FaultKind::Crash, group: None });
            s.faults.push(FaultEvent { at_s: at + down, node: victim, kind: FaultKind::Recover, group: None });
            at += down + rng.random_range(30.0..300.0);
        }
        let r = s.run().unwrap();
        let (halt, changes) = halts_ms(&r);
        worst_halt = worst_halt.max(halt);
        worst_commit = worst_commit.max(r.submit_latencies_ms().into_iter().max().unwrap_or(0));
        handovers += changes;
        quiet_runs += usize::from(changes == 0);
        conflicts += r.conflicts.len();
        uncommitted += r.receipts.iter().filter(|x| x.committed_at.is_none()).count();
        diverged += usize::from(!r.state_roots.windows(2).all(|w| w[0].1 == w[1].1));
    }
    let pass = worst_halt <= 2 * INTERVAL_MS && conflicts == 0 && uncommitted == 0 && diverged == 0 && quiet_runs == 0;
    verdict_line(
        5,
        pass,
        &format!(
            "20 scenarios, longest halt {:.3} s (limit {:.0} s), {handovers} leader handovers, longest submit-to-commit {:.3} s, {conflicts} conflicting commits, {uncommitted} uncommitted, {diverged} diverged",
            worst_halt as f64 / 1000.0,
            2.0 * INTERVAL_MS as f64 / 1000.0,
            worst_commit as f64 / 1000.0
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

fn pow_partition(seed: u64, difficulty: u32) -> (bool, bool, u64) {
    let mut cfg = NetworkConfig::standard(ConsensusMode::Pow, 4, 4);
    cfg.consensus.pow_difficulty = difficulty;
    let (chain, keys) = bootstrap_chain(T0, 4, 1);
    let mut sim = Simulation::new(cfg, chain, Arc::new(bcc_core::store::NoDumps), seed, T0 * 1000).unwrap();
    for i in (1..8u32).step_by(2) {
        sim.inject_fault(NodeId(i), Fault::Partition(1)).unwrap();
    }
    let mut nonce = [0u64; 4];
    let mut last = [T0; 4];
    let mut send = |sim: &mut Simulation, loc: usize, via: NodeId| {
        nonce[loc] += 1;
        last[loc] = (sim.now_ms() / 1000).max(last[loc] + 1);
        let (id, k) = &keys.sensors[loc];
        let tx = sign_tx(k, TxPayload::TemperatureReading(TemperatureReading::new(id.as_str(), last[loc], 500)), nonce[loc]).unwrap();
        sim.submit(tx, via).unwrap();
    };
    for round in 0..40 {
        // peers 4 and 6 sit on side 0, 5 and 7 on side 1
        send(&mut sim, 2 * (round % 2), NodeId(4 + 2 * (round as u32 % 2)));
        send(&mut sim, 1 + 2 * (round % 2), NodeId(5 + 2 * (round as u32 % 2)));
        sim.run_until(sim.now_ms() + 8_000);
    }
    let forked = sim.nodes()[0].chain().tip_hash() != sim.nodes()[1].chain().tip_hash();
    for i in 0..8u32 {
        sim.inject_fault(NodeId(i), Fault::Heal).unwrap();
    }
    let mined_at_heal = sim.blocks_mined();
    let mut steps = 0usize;
    while !sim.tips_agree() && sim.blocks_mined() <= mined_at_heal + 10 {
        if steps.is_multiple_of(50) {
            send(&mut sim, steps / 50 % 4, NodeId(4));
        }
        steps += 1;
        if !sim.step() {
            break;
        }
    }
    (forked, sim.tips_agree(), sim.blocks_mined() - mined_at_heal)
}

#[test]
fn criterion_6_pow_convergence() {
    let difficulty = 12;
    let (mut converged, mut forked, mut worst) = (0, 0, 0);
    for seed in 0..20 {
        let (f, agree, extra) = pow_partition(seed, difficulty);
        forked += usize::from(f);
        if agree && extra <= 10 {
            converged += 1;
        }
        worst = worst.max(extra);
    }
    let pass = converged == 20;
    verdict_line(
        6,
        pass,
        &format!("difficulty {difficulty}: {converged}/20 seeds share one tip within 10 blocks after heal, {forked} forked during the partition, at most {worst} blocks to converge"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn faulty_scenario(mode: ConsensusMode, seed: u64) -> Scenario {
    let mut s = Scenario { seed, network: NetworkConfig::standard(mode, 4, 4), ..Scenario::default() };
    s.workload.tx_count = 120;
    if mode == ConsensusMode::Pow {
        s.network.consensus.pow_difficulty = 10;
    }
    s.faults = vec![
        FaultEvent { at_s: 900.0, node: "orderer-1".into(), kind: FaultKind::Crash, group: None },
        FaultEvent { at_s: 2_000.0, node: "orderer-1".into(), kind: FaultKind::Recover, group: None },
        FaultEvent { at_s: 3_000.0, node: "peer-2".into(), kind: FaultKind::Partition, group: Some(1) },
        FaultEvent { at_s: 3_600.0, node: "peer-2".into(), kind: FaultKind::Heal, group: None },
    ];
    s
}

#[test]
fn criterion_7_determinism() {
    let mut identical = 0;
    let mut total = 0;
    for mode in [ConsensusMode::Poa, ConsensusMode::Pow] {
        for seed in [3, 17] {
            let s = faulty_scenario(mode, seed);
            let (a, b) = (s.run().unwrap(), s.run().unwrap());
            total += 1;
            let same = commit_log_csv(&a) == commit_log_csv(&b)
                && latency_csv(std::slice::from_ref(&a)) == latency_csv(std::slice::from_ref(&b))
                && a.state_roots == b.state_roots
                && encode_ledger(&a.final_chain).unwrap() == encode_ledger(&b.final_chain).unwrap();
            identical += usize::from(same);
        }
    }
    let mut small = Scenario::default();
    small.workload.tx_count = 100;
    let seq = run_bench(&small, 3, Exec::Sequential).unwrap();
    let par = run_bench(&small, 3, Exec::default()).unwrap();
    let again = run_bench(&small, 3, Exec::default()).unwrap();
    total += 1;
    identical += usize::from(seq.csv() == par.csv() && par.csv() == again.csv());

    let b = Bcc::new();
    std::fs::write(b.path("s.toml"), small.to_toml()).unwrap();
    let run = |out: &str| {
        b.ok(&["--scenario", "s.toml", "bench", "--runs", "2", "--out", out]);
        std::fs::read(b.path(out)).unwrap()
    };
    total += 1;
    identical += usize::from(run("a.csv") == run("b.csv"));

    let pass = identical == total;
    verdict_line(7, pass, &format!("{identical}/{total} reruns byte-identical (commit logs, latency CSVs, state roots, ledgers, CLI bench CSV)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 8

const HOP: u64 = 14_400;

fn walkthrough(excursion: bool) -> common::Run {
    let b = Bcc::new();
    b.init(T0);
    let path = [
        ("MFG-1", "manufacturer"),
        ("AIRPORT-TRUCK-1", "refrigerated-truck"),
        ("CENTRAL-1", "central-store"),
        ("REGIONAL-1", "regional-store"),
        ("HC-1", "health-center"),
    ];
    for (id, kind) in path {
        b.location(id, kind);
        let exc = format!("{}:{}:15.00:300", T0 + HOP + 3_600, T0 + HOP + 7_200);
        let spike = (excursion && id == "AIRPORT-TRUCK-1").then_some(exc.as_str());
        b.dump(id, T0, 5 * HOP + 600, 300, spike);
    }
    b.ok(&["admin", "register-item", "LOT-VAX-1", "--manufacturer", "MFG-1", "--at", &(T0 + 100).to_string()]);
    for (i, w) in path.windows(2).enumerate() {
        let leave = T0 + (i as u64 + 1) * HOP;
        b.ok(&["location", "--as", &format!("{}.sensor", w[0].0), "depart", "LOT-VAX-1", "--ts", &leave.to_string()]);
        b.ok(&["location", "--as", &format!("{}.sensor", w[1].0), "arrive", "LOT-VAX-1", "--ts", &(leave + 60).to_string()]);
    }
    b.run(&["consumer", "verify", "LOT-VAX-1", "--now", &(T0 + 5 * HOP).to_string()])
}

#[test]
fn criterion_8_walkthrough() {
    let clean = walkthrough(false);
    let hop_lines = clean.stdout.lines().filter(|l| l.trim_start().starts_with("hop ")).count();
    let clean_ok = clean.code == 0 && clean.stdout.contains("5 hops") && hop_lines == 5 && clean.stdout.contains("verdict SAFE");

    let dirty = walkthrough(true);
    let truck = format!("hop 2 [{}, {})", T0 + HOP + 60, T0 + 2 * HOP);
    let named = dirty.stdout.lines().any(|l| l.starts_with("excursion at AIRPORT-TRUCK-1") && l.contains("15.00 °C") && l.ends_with(&truck));
    let dirty_ok = dirty.code == 2 && named && dirty.stdout.contains("verdict COMPROMISED");

    let pass = clean_ok && dirty_ok;
    verdict_line(
        8,
        pass,
        &format!("clean run exit {} with {hop_lines} hops; excursion run exit {} naming the truck interval: {named}", clean.code, dirty.code),
    );
    if !pass {
        eprintln!("{}\n{}\n{}\n{}", clean.stdout, clean.stderr, dirty.stdout, dirty.stderr);
    }
    assert!(pass);
}
