mod ctx;
mod render;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bcc_core::bench::run_bench;
use bcc_core::contract::{Item, Verdict, DEFAULT_GAP_THRESHOLD};
use bcc_core::ledger::{build_block, sign_tx, validate_chain, Chain, Keypair, TxPayload};
use bcc_core::sensor::{generate_trace, inject_excursion, read_jsonl, write_jsonl, ExcursionSpec, SensorProfile};
use bcc_core::store::LoggerDump;
use bcc_core::types::{ItemId, LocationId, LocationKind, TempCenti, TemperatureReading};
use bcc_core::Exec;

use ctx::{ensure_parent, CliResult, Ctx, Failure, Format};

#[derive(Parser)]
#[command(name = "bcc", version, about = "Cold-chain custody ledger")]
struct Cli {
    /// Ledger file.
    #[arg(long, global = true, default_value = "bcc.ledger")]
    ledger: PathBuf,
    /// Directory of off-chain logger dumps.
    #[arg(long, global = true, default_value = "bcc-store")]
    store: PathBuf,
    /// Directory of key files.
    #[arg(long, global = true, default_value = "bcc-keys")]
    keys: PathBuf,
    /// Scenario file for the network and the bench.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// RNG seed [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create an admin key (if missing) and a ledger holding the deploy genesis.
    Init {
        #[arg(long, default_value = "admin")]
        admin: String,
        /// Genesis timestamp, unix seconds [default: now].
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Generate a key file.
    Keygen { name: String },
    /// Administrator actions.
    Admin {
        #[arg(long = "as", default_value = "admin")]
        actor: String,
        #[command(subcommand)]
        cmd: AdminCmd,
    },
    /// Actions of a location's bound key.
    Location {
        #[arg(long = "as")]
        actor: String,
        #[command(subcommand)]
        cmd: LocationCmd,
    },
    /// Public reads.
    Consumer {
        #[command(subcommand)]
        cmd: ConsumerCmd,
    },
    /// Latency benchmark over the scenario.
    Bench {
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Per-transaction CSV output file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "parallel")]
        exec: ExecArg,
    },
    /// Validate and replay the ledger, printing the state root.
    Replay,
    /// Sensor trace tools.
    Sensor {
        #[command(subcommand)]
        cmd: SensorCmd,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

impl From<ExecArg> for Exec {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Sequential => Exec::Sequential,
            ExecArg::Parallel => Exec::default(),
        }
    }
}

#[derive(Subcommand)]
enum AdminCmd {
    AddAdmin {
        /// Key name or 64-hex public key.
        key: String,
    },
    AddLocation {
        id: String,
        #[arg(long)]
        kind: LocationKind,
        /// Sensor key name or 64-hex public key to bind.
        #[arg(long)]
        sensor: Option<String>,
    },
    RemoveLocation { id: String },
    RegisterItem {
        id: String,
        #[arg(long)]
        manufacturer: String,
        #[arg(long, default_value = "2.00", allow_hyphen_values = true)]
        min: TempCenti,
        #[arg(long, default_value = "8.00", allow_hyphen_values = true)]
        max: TempCenti,
        /// Registration time, unix seconds.
        #[arg(long)]
        at: u64,
    },
    Inspect,
}

#[derive(Subcommand)]
enum LocationCmd {
    Arrive {
        item: String,
        #[arg(long)]
        ts: u64,
        /// Defaults to the key's bound location.
        #[arg(long)]
        location: Option<String>,
    },
    Depart {
        item: String,
        #[arg(long)]
        ts: u64,
        #[arg(long)]
        location: Option<String>,
    },
    SubmitTemp {
        #[arg(allow_hyphen_values = true)]
        temp: TempCenti,
        #[arg(long)]
        ts: u64,
        #[arg(long)]
        location: Option<String>,
    },
    /// Store a JSON-lines logger dump off-chain and anchor its hash on-chain.
    SubmitDump { file: PathBuf },
    MyItems {
        /// Defaults to the latest recorded event.
        #[arg(long)]
        at: Option<u64>,
    },
    MyTemps {
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long, default_value_t = u64::MAX)]
        to: u64,
    },
}

#[derive(Subcommand)]
enum ConsumerCmd {
    /// Custody and temperature history of an item, with its verdict.
    Verify {
        item: String,
        #[arg(long, default_value_t = DEFAULT_GAP_THRESHOLD)]
        gap: u64,
        /// Evaluation time for open intervals [default: latest event + 1].
        #[arg(long)]
        now: Option<u64>,
    },
}

#[derive(Subcommand)]
enum SensorCmd {
    /// Generate a JSON-lines trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    location: String,
    #[arg(long)]
    t0: u64,
    #[arg(long)]
    duration: u64,
    #[arg(long, default_value = "5.00", allow_hyphen_values = true)]
    base: TempCenti,
    /// Noise amplitude in hundredths of a degree.
    #[arg(long, default_value_t = 50)]
    noise: i32,
    #[arg(long, default_value_t = 600)]
    interval: u64,
    /// Drift per day in hundredths of a degree.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    drift: i32,
    /// Excursion as START:END:TEMP:RAMP, e.g. 3600:5400:15.00:300.
    #[arg(long)]
    excursion: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        ledger: cli.ledger,
        store_dir: cli.store,
        keys: cli.keys,
        scenario: cli.scenario,
        seed: cli.seed,
        format: cli.format,
    };
    match run(&ctx, cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code.clamp(1, 255) as u8)
        }
    }
}

fn run(ctx: &Ctx, cmd: Cmd) -> CliResult<u8> {
    match cmd {
        Cmd::Init { admin, timestamp } => init(ctx, &admin, timestamp),
        Cmd::Keygen { name } => {
            let seed = ctx.seed.map(|s| format!("{s}:{name}"));
            let key = match seed {
                Some(label) => Keypair::from_label(&label),
                None => Keypair::generate(&mut rand::rng()),
            };
            let path = ctx.write_key(&name, &key)?;
            println!("{} {}", key.id().to_hex(), path.display());
            Ok(0)
        }
        Cmd::Admin { actor, cmd } => admin(ctx, &actor, cmd),
        Cmd::Location { actor, cmd } => location(ctx, &actor, cmd),
        Cmd::Consumer { cmd: ConsumerCmd::Verify { item, gap, now } } => verify(ctx, &item, gap, now),
        Cmd::Bench { runs, out, exec } => bench(ctx, runs, out, exec.into()),
        Cmd::Replay => replay(ctx),
        Cmd::Sensor { cmd: SensorCmd::Trace(a) } => trace(a, ctx.seed()),
    }
}

fn init(ctx: &Ctx, admin: &str, timestamp: Option<u64>) -> CliResult<u8> {
    if ctx.ledger.exists() {
        return Err(Failure::new(1, format!("{} already exists", ctx.ledger.display())));
    }
    let key = match ctx.load_key(admin) {
        Ok(k) => k,
        Err(_) => {
            let k = match ctx.seed {
                Some(s) => Keypair::from_label(&format!("{s}:{admin}")),
                None => Keypair::generate(&mut rand::rng()),
            };
            ctx.write_key(admin, &k)?;
            k
        }
    };
    let ts = timestamp.unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
    });
    let genesis = build_block(None, vec![sign_tx(&key, TxPayload::Deploy, 1)?], ts, b"genesis".to_vec())?;
    ensure_parent(&ctx.ledger)?;
    bcc_core::ledger::write_ledger(&ctx.ledger, &Chain::with_genesis(genesis.clone())?)?;
    println!("ledger {} genesis {} admin {}", ctx.ledger.display(), genesis.block_hash, key.id().to_hex());
    Ok(0)
}

fn print_committed(ctx: &Ctx, c: &ctx::Committed) -> CliResult<u8> {
    let r = &c.receipt;
    let latency = r.committed_at.unwrap_or(r.accepted_at) - r.accepted_at;
    match ctx.format {
        Format::Json => println!(
            "{}",
            serde_json::json!({
                "tx_id": r.tx_id.to_hex(), "kind": r.kind, "height": c.height, "nonce": c.nonce,
                "accepted_ms": r.accepted_at, "committed_ms": r.committed_at, "latency_ms": latency,
            })
        ),
        Format::Csv => {
            println!("tx_id,kind,height,latency_ms");
            println!("{},{},{},{}", r.tx_id, r.kind, c.height, latency);
        }
        Format::Table => println!("committed {} tx {} at height {} after {:.3} s", r.kind, r.tx_id, c.height, latency as f64 / 1000.0),
    }
    Ok(0)
}

fn admin(ctx: &Ctx, actor: &str, cmd: AdminCmd) -> CliResult<u8> {
    if let AdminCmd::Inspect = cmd {
        let state = ctx.state()?;
        let chain = ctx.chain()?;
        print!("{}", render::inspect(&state, chain.len() as u64, ctx.format));
        return Ok(0);
    }
    let key = ctx.load_key(actor)?;
    let payload = match cmd {
        AdminCmd::AddAdmin { key } => TxPayload::AddAdmin { admin: ctx.key_id(&key)? },
        AdminCmd::AddLocation { id, kind, sensor } => {
            let sensor = sensor.map(|s| ctx.key_id(&s)).transpose()?;
            TxPayload::AddLocation { id: LocationId::new(id), kind, sensor }
        }
        AdminCmd::RemoveLocation { id } => TxPayload::RemoveLocation { id: LocationId::new(id) },
        AdminCmd::RegisterItem { id, manufacturer, min, max, at } => Item {
            id: ItemId::new(id),
            manufacturer: LocationId::new(manufacturer),
            safe_min: min,
            safe_max: max,
            registered_at: at,
        }
        .to_payload(),
        AdminCmd::Inspect => unreachable!(),
    };
    let c = ctx.submit(&key, payload)?;
    print_committed(ctx, &c)
}

/// The location an actor speaks for: explicit, or the one its key is bound to.
fn actor_location(ctx: &Ctx, key: &Keypair, explicit: Option<String>) -> CliResult<LocationId> {
    if let Some(l) = explicit {
        return Ok(LocationId::new(l));
    }
    let state = ctx.state()?;
    state
        .sensor_location(&key.id())
        .cloned()
        .ok_or_else(|| Failure::new(1, format!("key {} is not bound to a location; pass --location", key.id().short())))
}

fn location(ctx: &Ctx, actor: &str, cmd: LocationCmd) -> CliResult<u8> {
    let key = ctx.load_key(actor)?;
    let payload = match cmd {
        LocationCmd::Arrive { item, ts, location } => {
            TxPayload::ItemArrival { item: ItemId::new(item), location: actor_location(ctx, &key, location)?, ts }
        }
        LocationCmd::Depart { item, ts, location } => {
            TxPayload::ItemDeparture { item: ItemId::new(item), location: actor_location(ctx, &key, location)?, ts }
        }
        LocationCmd::SubmitTemp { temp, ts, location } => {
            let loc = actor_location(ctx, &key, location)?;
            TxPayload::TemperatureReading(TemperatureReading { location: loc, ts, temp })
        }
        LocationCmd::SubmitDump { file } => {
            let f = File::open(&file).map_err(|e| Failure::new(1, format!("{}: {e}", file.display())))?;
            let readings = read_jsonl(BufReader::new(f))?;
            let loc = readings.first().map(|r| r.location.clone()).ok_or_else(|| Failure::new(1, "empty dump"))?;
            let dump = LoggerDump::new(loc, readings)?;
            ctx.store()?.put(&dump)?;
            TxPayload::LoggerDumpRef(dump.reference()?)
        }
        LocationCmd::MyItems { at } => {
            let state = ctx.state()?;
            let loc = actor_location(ctx, &key, None)?;
            let at = at.unwrap_or_else(|| state.latest_event_ts());
            let items = state.query_location_items(&loc, at)?;
            print!("{}", render::items(&loc, at, &items, ctx.format));
            return Ok(0);
        }
        LocationCmd::MyTemps { from, to } => {
            let state = ctx.state()?;
            let loc = actor_location(ctx, &key, None)?;
            let temps = state.query_location_temps(&loc, from, to)?;
            print!("{}", render::temps(&temps, ctx.format));
            return Ok(0);
        }
    };
    let c = ctx.submit(&key, payload)?;
    print_committed(ctx, &c)
}

fn verify(ctx: &Ctx, item: &str, gap: u64, now: Option<u64>) -> CliResult<u8> {
    let state = ctx.state()?;
    let now = now.unwrap_or_else(|| state.latest_event_ts() + 1);
    let report = match state.query_item_history(&ItemId::new(item), gap, now) {
        Ok(r) => r,
        Err(e @ bcc_core::contract::ContractError::UnknownItem(_)) => return Err(Failure::new(4, e.to_string())),
        Err(e) => return Err(e.into()),
    };
    print!("{}", render::report(&report, ctx.format));
    Ok(match report.verdict {
        Verdict::Safe => 0,
        Verdict::Compromised => 2,
        Verdict::Unknown => 3,
    })
}

fn bench(ctx: &Ctx, runs: usize, out: Option<PathBuf>, exec: Exec) -> CliResult<u8> {
    let scenario = ctx.load_scenario()?;
    let report = run_bench(&scenario, runs, exec)?;
    if let Some(path) = &out {
        ensure_parent(path)?;
        fs::write(path, report.csv())?;
    }
    match ctx.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report.summary)?),
        Format::Csv if out.is_none() => print!("{}", report.csv()),
        _ => print!("{}", report.summary.table()),
    }
    Ok(0)
}

fn replay(ctx: &Ctx) -> CliResult<u8> {
    let chain = ctx.chain()?;
    validate_chain(&chain).map_err(|f| Failure::new(1, format!("invalid at height {}: {}", f.height, f.reason)))?;
    let store = ctx.store()?;
    let state = bcc_core::contract::replay(chain.blocks(), &store)
        .map_err(|(h, e)| Failure::new(1, format!("invalid at height {h}: {e}")))?;
    let root = state.state_root();
    match ctx.format {
        Format::Json => println!(
            "{}",
            serde_json::json!({
                "height": chain.len() - 1, "blocks": chain.len(), "tip": chain.tip_hash().to_hex(),
                "state_root": root.to_hex(), "items": state.items().count(), "locations": state.locations().count(),
            })
        ),
        _ => println!(
            "ok: {} blocks, tip {}, {} items, {} locations\nstate root {}",
            chain.len(),
            chain.tip_hash(),
            state.items().count(),
            state.locations().count(),
            root
        ),
    }
    Ok(0)
}

fn parse_excursion(s: &str) -> CliResult<ExcursionSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::new(1, format!("excursion {s:?} is not START:END:TEMP:RAMP"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok(ExcursionSpec {
        start: parts[0].parse().map_err(|_| bad())?,
        end: parts[1].parse().map_err(|_| bad())?,
        target_temp: parts[2].parse().map_err(|_| bad())?,
        ramp: parts[3].parse().map_err(|_| bad())?,
    })
}

fn trace(a: TraceArgs, seed: u64) -> CliResult<u8> {
    let profile = SensorProfile {
        location: LocationId::new(a.location),
        base_temp: a.base,
        noise_amp: a.noise,
        interval: a.interval,
        drift_per_day: a.drift,
    };
    let mut readings = generate_trace(&profile, a.t0, a.duration, seed)?;
    if let Some(e) = &a.excursion {
        readings = inject_excursion(&readings, &parse_excursion(e)?)?;
    }
    match &a.out {
        Some(p) => {
            ensure_parent(p)?;
            write_jsonl(BufWriter::new(File::create(p)?), &readings)?;
        }
        None => write_jsonl(io::stdout().lock(), &readings)?,
    }
    Ok(0)
}
