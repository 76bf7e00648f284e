#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A throwaway ledger, store and key directory driven through the `bcc` binary.
pub struct Bcc {
    pub dir: tempfile::TempDir,
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Run {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

impl Bcc {
    pub fn new() -> Self {
        Bcc { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn ledger(&self) -> PathBuf {
        self.path("bcc.ledger")
    }

    pub fn run(&self, args: &[&str]) -> Run {
        Command::new(env!("CARGO_BIN_EXE_bcc"))
            .current_dir(self.dir.path())
            .args(["--seed", "7"])
            .args(args)
            .output()
            .unwrap()
            .into()
    }

    /// Runs and insists on exit 0.
    pub fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "bcc {args:?}\nstdout: {}\nstderr: {}", r.stdout, r.stderr);
        r.stdout
    }

    pub fn init(&self, t0: u64) {
        self.ok(&["init", "--timestamp", &t0.to_string()]);
    }

    /// A sensor key bound to a new location.
    pub fn location(&self, id: &str, kind: &str) {
        let key = format!("{id}.sensor");
        self.ok(&["keygen", &key]);
        self.ok(&["admin", "add-location", id, "--kind", kind, "--sensor", &key]);
    }

    /// Logger trace for `id` written to a file, then anchored as a dump by its sensor.
    pub fn dump(&self, id: &str, t0: u64, duration: u64, interval: u64, excursion: Option<&str>) -> PathBuf {
        let out = self.path(&format!("{id}-{t0}.jsonl"));
        let (t0s, durs, ints) = (t0.to_string(), duration.to_string(), interval.to_string());
        let mut args = vec!["sensor", "trace", "--location", id, "--t0", &t0s, "--duration", &durs, "--interval", &ints, "--out"];
        let outs = out.to_str().unwrap().to_string();
        args.push(&outs);
        if let Some(e) = excursion {
            args.extend(["--excursion", e]);
        }
        self.ok(&args);
        self.ok(&["location", "--as", &format!("{id}.sensor"), "submit-dump", &outs]);
        out
    }
}

/// Byte range of each record in a ledger file.
pub fn record_spans(path: &Path) -> Vec<(usize, usize)> {
    let bytes = std::fs::read(path).unwrap();
    let mut spans = Vec::new();
    let mut at = 4;
    while at < bytes.len() {
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        spans.push((at, at + 4 + len));
        at += 4 + len;
    }
    spans
}

/// Flips one byte in the middle of the record at `height`.
pub fn flip_in_block(path: &Path, height: usize) {
    let (s, e) = record_spans(path)[height];
    let mut bytes = std::fs::read(path).unwrap();
    bytes[(s + e) / 2] ^= 0x5a;
    std::fs::write(path, bytes).unwrap();
}

/// The height in an "invalid at height N" message.
pub fn reported_height(stderr: &str) -> Option<u64> {
    let rest = &stderr[stderr.find("invalid at height ")? + "invalid at height ".len()..];
    rest.split(|c: char| !c.is_ascii_digit()).next()?.parse().ok()
}
