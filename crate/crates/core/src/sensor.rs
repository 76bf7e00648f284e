//! Temperature-logger traces: periodic readings with seeded uniform noise and linear
//! drift, plus excursion injection for building test scenarios.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{LocationId, TempCenti, TemperatureReading, GLOBAL_TEMP_MAX, GLOBAL_TEMP_MIN};

/// Loggers record at no more than 10-minute intervals.
pub const MAX_INTERVAL: u64 = 600;

#[derive(Debug, thiserror::Error)]
pub enum SensorError {
    #[error("BadProfile: {0}")]
    BadProfile(String),
    #[error("WindowOutOfRange: {0}")]
    WindowOutOfRange(String),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub location: LocationId,
    pub base_temp: TempCenti,
    pub noise_amp: i32,
    /// Seconds between readings.
    pub interval: u64,
    pub drift_per_day: i32,
}

impl SensorProfile {
    /// A fridge logger holding 5.00 °C with ±0.50 °C noise at the 10-minute cadence.
    pub fn fridge(location: impl Into<String>) -> Self {
        SensorProfile {
            location: LocationId(location.into()),
            base_temp: TempCenti(500),
            noise_amp: 50,
            interval: MAX_INTERVAL,
            drift_per_day: 0,
        }
    }

    fn validate(&self) -> Result<(), SensorError> {
        if self.interval == 0 || self.interval > MAX_INTERVAL {
            return Err(SensorError::BadProfile(format!("interval {} not in 1..={MAX_INTERVAL}", self.interval)));
        }
        if self.noise_amp < 0 {
            return Err(SensorError::BadProfile(format!("negative noise amplitude {}", self.noise_amp)));
        }
        if !self.base_temp.within_global_bounds() {
            return Err(SensorError::BadProfile(format!("base temperature {} out of bounds", self.base_temp)));
        }
        Ok(())
    }
}

/// An excursion: plateau at `target_temp` on `[start + ramp, end - ramp]`, linear ramps either side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionSpec {
    pub start: u64,
    pub end: u64,
    pub target_temp: TempCenti,
    pub ramp: u64,
}

/// `floor(duration / interval)` readings at `t0 + k * interval`.
pub fn generate_trace(profile: &SensorProfile, t0: u64, duration: u64, seed: u64) -> Result<Vec<TemperatureReading>, SensorError> {
    profile.validate()?;
    if duration == 0 {
        return Err(SensorError::BadProfile("duration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = duration / profile.interval;
    let amp = profile.noise_amp;
    Ok((0..count)
        .map(|k| {
            let elapsed = k * profile.interval;
            let drift = i64::from(profile.drift_per_day) * elapsed as i64 / 86_400;
            let noise = if amp == 0 { 0 } else { rng.random_range(-amp..=amp) };
            let t = (i64::from(profile.base_temp.get()) + i64::from(noise) + drift)
                .clamp(i64::from(GLOBAL_TEMP_MIN.get()), i64::from(GLOBAL_TEMP_MAX.get()));
            TemperatureReading { location: profile.location.clone(), ts: t0 + elapsed, temp: TempCenti(t as i32) }
        })
        .collect())
}

/// Overwrites readings inside the excursion window; everything outside is left untouched.
pub fn inject_excursion(trace: &[TemperatureReading], spec: &ExcursionSpec) -> Result<Vec<TemperatureReading>, SensorError> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(SensorError::WindowOutOfRange("empty trace".into()));
    };
    if spec.start >= spec.end {
        return Err(SensorError::WindowOutOfRange(format!("start {} not before end {}", spec.start, spec.end)));
    }
    if spec.ramp > (spec.end - spec.start) / 2 {
        return Err(SensorError::WindowOutOfRange(format!("ramp {} longer than half the window", spec.ramp)));
    }
    if spec.start < first.ts || spec.end > last.ts {
        return Err(SensorError::WindowOutOfRange(format!(
            "window {}..{} outside trace span {}..{}",
            spec.start, spec.end, first.ts, last.ts
        )));
    }
    let target = i64::from(spec.target_temp.get());
    let plateau = (spec.start + spec.ramp)..=(spec.end - spec.ramp);
    Ok(trace
        .iter()
        .map(|r| {
            if r.ts < spec.start || r.ts > spec.end {
                return r.clone();
            }
            let orig = i64::from(r.temp.get());
            let t = if plateau.contains(&r.ts) {
                target
            } else if r.ts < *plateau.start() {
                orig + (target - orig) * (r.ts - spec.start) as i64 / spec.ramp as i64
            } else {
                orig + (target - orig) * (spec.end - r.ts) as i64 / spec.ramp as i64
            };
            TemperatureReading { temp: TempCenti(t as i32), ..r.clone() }
        })
        .collect())
}

/// True when the reading is outside `[safe_min, safe_max]`, in either direction.
pub fn alarm_check(reading: &TemperatureReading, safe_min: TempCenti, safe_max: TempCenti) -> bool {
    reading.temp < safe_min || reading.temp > safe_max
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    location: LocationId,
    ts: u64,
    temp_centi: i32,
}

/// One JSON object per line: `{"location":..,"ts":..,"temp_centi":..}`.
pub fn write_jsonl<W: Write>(mut w: W, trace: &[TemperatureReading]) -> Result<(), SensorError> {
    for r in trace {
        let line = TraceLine { location: r.location.clone(), ts: r.ts, temp_centi: r.temp.get() };
        serde_json::to_writer(&mut w, &line).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TemperatureReading>, SensorError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TraceLine = serde_json::from_str(&line).map_err(|e| SensorError::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(TemperatureReading { location: t.location, ts: t.ts, temp: TempCenti(t.temp_centi) });
    }
    Ok(out)
}
