//! Identifier and measurement types shared by the ledger payloads and the contract.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum byte length of an item or location identifier.
pub const MAX_ID_LEN: usize = 64;

/// Lowest temperature any reading may carry (−120.00 °C).
pub const GLOBAL_TEMP_MIN: TempCenti = TempCenti(-12_000);
/// Highest temperature any reading may carry (+60.00 °C).
pub const GLOBAL_TEMP_MAX: TempCenti = TempCenti(6_000);

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Identifier of a vaccine lot.
    ItemId
);
string_id!(
    /// Identifier of a custody location (cold room, truck, health center, ...).
    LocationId
);

/// Signed temperature in hundredths of a degree Celsius.
///
/// Renders as a decimal string with exactly two fraction digits, e.g. `-0.05` or `8.00`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TempCenti(pub i32);

impl TempCenti {
    pub const fn new(centi: i32) -> Self {
        Self(centi)
    }

    pub const fn get(self) -> i32 {
        self.0
    }

    pub fn within_global_bounds(self) -> bool {
        (GLOBAL_TEMP_MIN..=GLOBAL_TEMP_MAX).contains(&self)
    }
}

impl fmt::Display for TempCenti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = i64::from(self.0);
        let sign = if v < 0 { "-" } else { "" };
        let abs = v.abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid temperature {0:?}: expected a decimal with at most two fraction digits")]
pub struct ParseTempError(String);

impl FromStr for TempCenti {
    type Err = ParseTempError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTempError(s.to_owned());
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if whole.is_empty() || frac.len() > 2 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let whole: i64 = whole.parse().map_err(|_| err())?;
        let frac: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| err())? * 10,
            _ => frac.parse().map_err(|_| err())?,
        };
        let mag = whole.checked_mul(100).and_then(|w| w.checked_add(frac)).ok_or_else(err)?;
        let v = if neg { -mag } else { mag };
        i32::try_from(v).map(TempCenti).map_err(|_| err())
    }
}

impl Serialize for TempCenti {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TempCenti {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What kind of place a location is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationKind {
    ColdRoom,
    FreezerRoom,
    Freezer,
    Refrigerator,
    ColdBox,
    RefrigeratedTruck,
    VaccineCarrier,
    HealthCenter,
    Airport,
    CentralStore,
    RegionalStore,
    Manufacturer,
}

impl LocationKind {
    pub const ALL: [LocationKind; 12] = [
        LocationKind::ColdRoom,
        LocationKind::FreezerRoom,
        LocationKind::Freezer,
        LocationKind::Refrigerator,
        LocationKind::ColdBox,
        LocationKind::RefrigeratedTruck,
        LocationKind::VaccineCarrier,
        LocationKind::HealthCenter,
        LocationKind::Airport,
        LocationKind::CentralStore,
        LocationKind::RegionalStore,
        LocationKind::Manufacturer,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LocationKind::ColdRoom => "cold-room",
            LocationKind::FreezerRoom => "freezer-room",
            LocationKind::Freezer => "freezer",
            LocationKind::Refrigerator => "refrigerator",
            LocationKind::ColdBox => "cold-box",
            LocationKind::RefrigeratedTruck => "refrigerated-truck",
            LocationKind::VaccineCarrier => "vaccine-carrier",
            LocationKind::HealthCenter => "health-center",
            LocationKind::Airport => "airport",
            LocationKind::CentralStore => "central-store",
            LocationKind::RegionalStore => "regional-store",
            LocationKind::Manufacturer => "manufacturer",
        }
    }
}

impl fmt::Display for LocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for LocationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown location kind {s:?}"))
    }
}

/// A single temperature sample taken at a location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemperatureReading {
    pub location: LocationId,
    pub ts: u64,
    pub temp: TempCenti,
}

impl TemperatureReading {
    pub fn new(location: impl Into<String>, ts: u64, temp: i32) -> Self {
        Self { location: LocationId(location.into()), ts, temp: TempCenti(temp) }
    }
}
