use serde::{Deserialize, Serialize};

use super::codec::{Decoder, Encoder};
use super::hash::{hash_bytes, Hash};
use super::keys::{KeyId, Keypair};
use super::LedgerError;
use crate::types::{ItemId, LocationId, LocationKind, TempCenti, TemperatureReading, MAX_ID_LEN};

/// On-chain reference to an off-chain logger dump. Only the digest travels in the block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggerDumpRef {
    pub location: LocationId,
    pub dump_hash: Hash,
    pub first_ts: u64,
    pub last_ts: u64,
    pub count: u32,
}

/// The operations a transaction can request from the contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TxPayload {
    Deploy,
    RegisterItem {
        id: ItemId,
        manufacturer: LocationId,
        safe_min: TempCenti,
        safe_max: TempCenti,
        registered_at: u64,
    },
    AddAdmin {
        admin: KeyId,
    },
    AddLocation {
        id: LocationId,
        kind: LocationKind,
        sensor: Option<KeyId>,
    },
    RemoveLocation {
        id: LocationId,
    },
    ItemArrival {
        item: ItemId,
        location: LocationId,
        ts: u64,
    },
    ItemDeparture {
        item: ItemId,
        location: LocationId,
        ts: u64,
    },
    TemperatureReading(TemperatureReading),
    LoggerDumpRef(LoggerDumpRef),
}

mod tag {
    pub const DEPLOY: u8 = 0x00;
    pub const REGISTER_ITEM: u8 = 0x01;
    pub const ADD_ADMIN: u8 = 0x02;
    pub const ADD_LOCATION: u8 = 0x03;
    pub const REMOVE_LOCATION: u8 = 0x04;
    pub const ITEM_ARRIVAL: u8 = 0x05;
    pub const ITEM_DEPARTURE: u8 = 0x06;
    pub const TEMPERATURE_READING: u8 = 0x07;
    pub const LOGGER_DUMP_REF: u8 = 0x08;
}

impl TxPayload {
    /// Stable short name of the payload kind (used in CSV output and error reports).
    pub fn kind(&self) -> &'static str {
        match self {
            TxPayload::Deploy => "deploy",
            TxPayload::RegisterItem { .. } => "register-item",
            TxPayload::AddAdmin { .. } => "add-admin",
            TxPayload::AddLocation { .. } => "add-location",
            TxPayload::RemoveLocation { .. } => "remove-location",
            TxPayload::ItemArrival { .. } => "item-arrival",
            TxPayload::ItemDeparture { .. } => "item-departure",
            TxPayload::TemperatureReading(_) => "temperature",
            TxPayload::LoggerDumpRef(_) => "logger-dump",
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let mut e = Encoder::new();
        match self {
            TxPayload::Deploy => {
                e.u8(tag::DEPLOY);
            }
            TxPayload::RegisterItem { id, manufacturer, safe_min, safe_max, registered_at } => {
                e.u8(tag::REGISTER_ITEM);
                e.str("item id", id.as_str(), MAX_ID_LEN)?;
                e.str("location id", manufacturer.as_str(), MAX_ID_LEN)?;
                e.i32(safe_min.get()).i32(safe_max.get()).u64(*registered_at);
            }
            TxPayload::AddAdmin { admin } => {
                e.u8(tag::ADD_ADMIN).fixed(&admin.0);
            }
            TxPayload::AddLocation { id, kind, sensor } => {
                e.u8(tag::ADD_LOCATION);
                e.str("location id", id.as_str(), MAX_ID_LEN)?;
                e.u8(kind.code());
                match sensor {
                    Some(k) => e.u8(1).fixed(&k.0),
                    None => e.u8(0),
                };
            }
            TxPayload::RemoveLocation { id } => {
                e.u8(tag::REMOVE_LOCATION);
                e.str("location id", id.as_str(), MAX_ID_LEN)?;
            }
            TxPayload::ItemArrival { item, location, ts } | TxPayload::ItemDeparture { item, location, ts } => {
                let t = if matches!(self, TxPayload::ItemArrival { .. }) { tag::ITEM_ARRIVAL } else { tag::ITEM_DEPARTURE };
                e.u8(t);
                e.str("item id", item.as_str(), MAX_ID_LEN)?;
                e.str("location id", location.as_str(), MAX_ID_LEN)?;
                e.u64(*ts);
            }
            TxPayload::TemperatureReading(r) => {
                e.u8(tag::TEMPERATURE_READING);
                e.str("location id", r.location.as_str(), MAX_ID_LEN)?;
                e.u64(r.ts).i32(r.temp.get());
            }
            TxPayload::LoggerDumpRef(r) => {
                e.u8(tag::LOGGER_DUMP_REF);
                e.str("location id", r.location.as_str(), MAX_ID_LEN)?;
                e.hash(&r.dump_hash).u64(r.first_ts).u64(r.last_ts).u32(r.count);
            }
        }
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut d = Decoder::new(bytes);
        let payload = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(payload)
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, LedgerError> {
        let loc = |d: &mut Decoder<'_>| d.string("location id", MAX_ID_LEN).map(LocationId);
        let item = |d: &mut Decoder<'_>| d.string("item id", MAX_ID_LEN).map(ItemId);
        Ok(match d.u8()? {
            tag::DEPLOY => TxPayload::Deploy,
            tag::REGISTER_ITEM => TxPayload::RegisterItem {
                id: item(d)?,
                manufacturer: loc(d)?,
                safe_min: TempCenti(d.i32()?),
                safe_max: TempCenti(d.i32()?),
                registered_at: d.u64()?,
            },
            tag::ADD_ADMIN => TxPayload::AddAdmin { admin: KeyId(d.array()?) },
            tag::ADD_LOCATION => {
                let id = loc(d)?;
                let code = d.u8()?;
                let kind = LocationKind::from_code(code)
                    .ok_or_else(|| LedgerError::Malformed(format!("unknown location kind {code}")))?;
                let sensor = match d.u8()? {
                    0 => None,
                    1 => Some(KeyId(d.array()?)),
                    b => return Err(LedgerError::Malformed(format!("bad option flag {b}"))),
                };
                TxPayload::AddLocation { id, kind, sensor }
            }
            tag::REMOVE_LOCATION => TxPayload::RemoveLocation { id: loc(d)? },
            tag::ITEM_ARRIVAL => TxPayload::ItemArrival { item: item(d)?, location: loc(d)?, ts: d.u64()? },
            tag::ITEM_DEPARTURE => TxPayload::ItemDeparture { item: item(d)?, location: loc(d)?, ts: d.u64()? },
            tag::TEMPERATURE_READING => TxPayload::TemperatureReading(TemperatureReading {
                location: loc(d)?,
                ts: d.u64()?,
                temp: TempCenti(d.i32()?),
            }),
            tag::LOGGER_DUMP_REF => TxPayload::LoggerDumpRef(LoggerDumpRef {
                location: loc(d)?,
                dump_hash: d.hash()?,
                first_ts: d.u64()?,
                last_ts: d.u64()?,
                count: d.u32()?,
            }),
            t => return Err(LedgerError::Malformed(format!("unknown payload tag {t:#04x}"))),
        })
    }
}

/// A payload signed by its submitter, with a per-submitter nonce for replay protection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTransaction {
    pub payload: TxPayload,
    pub submitter: KeyId,
    pub nonce: u64,
    pub signature: [u8; 64],
}

/// Bytes covered by the signature: canonical payload followed by the nonce.
pub fn signing_bytes(payload_bytes: &[u8], nonce: u64) -> Vec<u8> {
    let mut msg = Vec::with_capacity(payload_bytes.len() + 8);
    msg.extend_from_slice(payload_bytes);
    msg.extend_from_slice(&nonce.to_be_bytes());
    msg
}

/// Signs `payload` with `key` under `nonce`.
pub fn sign_tx(key: &Keypair, payload: TxPayload, nonce: u64) -> Result<SignedTransaction, LedgerError> {
    let bytes = payload.encode()?;
    let signature = key.sign(&signing_bytes(&bytes, nonce));
    Ok(SignedTransaction { payload, submitter: key.id(), nonce, signature })
}

/// Source of submitter registrations and replay counters.
pub trait KeyRegistry {
    fn is_registered(&self, key: &KeyId) -> bool;
    /// Highest nonce already accepted from `key` (0 when none).
    fn last_nonce(&self, key: &KeyId) -> u64;
}

impl KeyRegistry for std::collections::BTreeMap<KeyId, u64> {
    fn is_registered(&self, key: &KeyId) -> bool {
        self.contains_key(key)
    }

    fn last_nonce(&self, key: &KeyId) -> u64 {
        self.get(key).copied().unwrap_or(0)
    }
}

/// True iff the signature is valid under a registered key and the nonce is fresh.
pub fn verify_tx(tx: &SignedTransaction, registry: &dyn KeyRegistry) -> Result<bool, LedgerError> {
    if !registry.is_registered(&tx.submitter) {
        return Err(LedgerError::UnknownSubmitter(tx.submitter));
    }
    Ok(tx.signature_valid() && tx.nonce > registry.last_nonce(&tx.submitter))
}

impl SignedTransaction {
    /// Signature check alone, independent of any registry.
    pub fn signature_valid(&self) -> bool {
        match self.payload.encode() {
            Ok(bytes) => self.submitter.verify(&signing_bytes(&bytes, self.nonce), &self.signature),
            Err(_) => false,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let payload = self.payload.encode()?;
        let mut e = Encoder::new();
        e.bytes("payload", &payload, u32::MAX as usize)?;
        e.fixed(&self.submitter.0).u64(self.nonce).fixed(&self.signature);
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut d = Decoder::new(bytes);
        let tx = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(tx)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, LedgerError> {
        let payload = TxPayload::decode(d.bytes("payload", u32::MAX as usize)?)?;
        Ok(SignedTransaction { payload, submitter: KeyId(d.array()?), nonce: d.u64()?, signature: d.array()? })
    }

    /// Hash of the canonical transaction bytes; doubles as the transaction id.
    pub fn hash(&self) -> Hash {
        // payloads that fail to encode never pass construction or decoding
        hash_bytes(&self.encode().expect("well-formed transaction"))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn reading(temp: i32) -> TxPayload {
        TxPayload::TemperatureReading(TemperatureReading::new("F-1", 1_000, temp))
    }

    #[test]
    fn serialization_is_deterministic_and_field_sensitive() {
        assert_eq!(reading(500).encode().unwrap(), reading(500).encode().unwrap());
        assert_ne!(reading(500).encode().unwrap(), reading(501).encode().unwrap());
    }

    #[test]
    fn register_item_matches_hand_encoding() {
        let payload = TxPayload::RegisterItem {
            id: "LOT-1".into(),
            manufacturer: "MFG-1".into(),
            safe_min: TempCenti(200),
            safe_max: TempCenti(800),
            registered_at: 1_000,
        };
        // tag | len "LOT-1" | "LOT-1" | len "MFG-1" | "MFG-1" | 200 i32 | 800 i32 | 1000 u64
        let mut expected = vec![0x01];
        expected.extend_from_slice(&[0, 0, 0, 5]);
        expected.extend_from_slice(b"LOT-1");
        expected.extend_from_slice(&[0, 0, 0, 5]);
        expected.extend_from_slice(b"MFG-1");
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0xc8]);
        expected.extend_from_slice(&[0x00, 0x00, 0x03, 0x20]);
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x03, 0xe8]);
        assert_eq!(payload.encode().unwrap(), expected);
    }

    #[test]
    fn oversize_id_rejected() {
        let p = TxPayload::RemoveLocation { id: LocationId("x".repeat(65)) };
        assert!(matches!(p.encode(), Err(LedgerError::OversizeField { max: 64, .. })));
        let p = TxPayload::RemoveLocation { id: LocationId("x".repeat(64)) };
        assert!(p.encode().is_ok());
    }

    #[test]
    fn sign_verify_round_trip_and_key_mismatch() {
        let kp = Keypair::from_label("admin");
        let other = Keypair::from_label("other");
        let tx = sign_tx(&kp, reading(500), 1).unwrap();
        let mut reg = BTreeMap::new();
        reg.insert(kp.id(), 0u64);
        assert!(verify_tx(&tx, &reg).unwrap());

        let mut forged = tx.clone();
        forged.submitter = other.id();
        reg.insert(other.id(), 0);
        assert!(!verify_tx(&forged, &reg).unwrap());
    }

    #[test]
    fn replayed_nonce_rejected() {
        let kp = Keypair::from_label("sensor");
        let tx = sign_tx(&kp, reading(500), 3).unwrap();
        let mut reg = BTreeMap::new();
        reg.insert(kp.id(), 3u64);
        assert!(!verify_tx(&tx, &reg).unwrap());
        reg.insert(kp.id(), 2u64);
        assert!(verify_tx(&tx, &reg).unwrap());
    }

    #[test]
    fn unknown_submitter_is_an_error() {
        let tx = sign_tx(&Keypair::from_label("stranger"), reading(1), 1).unwrap();
        let reg: BTreeMap<KeyId, u64> = BTreeMap::new();
        assert!(matches!(verify_tx(&tx, &reg), Err(LedgerError::UnknownSubmitter(_))));
    }

    #[test]
    fn single_byte_flips_in_payload_break_signature() {
        let kp = Keypair::from_label("admin");
        let payload = TxPayload::RegisterItem {
            id: "LOT-7".into(),
            manufacturer: "MFG-1".into(),
            safe_min: TempCenti(200),
            safe_max: TempCenti(800),
            registered_at: 42,
        };
        let tx = sign_tx(&kp, payload, 9).unwrap();
        let bytes = tx.payload.encode().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut mutated = bytes.clone();
            let i = rng.random_range(0..mutated.len());
            mutated[i] ^= rng.random_range(1..=255u8);
            // a flip either breaks decoding or yields a payload the signature no longer covers
            if let Ok(p) = TxPayload::decode(&mutated) {
                let tampered = SignedTransaction { payload: p, ..tx.clone() };
                assert!(!tampered.signature_valid(), "flip at {i} still verifies");
            }
        }
    }

    fn any_payload() -> impl Strategy<Value = TxPayload> {
        let id = "[A-Z0-9-]{0,64}";
        prop_oneof![
            Just(TxPayload::Deploy),
            (id, id, any::<i32>(), any::<i32>(), any::<u64>()).prop_map(|(i, m, lo, hi, at)| TxPayload::RegisterItem {
                id: ItemId(i),
                manufacturer: LocationId(m),
                safe_min: TempCenti(lo),
                safe_max: TempCenti(hi),
                registered_at: at,
            }),
            any::<[u8; 32]>().prop_map(|k| TxPayload::AddAdmin { admin: KeyId(k) }),
            (id, 0u8..12, proptest::option::of(any::<[u8; 32]>())).prop_map(|(i, k, s)| TxPayload::AddLocation {
                id: LocationId(i),
                kind: LocationKind::from_code(k).unwrap(),
                sensor: s.map(KeyId),
            }),
            id.prop_map(|i| TxPayload::RemoveLocation { id: LocationId(i) }),
            (id, id, any::<u64>()).prop_map(|(i, l, ts)| TxPayload::ItemArrival { item: ItemId(i), location: LocationId(l), ts }),
            (id, id, any::<u64>()).prop_map(|(i, l, ts)| TxPayload::ItemDeparture { item: ItemId(i), location: LocationId(l), ts }),
            (id, any::<u64>(), any::<i32>()).prop_map(|(l, ts, t)| TxPayload::TemperatureReading(TemperatureReading {
                location: LocationId(l),
                ts,
                temp: TempCenti(t),
            })),
            (id, any::<[u8; 32]>(), any::<u64>(), any::<u64>(), any::<u32>()).prop_map(|(l, h, a, b, c)| {
                TxPayload::LoggerDumpRef(LoggerDumpRef { location: LocationId(l), dump_hash: Hash(h), first_ts: a, last_ts: b, count: c })
            }),
        ]
    }

    proptest! {
        #[test]
        fn payload_decode_inverts_encode(p in any_payload()) {
            let bytes = p.encode().unwrap();
            prop_assert_eq!(TxPayload::decode(&bytes).unwrap(), p);
        }

        #[test]
        fn signed_tx_decode_inverts_encode(p in any_payload(), nonce in any::<u64>()) {
            let tx = sign_tx(&Keypair::from_label("k"), p, nonce).unwrap();
            let back = SignedTransaction::decode(&tx.encode().unwrap()).unwrap();
            prop_assert!(back.signature_valid());
            prop_assert_eq!(back, tx);
        }
    }
}
