use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LedgerError;

/// Identity of a submitter: the raw 32-byte Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub [u8; 32]);

impl KeyId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, LedgerError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out).map_err(|e| LedgerError::BadKey(e.to_string()))?;
        Ok(KeyId(out))
    }

    /// Short hex prefix for human-facing output.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }

    pub fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(&self.0).ok()
    }

    /// Checks an Ed25519 signature over `msg` under this key (strict verification).
    pub fn verify(&self, msg: &[u8], signature: &[u8; 64]) -> bool {
        let Some(vk) = self.verifying_key() else {
            return false;
        };
        vk.verify_strict(msg, &Signature::from_bytes(signature)).is_ok()
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.short())
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for KeyId {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeyId::from_hex(s)
    }
}

impl Serialize for KeyId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for KeyId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        KeyId::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// An Ed25519 signing key together with its public identity.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    /// Deterministic keypair derived from a label; handy for simulations and fixtures.
    pub fn from_label(label: &str) -> Self {
        Self::from_seed(super::hash_bytes(label.as_bytes()).0)
    }

    pub fn id(&self) -> KeyId {
        KeyId(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.signing.sign(msg).to_bytes()
    }

    /// Hex encoding of the 32-byte private seed (the key-file format).
    pub fn secret_hex(&self) -> String {
        hex::encode(self.signing.to_bytes())
    }

    pub fn from_secret_hex(s: &str) -> Result<Self, LedgerError> {
        let mut seed = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut seed).map_err(|e| LedgerError::BadKey(e.to_string()))?;
        Ok(Self::from_seed(seed))
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair").field("id", &self.id()).finish_non_exhaustive()
    }
}
