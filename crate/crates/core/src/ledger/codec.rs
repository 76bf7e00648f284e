//! Canonical byte encoding.
//!
//! Fields are written in declared order. Integers are fixed-width big-endian,
//! variable-length byte and string fields carry a `u32` big-endian length prefix,
//! fixed-size arrays (hashes, keys, signatures) are written raw.

use super::hash::Hash;
use super::LedgerError;

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i32(&mut self, v: i32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn hash(&mut self, h: &Hash) -> &mut Self {
        self.fixed(&h.0)
    }

    /// Length-prefixed bytes, rejecting anything longer than `max`.
    pub fn bytes(&mut self, field: &'static str, v: &[u8], max: usize) -> Result<&mut Self, LedgerError> {
        if v.len() > max {
            return Err(LedgerError::OversizeField { field, len: v.len(), max });
        }
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        Ok(self)
    }

    pub fn str(&mut self, field: &'static str, v: &str, max: usize) -> Result<&mut Self, LedgerError> {
        self.bytes(field, v.as_bytes(), max)
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Strict reader over canonical bytes. Every read fails with `Malformed` on truncation.
#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            LedgerError::Malformed(format!("need {n} bytes at offset {}, have {}", self.pos, self.data.len() - self.pos))
        })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, LedgerError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn i32(&mut self) -> Result<i32, LedgerError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], LedgerError> {
        Ok(self.take(N)?.try_into().expect("N bytes"))
    }

    pub fn hash(&mut self) -> Result<Hash, LedgerError> {
        Ok(Hash(self.array()?))
    }

    pub fn bytes(&mut self, field: &'static str, max: usize) -> Result<&'a [u8], LedgerError> {
        let len = self.u32()? as usize;
        if len > max {
            return Err(LedgerError::OversizeField { field, len, max });
        }
        self.take(len)
    }

    pub fn string(&mut self, field: &'static str, max: usize) -> Result<String, LedgerError> {
        let raw = self.bytes(field, max)?;
        String::from_utf8(raw.to_vec()).map_err(|_| LedgerError::Malformed(format!("{field} is not UTF-8")))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), LedgerError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(LedgerError::Malformed(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_big_endian_fixed_width() {
        let mut e = Encoder::new();
        e.u8(7).u32(1).u64(2).i32(-1);
        assert_eq!(
            e.finish(),
            vec![7, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2, 0xff, 0xff, 0xff, 0xff]
        );
    }

    #[test]
    fn oversize_rejected_both_ways() {
        let mut e = Encoder::new();
        assert!(matches!(
            e.bytes("meta", &[0u8; 5], 4),
            Err(LedgerError::OversizeField { field: "meta", len: 5, max: 4 })
        ));
        let mut e = Encoder::new();
        e.bytes("meta", &[1, 2, 3], 8).unwrap();
        let raw = e.finish();
        let mut d = Decoder::new(&raw);
        assert!(matches!(d.bytes("meta", 2), Err(LedgerError::OversizeField { .. })));
    }

    #[test]
    fn truncation_and_trailing_bytes_fail() {
        let mut d = Decoder::new(&[0, 0, 1]);
        assert!(d.u32().is_err());
        let d = Decoder::new(&[0]);
        assert!(d.finish().is_err());
    }
}
