use std::fmt;
use std::ops::BitXor;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CryptoError;

/// A 128-bit protocol word.
///
/// Every value that crosses the wire or sits on a card (identities,
/// timestamps, hash outputs, group elements, masked values) is carried in
/// this width. Bytes are big-endian, so `from_u128(1)` ends in `0x01`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Field128([u8; 16]);

impl Field128 {
    pub const ZERO: Field128 = Field128([0; 16]);
    pub const BYTES: usize = 16;
    pub const BITS: u64 = 128;

    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        Field128(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 16] = bytes.try_into().map_err(|_| {
            CryptoError::Domain(format!("expected 16 bytes, got {}", bytes.len()))
        })?;
        Ok(Field128(arr))
    }

    pub const fn from_u128(v: u128) -> Self {
        Field128(v.to_be_bytes())
    }

    pub const fn to_u128(self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 16]
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(32);
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// Parses exactly 32 hex digits (an optional `0x` prefix is accepted).
    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let s = s.trim();
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.len() != 32 {
            return Err(CryptoError::Domain(format!(
                "expected 32 hex digits, got {}",
                s.len()
            )));
        }
        let bytes = decode_hex(s)?;
        Field128::from_slice(&bytes)
    }

    /// Packs a short UTF-8 label (at most 16 bytes, no NUL) into a word,
    /// zero-padded on the right.
    pub fn from_label(label: &str) -> Result<Self, CryptoError> {
        let raw = label.as_bytes();
        if raw.is_empty() || raw.len() > 16 {
            return Err(CryptoError::Domain(format!(
                "label must be 1..=16 bytes of UTF-8, got {}",
                raw.len()
            )));
        }
        if raw.contains(&0) {
            return Err(CryptoError::Domain("label contains a NUL byte".into()));
        }
        let mut out = [0u8; 16];
        out[..raw.len()].copy_from_slice(raw);
        Ok(Field128(out))
    }

    /// Inverse of [`Field128::from_label`]; `None` if the word is not a label.
    pub fn to_label(&self) -> Option<String> {
        let end = self.0.iter().position(|&b| b == 0).unwrap_or(16);
        if end == 0 || self.0[end..].iter().any(|&b| b != 0) {
            return None;
        }
        String::from_utf8(self.0[..end].to_vec()).ok()
    }

    /// Bit `i`, counted from the most significant bit of byte 0.
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    pub fn with_bit_flipped(mut self, i: usize) -> Self {
        self.0[i / 8] ^= 1 << (7 - i % 8);
        self
    }
}

impl BitXor for Field128 {
    type Output = Field128;

    fn bitxor(self, rhs: Field128) -> Field128 {
        let mut out = [0u8; 16];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(rhs.0.iter())) {
            *o = a ^ b;
        }
        Field128(out)
    }
}

/// Bitwise XOR of two words.
pub fn xor_mask(a: Field128, b: Field128) -> Field128 {
    a ^ b
}

impl fmt::Debug for Field128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field128({})", self.to_hex())
    }
}

impl fmt::Display for Field128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<Timestamp> for Field128 {
    fn from(t: Timestamp) -> Self {
        t.to_field()
    }
}

impl Serialize for Field128 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Field128 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Field128::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn decode_hex(s: &str) -> Result<Vec<u8>, CryptoError> {
    if !s.len().is_multiple_of(2) {
        return Err(CryptoError::Domain("odd number of hex digits".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| CryptoError::Domain(format!("invalid hex at digit {i}")))
        })
        .collect()
}

pub(crate) fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Milliseconds since the Unix epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn millis(self) -> u64 {
        self.0
    }

    /// Zero-extends into the low 64 bits of a word.
    pub fn to_field(self) -> Field128 {
        Field128::from_u128(self.0 as u128)
    }

    /// Fails when the high 64 bits are not zero.
    pub fn from_field(f: Field128) -> Result<Self, CryptoError> {
        let v = f.to_u128();
        u64::try_from(v)
            .map(Timestamp)
            .map_err(|_| CryptoError::Domain(format!("{f} is not a 64-bit timestamp")))
    }

    pub fn abs_diff(self, other: Timestamp) -> u64 {
        self.0.abs_diff(other.0)
    }

    pub fn plus(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}
