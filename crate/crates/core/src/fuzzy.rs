//! Code-offset fuzzy extractor over a repetition code.
//!
//! Each of the 128 key bits is repeated `t = template_bits / 128` times. The
//! helper is the codeword XOR the template; reproduction XORs a fresh
//! template back in and majority-decodes each block (ties decode to 0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{decode_hex, encode_hex, Field128, SeededRng};

pub const DEFAULT_TEMPLATE_BITS: usize = 512;
const KEY_BITS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FuzzyError {
    #[error("template length {got} bits, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("template length {0} is not a positive multiple of 128")]
    BadLength(usize),
    #[error("cannot flip {flips} bits of a {len}-bit template")]
    FlipsOutOfRange { flips: usize, len: usize },
    #[error("malformed template: {0}")]
    Malformed(String),
}

/// Packed bit string, most significant bit of byte 0 first.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString { len, bytes: vec![0; len.div_ceil(8)] }
    }

    pub fn random(len: usize, rng: &mut SeededRng) -> Self {
        use rand::RngCore;
        let mut s = Self::zeros(len);
        rng.fill_bytes(&mut s.bytes);
        s.clear_padding();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    pub fn flip(&mut self, i: usize) {
        self.bytes[i / 8] ^= 1 << (7 - i % 8);
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        debug_assert_eq!(self.len, other.len);
        BitString {
            len: self.len,
            bytes: self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub fn hamming(&self, other: &BitString) -> usize {
        self.bytes.iter().zip(&other.bytes).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    pub fn to_hex(&self) -> String {
        encode_hex(&self.bytes)
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self, FuzzyError> {
        let bytes = decode_hex(hex.trim()).map_err(|e| FuzzyError::Malformed(e.to_string()))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(FuzzyError::Malformed(format!(
                "{} hex bytes for a {len}-bit string",
                bytes.len()
            )));
        }
        let s = BitString { len, bytes };
        let mut cleared = s.clone();
        cleared.clear_padding();
        if cleared != s {
            return Err(FuzzyError::Malformed("padding bits are set".into()));
        }
        Ok(s)
    }

    fn clear_padding(&mut self) {
        let extra = self.bytes.len() * 8 - self.len;
        if extra > 0 {
            let last = self.bytes.len() - 1;
            self.bytes[last] &= 0xffu8 << extra;
        }
    }
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitString({}; {})", self.len, self.to_hex())
    }
}

/// A biometric reading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiometricTemplate {
    pub bits: BitString,
    pub source_label: String,
}

impl BiometricTemplate {
    pub fn new(bits: BitString, source_label: impl Into<String>) -> Self {
        BiometricTemplate { bits, source_label: source_label.into() }
    }

    pub fn random(len: usize, rng: &mut SeededRng, source_label: impl Into<String>) -> Self {
        Self::new(BitString::random(len, rng), source_label)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hamming(&self, other: &BiometricTemplate) -> usize {
        self.bits.hamming(&other.bits)
    }

    /// Template file body: `bits <len>` then the hex string.
    pub fn to_file_string(&self) -> String {
        format!("bits {}\nlabel {}\n{}\n", self.len(), self.source_label, self.bits.to_hex())
    }
}

/// Public helper `P_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HelperData {
    pub offset: BitString,
}

/// Extracted key `R_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiometricKey(pub Field128);

/// Fuzzy extractor for one template length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyExtractor {
    template_bits: usize,
}

impl Default for FuzzyExtractor {
    fn default() -> Self {
        FuzzyExtractor { template_bits: DEFAULT_TEMPLATE_BITS }
    }
}

impl FuzzyExtractor {
    pub fn new(template_bits: usize) -> Result<Self, FuzzyError> {
        if template_bits == 0 || !template_bits.is_multiple_of(KEY_BITS) {
            return Err(FuzzyError::BadLength(template_bits));
        }
        Ok(FuzzyExtractor { template_bits })
    }

    pub fn template_bits(&self) -> usize {
        self.template_bits
    }

    /// Repetition factor `t`.
    pub fn repetition(&self) -> usize {
        self.template_bits / KEY_BITS
    }

    fn check(&self, len: usize) -> Result<(), FuzzyError> {
        if len != self.template_bits {
            return Err(FuzzyError::LengthMismatch { expected: self.template_bits, got: len });
        }
        Ok(())
    }

    fn codeword(&self, key: Field128) -> BitString {
        let t = self.repetition();
        let mut cw = BitString::zeros(self.template_bits);
        for i in 0..KEY_BITS {
            if key.bit(i) {
                for j in 0..t {
                    cw.flip(i * t + j);
                }
            }
        }
        cw
    }

    fn decode(&self, word: &BitString) -> Field128 {
        let t = self.repetition();
        let mut key = Field128::ZERO;
        for i in 0..KEY_BITS {
            let ones = (0..t).filter(|j| word.get(i * t + j)).count();
            if 2 * ones > t {
                key = key.with_bit_flipped(i);
            }
        }
        key
    }

    /// `Gen(B) = (R, P)` with `R` uniform.
    pub fn gen(
        &self,
        template: &BiometricTemplate,
        rng: &mut SeededRng,
    ) -> Result<(BiometricKey, HelperData), FuzzyError> {
        self.check(template.len())?;
        let key = rng.random_field();
        let offset = self.codeword(key).xor(&template.bits);
        Ok((BiometricKey(key), HelperData { offset }))
    }

    /// `Rep(B', P)`. A far-off template yields a wrong key, not an error.
    pub fn rep(
        &self,
        template: &BiometricTemplate,
        helper: &HelperData,
    ) -> Result<BiometricKey, FuzzyError> {
        self.check(template.len())?;
        self.check(helper.offset.len())?;
        Ok(BiometricKey(self.decode(&template.bits.xor(&helper.offset))))
    }

    /// Flips one random bit in each of `blocks` distinct repetition blocks,
    /// which always stays within the correction radius when `t >= 3`.
    pub fn rescan(
        &self,
        template: &BiometricTemplate,
        blocks: usize,
        rng: &mut SeededRng,
    ) -> Result<BiometricTemplate, FuzzyError> {
        self.check(template.len())?;
        if blocks > KEY_BITS {
            return Err(FuzzyError::FlipsOutOfRange { flips: blocks, len: KEY_BITS });
        }
        let t = self.repetition();
        let chosen = sample_distinct(KEY_BITS, blocks, rng);
        let positions: Vec<usize> = chosen.into_iter().map(|b| b * t + rng.below(t)).collect();
        Ok(flip_positions(template, &positions))
    }
}

/// Inverts exactly `flips` distinct positions drawn from `rng`.
pub fn perturb(
    template: &BiometricTemplate,
    flips: usize,
    rng: &mut SeededRng,
) -> Result<BiometricTemplate, FuzzyError> {
    if flips > template.len() {
        return Err(FuzzyError::FlipsOutOfRange { flips, len: template.len() });
    }
    let positions = sample_distinct(template.len(), flips, rng);
    Ok(flip_positions(template, &positions))
}

/// Inverts the given positions; applying the same positions twice restores
/// the original.
pub fn flip_positions(template: &BiometricTemplate, positions: &[usize]) -> BiometricTemplate {
    let mut out = template.clone();
    for &p in positions {
        out.bits.flip(p);
    }
    out
}

// Partial Fisher-Yates.
fn sample_distinct(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
