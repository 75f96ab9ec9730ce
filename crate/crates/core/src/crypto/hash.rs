use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};

use super::{CryptoError, Field128};

/// The protocol hash `h()`: a standard digest truncated to its first 128 bits.
///
/// `||` is plain concatenation of the 16-byte operands, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlg {
    #[default]
    Sha256,
    Sha512,
}

impl HashAlg {
    pub fn name(&self) -> &'static str {
        match self {
            HashAlg::Sha256 => "sha256",
            HashAlg::Sha512 => "sha512",
        }
    }

    /// Unmetered digest. Protocol code goes through [`super::Meter::hash`].
    pub(crate) fn digest(&self, parts: &[Field128]) -> Field128 {
        let mut out = [0u8; 16];
        match self {
            HashAlg::Sha256 => {
                let mut h = Sha256::new();
                for p in parts {
                    h.update(p.as_bytes());
                }
                out.copy_from_slice(&h.finalize()[..16]);
            }
            HashAlg::Sha512 => {
                let mut h = Sha512::new();
                for p in parts {
                    h.update(p.as_bytes());
                }
                out.copy_from_slice(&h.finalize()[..16]);
            }
        }
        Field128::from_bytes(out)
    }

    /// The card word naming this function.
    pub fn tag(&self) -> Field128 {
        Field128::from_label(self.name()).expect("hash names are short labels")
    }

    pub fn from_tag(tag: Field128) -> Result<Self, CryptoError> {
        tag.to_label()
            .ok_or_else(|| CryptoError::Domain(format!("{tag} does not name a hash")))?
            .parse()
    }
}

impl FromStr for HashAlg {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sha256" | "sha-256" => Ok(HashAlg::Sha256),
            "sha512" | "sha-512" => Ok(HashAlg::Sha512),
            other => Err(CryptoError::Domain(format!("unknown hash '{other}'"))),
        }
    }
}

impl fmt::Display for HashAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_order_sensitive() {
        let a = Field128::from_u128(1);
        let b = Field128::from_u128(2);
        for alg in [HashAlg::Sha256, HashAlg::Sha512] {
            assert_eq!(alg.digest(&[a]), alg.digest(&[a]));
            assert_ne!(alg.digest(&[a, b]), alg.digest(&[b, a]));
        }
    }

    #[test]
    fn tag_round_trip() {
        for alg in [HashAlg::Sha256, HashAlg::Sha512] {
            assert_eq!(HashAlg::from_tag(alg.tag()).unwrap(), alg);
        }
        assert!(HashAlg::from_tag(Field128::from_u128(7)).is_err());
        assert!("md5".parse::<HashAlg>().is_err());
    }

    #[test]
    fn golden_vectors() {
        let text = include_str!("../../testdata/hash_vectors.txt");
        let mut n = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let cols: Vec<&str> = line.split(' ').collect();
            let parts: Vec<Field128> = cols[0].split(',').map(|w| Field128::from_hex(w).unwrap()).collect();
            assert_eq!(HashAlg::Sha256.digest(&parts).to_hex(), cols[1], "{line}");
            assert_eq!(HashAlg::Sha512.digest(&parts).to_hex(), cols[2], "{line}");
            n += 1;
        }
        assert_eq!(n, 6);
    }
}
