use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{CryptoError, Field128};

/// Default modulus: the largest safe prime below 2^128 (p = 2q + 1, q prime).
pub const DEFAULT_P: u128 = 0xffff_ffff_ffff_ffff_ffff_ffff_ffff_c3a7;
/// 4 = 2^2 is a quadratic residue, so it generates the subgroup of order q.
pub const DEFAULT_G: u128 = 4;

// Fixed witness set; fine for a simulator, not a primality certificate.
const MR_BASES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Multiplicative group parameters `(p, g)`.
///
/// Exponentiation here is variable-time; this is a simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    p: u128,
    g: u128,
    validated: bool,
}

impl GroupParams {
    /// Validates that `p` is a safe prime and that `g` has order `(p-1)/2 > 2^64`.
    pub fn checked(p: u128, g: u128) -> Result<Self, CryptoError> {
        let params = Self::trusted(p, g)?;
        if !is_probable_prime(p) {
            return Err(CryptoError::Domain(format!("p = {p:#x} is not prime")));
        }
        let q = (p - 1) / 2;
        if !is_probable_prime(q) {
            return Err(CryptoError::Domain("p is not a safe prime".into()));
        }
        if q <= 1u128 << 64 {
            return Err(CryptoError::Domain("subgroup order must exceed 2^64".into()));
        }
        if pow_mod(g, q, p) != 1 {
            return Err(CryptoError::Domain("g does not lie in the order-q subgroup".into()));
        }
        Ok(GroupParams { validated: true, ..params })
    }

    /// Accepts user-supplied parameters after range checks only.
    pub fn trusted(p: u128, g: u128) -> Result<Self, CryptoError> {
        if p < 5 {
            return Err(CryptoError::Domain("p must be at least 5".into()));
        }
        if g <= 1 || g >= p {
            return Err(CryptoError::Domain("g must satisfy 1 < g < p".into()));
        }
        Ok(GroupParams { p, g, validated: false })
    }

    pub fn p(&self) -> u128 {
        self.p
    }

    pub fn g(&self) -> u128 {
        self.g
    }

    /// True when [`GroupParams::checked`] ran the primality and order checks.
    pub fn is_validated(&self) -> bool {
        self.validated
    }

    /// Decodes a word as a group element in `[1, p-1]`.
    pub fn element(&self, f: Field128) -> Result<u128, CryptoError> {
        let v = f.to_u128();
        if v == 0 || v >= self.p {
            return Err(CryptoError::Domain(format!("{f} is not a group element")));
        }
        Ok(v)
    }

    /// Decodes a word as an exponent in `[2, p-2]`.
    pub fn exponent(&self, f: Field128) -> Result<u128, CryptoError> {
        let v = f.to_u128();
        if v < 2 || v > self.p - 2 {
            return Err(CryptoError::Domain(format!("{f} is not a valid exponent")));
        }
        Ok(v)
    }
}

impl Default for GroupParams {
    fn default() -> Self {
        // Validated by `default_params_are_checked`; skipping the work here
        // keeps construction cheap.
        GroupParams { p: DEFAULT_P, g: DEFAULT_G, validated: true }
    }
}

/// `base^exponent mod p`, encoded as a word.
pub fn mod_exp(base: u128, exponent: u128, params: &GroupParams) -> Result<Field128, CryptoError> {
    if base == 0 || base >= params.p {
        return Err(CryptoError::Domain(format!(
            "base {base:#x} outside (0, p)"
        )));
    }
    Ok(Field128::from_u128(pow_mod(base, exponent, params.p)))
}

fn pow_mod(base: u128, exponent: u128, modulus: u128) -> u128 {
    let r = BigUint::from(base).modpow(&BigUint::from(exponent), &BigUint::from(modulus));
    to_u128(&r)
}

fn to_u128(v: &BigUint) -> u128 {
    let mut out = 0u128;
    for d in v.iter_u64_digits().rev() {
        out = (out << 64) | d as u128;
    }
    out
}

/// Miller-Rabin over a fixed base set.
pub fn is_probable_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    for &b in &MR_BASES {
        let b = b as u128;
        if n == b {
            return true;
        }
        if n.is_multiple_of(b) {
            return false;
        }
    }
    let n_big = BigUint::from(n);
    let one = BigUint::from(1u32);
    let n_minus_one = &n_big - &one;
    let s = (n - 1).trailing_zeros();
    let d = BigUint::from((n - 1) >> s);
    'witness: for &b in &MR_BASES {
        let mut x = BigUint::from(b).modpow(&d, &n_big);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u32), &n_big);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The server's long-term secret `X` and its public value `Y = g^X mod p`.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerSecret {
    x: u128,
    y: Field128,
}

impl ServerSecret {
    /// Recomputes `Y` from `X`.
    pub fn from_exponent(x: u128, params: &GroupParams) -> Result<Self, CryptoError> {
        if x < 2 || x > params.p() - 2 {
            return Err(CryptoError::Domain("X must lie in [2, p-2]".into()));
        }
        let y = mod_exp(params.g(), x, params)?;
        Ok(ServerSecret { x, y })
    }

    pub fn exponent(&self) -> u128 {
        self.x
    }

    /// `X` as a protocol word, for `h(ID || X)`.
    pub fn as_field(&self) -> Field128 {
        Field128::from_u128(self.x)
    }

    pub fn public(&self) -> Field128 {
        self.y
    }
}

impl std::fmt::Debug for ServerSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerSecret").field("y", &self.y).finish_non_exhaustive()
    }
}
