//! Shared substrate: protocol words, the metered hash, the group, randomness
//! and clocks.

mod clock;
mod field;
mod group;
mod hash;
mod rng;

pub use clock::{Clock, FreshnessWindow};
pub use field::{xor_mask, Field128, Timestamp};
pub use group::{is_probable_prime, mod_exp, GroupParams, ServerSecret, DEFAULT_G, DEFAULT_P};
pub use hash::HashAlg;
pub use rng::SeededRng;

pub(crate) use field::{decode_hex, encode_hex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::cost::{CostLedger, Phase, Principal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// The public algorithm choices both parties share: group and hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Suite {
    pub params: GroupParams,
    pub hash: HashAlg,
}

impl Suite {
    pub fn new(params: GroupParams, hash: HashAlg) -> Self {
        Suite { params, hash }
    }

    /// Binds this suite to a ledger scope; every hash and exponentiation
    /// through the returned meter is counted there.
    pub fn meter<'a>(
        &'a self,
        ledger: &'a mut CostLedger,
        phase: Phase,
        principal: Principal,
    ) -> Meter<'a> {
        Meter { suite: self, ledger, phase, principal }
    }
}

/// Counting front end for `h()` and `mod_exp`.
pub struct Meter<'a> {
    suite: &'a Suite,
    ledger: &'a mut CostLedger,
    phase: Phase,
    principal: Principal,
}

impl Meter<'_> {
    pub fn suite(&self) -> &Suite {
        self.suite
    }

    pub fn params(&self) -> &GroupParams {
        &self.suite.params
    }

    /// `h(parts[0] || parts[1] || ...)`; counts exactly one invocation.
    pub fn hash(&mut self, parts: &[Field128]) -> Field128 {
        assert!(!parts.is_empty(), "h() needs at least one operand");
        self.ledger.count_hash(self.phase, self.principal);
        self.suite.hash.digest(parts)
    }

    /// `base^exponent mod p` for a base given as a word.
    pub fn exp(&mut self, base: Field128, exponent: u128) -> Result<Field128, CryptoError> {
        let base = self.suite.params.element(base)?;
        self.ledger.count_modexp(self.phase, self.principal);
        mod_exp(base, exponent, &self.suite.params)
    }

    /// `g^exponent mod p`.
    pub fn exp_g(&mut self, exponent: u128) -> Result<Field128, CryptoError> {
        self.ledger.count_modexp(self.phase, self.principal);
        mod_exp(self.suite.params.g(), exponent, &self.suite.params)
    }
}
