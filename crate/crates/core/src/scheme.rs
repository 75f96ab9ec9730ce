//! Types shared by both authentication schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Clock, CryptoError, Field128, SeededRng, Timestamp};
use crate::fuzzy::FuzzyError;
use crate::harness::cost::CostLedger;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Baseline,
    Improved,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Improved => "improved",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "improved" => Ok(Scheme::Improved),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

/// User identity `ID_i`: a short label packed into one word.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Identity(Field128);

impl Identity {
    pub fn new(label: &str) -> Result<Self, CryptoError> {
        Field128::from_label(label).map(Identity)
    }

    pub fn from_word(word: Field128) -> Self {
        Identity(word)
    }

    pub fn word(&self) -> Field128 {
        self.0
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.to_label() {
            Some(l) => write!(f, "Identity({l:?})"),
            None => write!(f, "Identity({})", self.0),
        }
    }
}

/// Password `PW_i`: at most 16 bytes of UTF-8.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Password {
    text: String,
    word: Field128,
}

impl TryFrom<String> for Password {
    type Error = CryptoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Password::new(&s)
    }
}

impl From<Password> for String {
    fn from(p: Password) -> String {
        p.text
    }
}

impl Password {
    pub fn new(text: &str) -> Result<Self, CryptoError> {
        Ok(Password { text: text.to_string(), word: Field128::from_label(text)? })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word(&self) -> Field128 {
        self.word
    }
}

impl fmt::Debug for Password {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Password(..)")
    }
}

/// Why a party terminated a session. On the simulated wire every variant
/// looks the same: the session simply ends.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("stale timestamp: sent {sent}, received {received}")]
    Stale { sent: Timestamp, received: Timestamp },
    #[error("identity is not registered")]
    UnknownIdentity,
    #[error("identity is already registered")]
    DuplicateIdentity,
    #[error("login verifier C_i mismatch")]
    LoginMismatch,
    #[error("server verifier Cs mismatch")]
    ServerMismatch,
    #[error("smart card refused the supplied factors")]
    LocalRefusal,
    #[error("no registered record matches the login")]
    NoMatchingRecord,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

impl AuthError {
    /// Short stable code used in reports and CLI exit statuses.
    pub fn code(&self) -> &'static str {
        match self {
            AuthError::Stale { .. } => "stale",
            AuthError::UnknownIdentity => "unknown-identity",
            AuthError::DuplicateIdentity => "duplicate-identity",
            AuthError::LoginMismatch => "login-mismatch",
            AuthError::ServerMismatch => "server-mismatch",
            AuthError::LocalRefusal => "local-refusal",
            AuthError::NoMatchingRecord => "no-matching-record",
            AuthError::Malformed(_) => "malformed",
            AuthError::Crypto(_) => "domain",
            AuthError::Fuzzy(_) => "biometric",
        }
    }

    pub fn is_freshness(&self) -> bool {
        matches!(self, AuthError::Stale { .. })
    }
}

/// Agreed session key together with the two timestamps it is bound to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKey {
    pub key: Field128,
    pub binding: [Timestamp; 2],
}

/// Session ephemerals a harness may export to model a leak.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLeak {
    pub r_u: u128,
}

/// A fixed-layout message of 128-bit fields, serialized in declared order.
pub trait WireMessage: Sized {
    const FIELDS: &'static [&'static str];

    fn fields(&self) -> Vec<Field128>;
    fn from_fields(fields: &[Field128]) -> Self;

    fn wire_len() -> usize {
        Self::FIELDS.len() * Field128::BYTES
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.fields().iter().flat_map(|f| f.as_bytes().to_vec()).collect()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        if bytes.len() != Self::wire_len() {
            return Err(AuthError::Malformed(format!(
                "expected {} bytes, got {}",
                Self::wire_len(),
                bytes.len()
            )));
        }
        let fields: Vec<Field128> = bytes
            .chunks_exact(Field128::BYTES)
            .map(|c| Field128::from_slice(c).expect("exact chunk"))
            .collect();
        Ok(Self::from_fields(&fields))
    }

    /// Byte offset of a named field.
    fn offset_of(name: &str) -> Option<usize> {
        Self::FIELDS.iter().position(|f| *f == name).map(|i| i * Field128::BYTES)
    }
}

macro_rules! wire_message {
    ($(#[$meta:meta])* $name:ident { $($field:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
        pub struct $name {
            $(pub $field: $crate::crypto::Field128,)+
        }

        impl $crate::scheme::WireMessage for $name {
            const FIELDS: &'static [&'static str] = &[$($label),+];

            fn fields(&self) -> Vec<$crate::crypto::Field128> {
                vec![$(self.$field),+]
            }

            fn from_fields(fields: &[$crate::crypto::Field128]) -> Self {
                let mut it = fields.iter().copied();
                $name { $($field: it.next().expect("field count"),)+ }
            }
        }
    };
}
pub(crate) use wire_message;

/// The server's public login surface: wire bytes in, wire bytes out.
///
/// The adversary only ever talks to a server through this trait.
pub trait LoginEndpoint {
    fn scheme(&self) -> Scheme;

    fn handle_login(
        &self,
        login: &[u8],
        rng: &mut SeededRng,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<Vec<u8>, AuthError>;
}
