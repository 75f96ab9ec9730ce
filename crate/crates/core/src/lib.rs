//! Three-factor remote user authentication: a baseline scheme, an improved
//! scheme, an insider adversary, and a deterministic simulation harness.

pub mod adversary;
pub mod baseline;
pub mod crypto;
pub mod fuzzy;
pub mod harness;
pub mod improved;
pub mod scheme;
pub mod transcript;
