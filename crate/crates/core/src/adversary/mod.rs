//! The insider adversary: a stolen card, intercepted traffic, the victim's
//! biometric, and leaked session exponents.

pub mod attack;
pub mod derive;
pub mod knowledge;

pub use attack::{
    attack, attack_baseline, attack_improved, forge_with_guessed_timestamps, guess_timestamps,
    impersonate, AttackOutcome, AttackStatus, ImpersonationMode, Verdict,
};
pub use derive::{EquationTrace, Reachability, Var};
pub use knowledge::{AdversaryKnowledge, KnowledgeError, TimestampGrant, FORBIDDEN};
