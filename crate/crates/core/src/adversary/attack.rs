//! The stolen-card dictionary attack, session-key forgery, and
//! impersonation. Everything here reads only [`AdversaryKnowledge`] and
//! talks to servers only through [`LoginEndpoint`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::derive::{analyze, EquationTrace, Var};
use super::knowledge::{AdversaryKnowledge, TimestampGrant};
use crate::baseline::{BaselineLoginMessage, BaselineReplyMessage, BaselineSmartCard};
use crate::crypto::{Clock, Field128, Meter, SeededRng, Suite};
use crate::harness::card::SmartCard;
use crate::harness::cost::{CostLedger, Phase, Principal};
use crate::improved::{ImprovedLoginMessage, ImprovedReplyMessage, ImprovedSmartCard};
use crate::scheme::{Identity, LoginEndpoint, Password, Scheme, WireMessage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Recovered,
    InsufficientKnowledge,
    DictionaryExhausted,
}

impl AttackStatus {
    pub fn name(&self) -> &'static str {
        match self {
            AttackStatus::Recovered => "recovered",
            AttackStatus::InsufficientKnowledge => "insufficient_knowledge",
            AttackStatus::DictionaryExhausted => "dictionary_exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub scheme: Scheme,
    pub status: AttackStatus,
    pub recovered_password: Option<Password>,
    pub recovered_identity: Option<Identity>,
    pub forged_session_key: Option<Field128>,
    /// Verifier evaluations, one per dictionary candidate tried.
    pub work: u64,
    pub hash_evaluations: u64,
    pub reason: Option<String>,
    /// False when out-of-model knowledge (a timestamp grant) was used.
    pub in_model: bool,
    pub trace: Vec<EquationTrace>,
}

impl AttackOutcome {
    fn new(scheme: Scheme, status: AttackStatus, in_model: bool, trace: Vec<EquationTrace>) -> Self {
        AttackOutcome {
            scheme,
            status,
            recovered_password: None,
            recovered_identity: None,
            forged_session_key: None,
            work: 0,
            hash_evaluations: 0,
            reason: None,
            in_model,
            trace,
        }
    }

    fn insufficient(mut self, reason: impl Into<String>) -> Self {
        self.status = AttackStatus::InsufficientKnowledge;
        self.reason = Some(reason.into());
        self
    }

    pub fn is_recovered(&self) -> bool {
        self.status == AttackStatus::Recovered
    }
}

/// Symbolic names of what the knowledge set actually holds.
pub fn known_vars(k: &AdversaryKnowledge) -> BTreeSet<Var> {
    use Var::*;
    let mut known: BTreeSet<Var> = [E, L, V, Y, Pi].into_iter().collect();
    if k.scheme() == Scheme::Improved {
        known.extend([M, Nmask]);
    }
    if k.biometric().is_some() {
        known.insert(Bio);
    }
    if k.r_u().is_some() {
        known.insert(Ru);
    }
    if k.r_s().is_some() {
        known.insert(Rs);
    }
    let complete = k.transcripts().iter().any(|t| t.login_bytes().is_some() && t.reply_bytes().is_some());
    if complete {
        match k.scheme() {
            Scheme::Baseline => known.extend([Nid, A1, Ci, T1, Cs, A4, T3]),
            Scheme::Improved => known.extend([Nid, A11, Ci, Q, Cs, A44, P, Q2]),
        }
    }
    if k.grant().is_some() {
        known.extend([T1, T2]);
    }
    known
}

fn baseline_card(k: &AdversaryKnowledge) -> Option<&BaselineSmartCard> {
    match k.card() {
        SmartCard::Baseline(c) => Some(c),
        SmartCard::Improved(_) => None,
    }
}

fn improved_card(k: &AdversaryKnowledge) -> Option<&ImprovedSmartCard> {
    match k.card() {
        SmartCard::Improved(c) => Some(c),
        SmartCard::Baseline(_) => None,
    }
}

/// Biometric key `R = Rep(B, P)`, if the biometric is known and reproduces.
fn biometric_key(k: &AdversaryKnowledge) -> Result<Field128, String> {
    let bio = k.biometric().ok_or("biometric not known")?;
    let helper = k.helper().ok_or("helper data not known")?;
    let fx = crate::fuzzy::FuzzyExtractor::new(helper.offset.len()).map_err(|e| e.to_string())?;
    fx.rep(bio, helper).map(|r| r.0).map_err(|e| format!("biometric does not reproduce: {e}"))
}

fn baseline_messages(k: &AdversaryKnowledge) -> Option<(BaselineLoginMessage, BaselineReplyMessage)> {
    k.transcripts().iter().find_map(|t| t.baseline_messages().ok())
}

fn improved_messages(k: &AdversaryKnowledge) -> Option<(ImprovedLoginMessage, ImprovedReplyMessage)> {
    k.transcripts().iter().find_map(|t| t.improved_messages().ok())
}

fn adversary_meter<'a>(suite: &'a Suite, ledger: &'a mut CostLedger) -> Meter<'a> {
    suite.meter(ledger, Phase::Authentication, Principal::Adversary)
}

/// The five-step attack on the baseline scheme.
pub fn attack_baseline(k: &AdversaryKnowledge) -> AttackOutcome {
    let trace = analyze(Scheme::Baseline, &known_vars(k)).equations;
    let out = AttackOutcome::new(Scheme::Baseline, AttackStatus::InsufficientKnowledge, k.is_in_model(), trace);
    let Some(card) = baseline_card(k) else {
        return out.insufficient("card is not a baseline card");
    };
    let Some(r_u) = k.r_u() else {
        return out.insufficient("r_u not known");
    };
    let Some((login, reply)) = baseline_messages(k) else {
        return out.insufficient("no complete baseline transcript");
    };
    let r = match biometric_key(k) {
        Ok(r) => r,
        Err(e) => return out.insufficient(e),
    };

    let mut ledger = CostLedger::default();
    let mut out = out;
    let mut m = adversary_meter(&card.suite, &mut ledger);
    // Step 1
    let (a1, a2) = match (m.exp_g(r_u), m.exp(card.y, r_u)) {
        (Ok(a1), Ok(a2)) => (a1, a2),
        _ => return out.insufficient("r_u is not a valid exponent"),
    };
    // Step 2
    let id = login.nid ^ a2;
    // Step 3
    let n = card.l ^ r;
    // Step 4
    let mut hit = None;
    for pw in k.dictionary() {
        out.work += 1;
        let h = card.e ^ m.hash(&[pw.word(), n]);
        if m.hash(&[id, h, a1, a2, login.t1]) == login.c_i {
            hit = Some((pw.clone(), h));
            break;
        }
    }
    let Some((pw, h)) = hit else {
        out.status = AttackStatus::DictionaryExhausted;
        out.hash_evaluations = ledger.hash_total();
        return out;
    };
    // Step 5
    let sk = m.exp(reply.a4, r_u).ok().map(|a6| m.hash(&[id, a2, a6, h, login.t1, reply.t3]));
    out.hash_evaluations = ledger.hash_total();
    out.status = AttackStatus::Recovered;
    out.reason = None;
    out.recovered_password = Some(pw);
    out.recovered_identity = Some(Identity::from_word(id));
    out.forged_session_key = sk;
    if sk.is_none() {
        out.status = AttackStatus::InsufficientKnowledge;
        out.reason = Some("server share A4 is not a group element".into());
    }
    out
}

/// Values the improved pipeline derives from a `(T1, T2)` hypothesis
/// before any password is guessed.
struct ImprovedUnmasked {
    t1: Field128,
    t2: Field128,
    t3: Field128,
    a22: Field128,
    id: Field128,
    n: Field128,
}

fn improved_unmask(
    card: &ImprovedSmartCard,
    login: &ImprovedLoginMessage,
    grant: TimestampGrant,
    r: Field128,
    r_u: u128,
    m: &mut Meter<'_>,
) -> Option<ImprovedUnmasked> {
    let t1 = grant.t1.to_field();
    let t2 = grant.t2.to_field();
    let t3 = login.q ^ m.hash(&[t1]);
    let a22 = m.exp(card.y, r_u).ok()? ^ t3;
    let id = login.nid ^ a22 ^ m.hash(&[t1, t3, t2]);
    let n = r ^ card.l ^ t1;
    Some(ImprovedUnmasked { t1, t2, t3, a22, id, n })
}

fn improved_forge(
    u: &ImprovedUnmasked,
    reply: &ImprovedReplyMessage,
    h: Field128,
    r_u: u128,
    m: &mut Meter<'_>,
) -> Option<Field128> {
    let t4 = reply.p ^ m.hash(&[u.t1, u.id, u.t3]);
    let t5 = reply.q2 ^ m.hash(&[u.t2, u.id, u.t3]);
    let a4 = reply.a44 ^ u.t3 ^ t4;
    let a5 = m.exp(a4, r_u).ok()?;
    let a55 = a5 ^ u.t3 ^ t5;
    Some(m.hash(&[u.id, u.a22, a55, h, u.t1, u.t3, t5]))
}

/// The same pipeline against the improved scheme.
///
/// Under in-model knowledge the symbolic trace shows no equation that can
/// test a single password guess, and the result is insufficient knowledge.
/// With a timestamp grant the concrete pipeline runs.
pub fn attack_improved(k: &AdversaryKnowledge) -> AttackOutcome {
    let reach = analyze(Scheme::Improved, &known_vars(k));
    let usable = reach.has_password_test();
    let out = AttackOutcome::new(Scheme::Improved, AttackStatus::InsufficientKnowledge, k.is_in_model(), reach.equations);
    let Some(card) = improved_card(k) else {
        return out.insufficient("card is not an improved card");
    };
    if !usable {
        return out.insufficient(
            "no verifier equation is computable under a single password hypothesis; \
             each still involves an unknown value",
        );
    }
    let Some(grant) = k.grant() else {
        return out.insufficient("no registration timestamps available");
    };
    let Some(r_u) = k.r_u() else {
        return out.insufficient("r_u not known");
    };
    let Some((login, reply)) = improved_messages(k) else {
        return out.insufficient("no complete improved transcript");
    };
    let r = match biometric_key(k) {
        Ok(r) => r,
        Err(e) => return out.insufficient(e),
    };

    let mut ledger = CostLedger::default();
    let mut out = out;
    let mut m = adversary_meter(&card.suite, &mut ledger);
    let Some(u) = improved_unmask(card, &login, grant, r, r_u, &mut m) else {
        return out.insufficient("r_u is not a valid exponent");
    };
    let mut hit = None;
    for pw in k.dictionary() {
        out.work += 1;
        let h = card.e ^ m.hash(&[pw.word(), u.n, u.t1]);
        if m.hash(&[u.id, h, u.a22, login.a11, u.t1, u.t3, u.t2]) == login.c_i {
            hit = Some((pw.clone(), h));
            break;
        }
    }
    let Some((pw, h)) = hit else {
        out.status = AttackStatus::DictionaryExhausted;
        out.hash_evaluations = ledger.hash_total();
        return out;
    };
    let sk = improved_forge(&u, &reply, h, r_u, &mut m);
    out.hash_evaluations = ledger.hash_total();
    out.reason = None;
    out.status = AttackStatus::Recovered;
    out.recovered_password = Some(pw);
    out.recovered_identity = Some(Identity::from_word(u.id));
    out.forged_session_key = sk;
    if sk.is_none() {
        out.status = AttackStatus::InsufficientKnowledge;
        out.reason = Some("derived server share is not a group element".into());
    }
    out
}

/// Runs the attack matching the card's scheme.
pub fn attack(k: &AdversaryKnowledge) -> AttackOutcome {
    match k.scheme() {
        Scheme::Baseline => attack_baseline(k),
        Scheme::Improved => attack_improved(k),
    }
}

/// Forges an improved-scheme session key from guessed `(T1, T2)` and a
/// guessed password, with no verification step. Returns `None` when the
/// knowledge lacks a transcript, `r_u`, or a reproducing biometric, or the
/// guess leads outside the group.
pub fn forge_with_guessed_timestamps(
    k: &AdversaryKnowledge,
    guess: TimestampGrant,
    pw: &Password,
) -> Option<Field128> {
    let card = improved_card(k)?;
    let r_u = k.r_u()?;
    let (login, reply) = improved_messages(k)?;
    let r = biometric_key(k).ok()?;
    let mut ledger = CostLedger::default();
    let mut m = adversary_meter(&card.suite, &mut ledger);
    let u = improved_unmask(card, &login, guess, r, r_u, &mut m)?;
    let h = card.e ^ m.hash(&[pw.word(), u.n, u.t1]);
    improved_forge(&u, &reply, h, r_u, &mut m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpersonationMode {
    /// Build a fresh login from whatever the outcome recovered.
    Forge,
    /// Resend the captured login bytes unchanged.
    Replay,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject(String),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

fn craft_baseline(
    card: &BaselineSmartCard,
    id: Field128,
    pw: Field128,
    n: Field128,
    r_u: u128,
    t1: Field128,
    m: &mut Meter<'_>,
) -> Option<BaselineLoginMessage> {
    let h = card.e ^ m.hash(&[pw, n]);
    let a1 = m.exp_g(r_u).ok()?;
    let a2 = m.exp(card.y, r_u).ok()?;
    let c_i = m.hash(&[id, h, a1, a2, t1]);
    Some(BaselineLoginMessage { nid: id ^ a2, a1, c_i, t1 })
}

#[allow(clippy::too_many_arguments)]
fn craft_improved(
    card: &ImprovedSmartCard,
    id: Field128,
    pw: Field128,
    r: Field128,
    grant: TimestampGrant,
    r_u: u128,
    t3: Field128,
    m: &mut Meter<'_>,
) -> Option<ImprovedLoginMessage> {
    let t1 = grant.t1.to_field();
    let t2 = grant.t2.to_field();
    let n = r ^ card.l ^ t1;
    let h = card.e ^ m.hash(&[pw, n, t1]);
    let a1 = m.exp_g(r_u).ok()?;
    let a11 = a1 ^ t2 ^ t3;
    let a22 = m.exp(card.y, r_u).ok()? ^ t3;
    let nid = id ^ a22 ^ m.hash(&[t1, t3, t2]);
    let c_i = m.hash(&[id, h, a22, a11, t1, t3, t2]);
    Some(ImprovedLoginMessage { nid, a11, c_i, q: t3 ^ m.hash(&[t1]) })
}

/// Sends a login to `server` and reports whether it was accepted.
///
/// In forge mode the message is built fresh at the current clock. When the
/// outcome did not recover the user's secrets, the missing values (identity,
/// password, timestamps) are guessed at random, which is the best the
/// adversary can do.
pub fn impersonate(
    k: &AdversaryKnowledge,
    outcome: &AttackOutcome,
    server: &dyn LoginEndpoint,
    mode: ImpersonationMode,
    rng: &mut SeededRng,
    clock: &Clock,
    ledger: &mut CostLedger,
) -> Verdict {
    if server.scheme() != k.scheme() {
        return Verdict::Reject("scheme-mismatch".into());
    }
    let bytes = match mode {
        ImpersonationMode::Replay => match k.transcripts().iter().rev().find_map(|t| t.login_bytes()) {
            Some(b) => b.to_vec(),
            None => return Verdict::Reject("no-captured-login".into()),
        },
        ImpersonationMode::Forge => match forge_login(k, outcome, rng, clock) {
            Some(b) => b,
            None => return Verdict::Reject("cannot-forge".into()),
        },
    };
    match server.handle_login(&bytes, rng, clock, ledger) {
        Ok(_) => Verdict::Accept,
        Err(e) => Verdict::Reject(e.code().to_string()),
    }
}

fn forge_login(k: &AdversaryKnowledge, outcome: &AttackOutcome, rng: &mut SeededRng, clock: &Clock) -> Option<Vec<u8>> {
    let suite = *k.card().suite();
    let mut scratch = CostLedger::default();
    let mut m = adversary_meter(&suite, &mut scratch);
    let recovered = outcome.is_recovered() && outcome.scheme == k.scheme();
    let id = match (recovered, outcome.recovered_identity) {
        (true, Some(id)) => id.word(),
        _ => rng.random_field(),
    };
    let pw = match (recovered, &outcome.recovered_password) {
        (true, Some(pw)) => pw.word(),
        _ => k.dictionary().first().map(|p| p.word()).unwrap_or_else(|| rng.random_field()),
    };
    let r = biometric_key(k).unwrap_or_else(|_| rng.random_field());
    let r_u = rng.random_exponent(&suite.params);
    let now = clock.now().to_field();
    match k.card() {
        SmartCard::Baseline(card) => {
            let n = card.l ^ r;
            craft_baseline(card, id, pw, n, r_u, now, &mut m).map(|msg| msg.to_bytes())
        }
        SmartCard::Improved(card) => {
            let grant = match (recovered, k.grant()) {
                (true, Some(g)) => g,
                _ => guess_timestamps(k, rng),
            };
            craft_improved(card, id, pw, r, grant, r_u, now, &mut m).map(|msg| msg.to_bytes())
        }
    }
}

/// Uniform guesses for `(T1, T2)`: `T1` within a year before the earliest
/// capture, `T2` a few seconds after it.
pub fn guess_timestamps(k: &AdversaryKnowledge, rng: &mut SeededRng) -> TimestampGrant {
    use crate::crypto::Timestamp;
    const YEAR_MS: usize = 365 * 24 * 3600 * 1000;
    let anchor = k
        .transcripts()
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.captured_at.millis()))
        .min()
        .unwrap_or(0);
    let back = rng.below(YEAR_MS) as u64;
    let t1 = Timestamp(anchor.saturating_sub(back));
    let t2 = t1.plus(rng.below(5000) as u64);
    TimestampGrant { t1, t2 }
}
