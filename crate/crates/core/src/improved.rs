//! The improved scheme. Registration timestamps `T1` (user send time) and
//! `T2` (server receive time) act as extra per-user secrets: the card only
//! holds them masked, and every login and reply is keyed on them.
//!
//! The server keeps `(ID, T1, T2)` per user and finds the record for an
//! incoming login by trial: derive `T3` under each candidate and accept the
//! one whose `C_i` verifies.

use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::crypto::{Clock, Field128, FreshnessWindow, SeededRng, ServerSecret, Suite, Timestamp};
use crate::fuzzy::{BiometricKey, BiometricTemplate, FuzzyExtractor, HelperData};
use crate::harness::cost::{CostLedger, Phase, Principal};
use crate::scheme::{
    wire_message, AuthError, Identity, LoginEndpoint, Password, Scheme, SessionKey, SessionLeak,
    WireMessage,
};

/// Card contents: `{e, h(), p, g, Y}` plus `P_i, L, V, M, N`.
///
/// The stored `N` (`h(PW || R) ⊕ T2`) is called `nmask` to keep it apart
/// from the random number `N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImprovedSmartCard {
    pub suite: Suite,
    pub y: Field128,
    pub e: Field128,
    pub helper: HelperData,
    pub l: Field128,
    pub v: Field128,
    pub m: Field128,
    pub nmask: Field128,
}

impl ImprovedSmartCard {
    pub const ITEMS: [&'static str; 10] = ["h", "e", "p", "g", "Y", "P_i", "L", "V", "M", "Nmask"];

    pub fn storage_layout(&self) -> Vec<(&'static str, usize)> {
        Self::ITEMS
            .iter()
            .map(|&n| (n, if n == "P_i" { self.helper.offset.len() } else { 128 }))
            .collect()
    }

    pub fn extractor(&self) -> Result<FuzzyExtractor, AuthError> {
        Ok(FuzzyExtractor::new(self.helper.offset.len())?)
    }
}

wire_message!(
    /// `<NID, A11, C_i, Q = T3 ⊕ h(T1)>`
    ImprovedLoginMessage { nid => "NID", a11 => "A11", c_i => "C_i", q => "Q" }
);

wire_message!(
    /// `<Cs, A44, P, Q>`; the second `Q` is named `Q2`.
    ImprovedReplyMessage { cs => "Cs", a44 => "A44", p => "P", q2 => "Q2" }
);

/// Per-user server state created at registration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImprovedServerRecord {
    pub id: Identity,
    pub t1: Timestamp,
    pub t2: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub id: Identity,
    pub w: Field128,
    pub t1: Timestamp,
}

/// Issued card data plus `T1 ⊕ T2`, which hands `T2` to the user. It is
/// consumed during R3 and not kept on the card.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IssuedCard {
    pub suite: Suite,
    pub e: Field128,
    pub y: Field128,
    pub t1_xor_t2: Field128,
}

pub struct PendingRegistration {
    id: Identity,
    pw: Password,
    n: Field128,
    t1: Timestamp,
    key: BiometricKey,
    helper: HelperData,
}

/// R1: `W = h(PW || N || T1)`, `Gen(B) = (R, P)`; `T1` is the send time.
pub fn begin_registration(
    suite: &Suite,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    clock: &Clock,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<(RegistrationRequest, PendingRegistration), AuthError> {
    let fx = FuzzyExtractor::new(template.len())?;
    let n = rng.random_field();
    let (key, helper) = fx.gen(template, rng)?;
    let t1 = clock.now();
    let w = suite
        .meter(ledger, Phase::Registration, Principal::User)
        .hash(&[pw.word(), n, t1.to_field()]);
    Ok((
        RegistrationRequest { id, w, t1 },
        PendingRegistration { id, pw: pw.clone(), n, t1, key, helper },
    ))
}

impl PendingRegistration {
    /// R3: recover `T2`, then `L = N ⊕ R ⊕ T1`, `V = h(ID || T1 || PW || T2 || N)`,
    /// `M = h(ID ⊕ T2) ⊕ T1`, `Nmask = h(PW || R) ⊕ T2`.
    pub fn complete(self, issued: IssuedCard, ledger: &mut CostLedger) -> ImprovedSmartCard {
        let mut m = issued.suite.meter(ledger, Phase::Registration, Principal::User);
        let t1 = self.t1.to_field();
        let t2 = issued.t1_xor_t2 ^ t1;
        let id = self.id.word();
        let pw = self.pw.word();
        let l = self.n ^ self.key.0 ^ t1;
        let v = m.hash(&[id, t1, pw, t2, self.n]);
        let mm = m.hash(&[id ^ t2]) ^ t1;
        let nmask = m.hash(&[pw, self.key.0]) ^ t2;
        let card = ImprovedSmartCard {
            suite: issued.suite,
            y: issued.y,
            e: issued.e,
            helper: self.helper,
            l,
            v,
            m: mm,
            nmask,
        };
        ledger.record_storage("improved card", &card.storage_layout());
        card
    }
}

#[derive(Debug)]
pub struct ImprovedServer {
    suite: Suite,
    secret: ServerSecret,
    window: FreshnessWindow,
    records: RwLock<Vec<ImprovedServerRecord>>,
}

impl ImprovedServer {
    pub fn new(suite: Suite, secret: ServerSecret, window: FreshnessWindow) -> Self {
        ImprovedServer { suite, secret, window, records: RwLock::new(Vec::new()) }
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    pub fn public_key(&self) -> Field128 {
        self.secret.public()
    }

    pub fn window(&self) -> FreshnessWindow {
        self.window
    }

    pub fn secret(&self) -> &ServerSecret {
        &self.secret
    }

    pub fn records(&self) -> Vec<ImprovedServerRecord> {
        self.records.read().expect("records lock").clone()
    }

    pub fn record_for(&self, id: Identity) -> Option<ImprovedServerRecord> {
        self.records.read().expect("records lock").iter().find(|r| r.id == id).copied()
    }

    pub fn restore(&self, record: ImprovedServerRecord) {
        self.records.write().expect("records lock").push(record);
    }

    /// R2 at receive time `T2`: `G = h(ID || X)`, `H = G ⊕ T2`, `e = H ⊕ W`.
    pub fn issue(
        &self,
        req: RegistrationRequest,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<IssuedCard, AuthError> {
        let mut records = self.records.write().expect("records lock");
        if records.iter().any(|r| r.id == req.id) {
            return Err(AuthError::DuplicateIdentity);
        }
        let t2 = clock.now();
        let g = self
            .suite
            .meter(ledger, Phase::Registration, Principal::Server)
            .hash(&[req.id.word(), self.secret.as_field()]);
        let e = g ^ t2.to_field() ^ req.w;
        records.push(ImprovedServerRecord { id: req.id, t1: req.t1, t2 });
        Ok(IssuedCard {
            suite: self.suite,
            e,
            y: self.secret.public(),
            t1_xor_t2: req.t1.to_field() ^ t2.to_field(),
        })
    }

    /// A1-A2, trying each stored record in registration order.
    ///
    /// `T3` is derived from `Q` before the freshness check, and the check
    /// precedes all exponentiation.
    pub fn respond(
        &self,
        msg: &ImprovedLoginMessage,
        r_s: u128,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<(ImprovedReplyMessage, SessionKey), AuthError> {
        let t4 = clock.now();
        let x = self.secret.as_field();
        let records = self.records.read().expect("records lock");
        let mut m = self.suite.meter(ledger, Phase::Authentication, Principal::Server);

        let mut stale = None;
        let mut verified_any = false;
        for rec in records.iter() {
            let t1 = rec.t1.to_field();
            let t2 = rec.t2.to_field();
            let t3f = msg.q ^ m.hash(&[t1]);
            // Under the wrong record T3 is a random word, almost never a
            // 64-bit timestamp.
            let Ok(t3) = Timestamp::from_field(t3f) else { continue };
            if !self.window.admits(t3, t4) {
                stale.get_or_insert(AuthError::Stale { sent: t3, received: t4 });
                continue;
            }
            verified_any = true;
            let a1 = msg.a11 ^ t2 ^ t3f;
            let Ok(a2) = m.exp(a1, self.secret.exponent()) else { continue };
            let a22 = a2 ^ t3f;
            let id = msg.nid ^ a22 ^ m.hash(&[t1, t3f, t2]);
            let h = m.hash(&[id, x]) ^ t2;
            if m.hash(&[id, h, a22, msg.a11, t1, t3f, t2]) != msg.c_i {
                continue;
            }

            let t4f = t4.to_field();
            let a4 = m.exp_g(r_s)?;
            let a44 = a4 ^ t3f ^ t4f;
            let a5 = m.exp(a1, r_s)?;
            let t5 = clock.now();
            let t5f = t5.to_field();
            let a55 = a5 ^ t3f ^ t5f;
            let sk = m.hash(&[id, a22, a55, h, t1, t3f, t5f]);
            let cs = m.hash(&[id, sk, h, t2, t4f]);
            let p = m.hash(&[t1, id, t3f]) ^ t4f;
            let q2 = m.hash(&[t2, id, t3f]) ^ t5f;
            return Ok((
                ImprovedReplyMessage { cs, a44, p, q2 },
                SessionKey { key: sk, binding: [t3, t5] },
            ));
        }
        Err(if verified_any {
            AuthError::LoginMismatch
        } else {
            stale.unwrap_or(AuthError::NoMatchingRecord)
        })
    }
}

impl LoginEndpoint for ImprovedServer {
    fn scheme(&self) -> Scheme {
        Scheme::Improved
    }

    fn handle_login(
        &self,
        login: &[u8],
        rng: &mut SeededRng,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<Vec<u8>, AuthError> {
        let msg = ImprovedLoginMessage::from_bytes(login)?;
        let r_s = rng.random_exponent(&self.suite.params);
        self.respond(&msg, r_s, clock, ledger).map(|(reply, _)| reply.to_bytes())
    }
}

/// R1-R3 with the user's clock giving `T1` and the server's giving `T2`.
#[allow(clippy::too_many_arguments)]
pub fn register(
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    server: &ImprovedServer,
    user_clock: &Clock,
    server_clock: &Clock,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<ImprovedSmartCard, AuthError> {
    let (req, pending) =
        begin_registration(server.suite(), id, pw, template, user_clock, rng, ledger)?;
    let issued = server.issue(req, server_clock, ledger)?;
    Ok(pending.complete(issued, ledger))
}

/// Values the card keeps between login and the server's reply.
#[derive(Debug)]
pub struct ImprovedSession {
    suite: Suite,
    id: Identity,
    h: Field128,
    a22: Field128,
    r_u: u128,
    t1: Field128,
    t2: Field128,
    t3: Field128,
}

impl ImprovedSession {
    pub fn leak(&self) -> SessionLeak {
        SessionLeak { r_u: self.r_u }
    }
}

/// Unmasks `T2`, then `T1`, then `N` (each step needs the previous one) and
/// checks `V`. Returns `(T1, T2, N)`.
fn unmask(
    card: &ImprovedSmartCard,
    id: Identity,
    pw: &Password,
    r: BiometricKey,
    m: &mut crate::crypto::Meter<'_>,
) -> Result<(Field128, Field128, Field128), AuthError> {
    let t2 = card.nmask ^ m.hash(&[pw.word(), r.0]);
    let t1 = card.m ^ m.hash(&[id.word() ^ t2]);
    let n = r.0 ^ card.l ^ t1;
    if m.hash(&[id.word(), t1, pw.word(), t2, n]) != card.v {
        return Err(AuthError::LocalRefusal);
    }
    Ok((t1, t2, n))
}

/// L1-L2.
pub fn login(
    card: &ImprovedSmartCard,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    r_u: u128,
    clock: &Clock,
    ledger: &mut CostLedger,
) -> Result<(ImprovedLoginMessage, ImprovedSession), AuthError> {
    let r = card.extractor()?.rep(template, &card.helper)?;
    let mut m = card.suite.meter(ledger, Phase::Login, Principal::User);
    let (t1, t2, n) = unmask(card, id, pw, r, &mut m)?;
    let h = card.e ^ m.hash(&[pw.word(), n, t1]);
    let t3 = clock.now().to_field();
    let a1 = m.exp_g(r_u)?;
    let a11 = a1 ^ t2 ^ t3;
    let a2 = m.exp(card.y, r_u)?;
    let a22 = a2 ^ t3;
    let nid = id.word() ^ a22 ^ m.hash(&[t1, t3, t2]);
    let c_i = m.hash(&[id.word(), h, a22, a11, t1, t3, t2]);
    let q = t3 ^ m.hash(&[t1]);
    Ok((
        ImprovedLoginMessage { nid, a11, c_i, q },
        ImprovedSession { suite: card.suite, id, h, a22, r_u, t1, t2, t3 },
    ))
}

/// Runs only the local factor check, returning the unmasked `(T1, T2)`.
pub fn check_factors(
    card: &ImprovedSmartCard,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    ledger: &mut CostLedger,
) -> Result<(Timestamp, Timestamp), AuthError> {
    let r = card.extractor()?.rep(template, &card.helper)?;
    let mut m = card.suite.meter(ledger, Phase::Login, Principal::User);
    let (t1, t2, _) = unmask(card, id, pw, r, &mut m)?;
    Ok((Timestamp::from_field(t1)?, Timestamp::from_field(t2)?))
}

/// A3. No timestamp check happens on this side.
pub fn finish(
    reply: &ImprovedReplyMessage,
    session: ImprovedSession,
    ledger: &mut CostLedger,
) -> Result<SessionKey, AuthError> {
    let mut m = session.suite.meter(ledger, Phase::Authentication, Principal::User);
    let id = session.id.word();
    let (t1, t2, t3) = (session.t1, session.t2, session.t3);
    let t4 = reply.p ^ m.hash(&[t1, id, t3]);
    let t5 = reply.q2 ^ m.hash(&[t2, id, t3]);
    let a4 = reply.a44 ^ t3 ^ t4;
    let a5 = m.exp(a4, session.r_u).map_err(|_| AuthError::ServerMismatch)?;
    let a55 = a5 ^ t3 ^ t5;
    let sk = m.hash(&[id, session.a22, a55, session.h, t1, t3, t5]);
    if m.hash(&[id, sk, session.h, t2, t4]) != reply.cs {
        return Err(AuthError::ServerMismatch);
    }
    Ok(SessionKey { key: sk, binding: [Timestamp::from_field(t3)?, Timestamp::from_field(t5)?] })
}
