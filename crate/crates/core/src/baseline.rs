//! The baseline three-factor scheme: registration, login, and mutual
//! authentication with Diffie-Hellman session-key agreement.
//!
//! The server keeps only `X` and the set of registered identities; it
//! recomputes `H = h(ID || X)` for every login.

use std::collections::BTreeSet;
use std::sync::RwLock;

use crate::crypto::{Clock, Field128, FreshnessWindow, SeededRng, ServerSecret, Suite, Timestamp};
use crate::fuzzy::{BiometricKey, BiometricTemplate, FuzzyExtractor, HelperData};
use crate::harness::cost::{CostLedger, Phase, Principal};
use crate::scheme::{
    wire_message, AuthError, Identity, LoginEndpoint, Password, Scheme, SessionKey, SessionLeak,
    WireMessage,
};

/// Card contents: `{e, h(), p, g, Y}` from the server plus `P_i, L, V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineSmartCard {
    pub suite: Suite,
    pub y: Field128,
    pub e: Field128,
    pub helper: HelperData,
    pub l: Field128,
    pub v: Field128,
}

impl BaselineSmartCard {
    pub const ITEMS: [&'static str; 8] = ["h", "e", "p", "g", "Y", "P_i", "L", "V"];

    /// `(item, serialized bits)` per stored item.
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
    /// `<NID, A1, C_i, T1>`
    BaselineLoginMessage { nid => "NID", a1 => "A1", c_i => "C_i", t1 => "T1" }
);

wire_message!(
    /// `<Cs, A4, T3>`
    BaselineReplyMessage { cs => "Cs", a4 => "A4", t3 => "T3" }
);

/// Sent over the secure registration channel: `ID, W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub id: Identity,
    pub w: Field128,
}

/// What the server writes onto a blank card.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IssuedCard {
    pub suite: Suite,
    pub e: Field128,
    pub y: Field128,
}

/// User-side state between R1 and R3.
pub struct PendingRegistration {
    id: Identity,
    pw: Password,
    n: Field128,
    key: BiometricKey,
    helper: HelperData,
}

/// R1: draw `N`, compute `W = h(PW || N)` and `Gen(B) = (R, P)`.
pub fn begin_registration(
    suite: &Suite,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<(RegistrationRequest, PendingRegistration), AuthError> {
    let fx = FuzzyExtractor::new(template.len())?;
    let n = rng.random_field();
    let (key, helper) = fx.gen(template, rng)?;
    let w = suite.meter(ledger, Phase::Registration, Principal::User).hash(&[pw.word(), n]);
    Ok((RegistrationRequest { id, w }, PendingRegistration { id, pw: pw.clone(), n, key, helper }))
}

impl PendingRegistration {
    /// R3: `L = N ⊕ R`, `V = h(ID || PW || N)`.
    pub fn complete(self, issued: IssuedCard, ledger: &mut CostLedger) -> BaselineSmartCard {
        let mut m = issued.suite.meter(ledger, Phase::Registration, Principal::User);
        let l = self.n ^ self.key.0;
        let v = m.hash(&[self.id.word(), self.pw.word(), self.n]);
        let card = BaselineSmartCard {
            suite: issued.suite,
            y: issued.y,
            e: issued.e,
            helper: self.helper,
            l,
            v,
        };
        ledger.record_storage("baseline card", &card.storage_layout());
        card
    }
}

/// Server: long-term secret and identity registry.
#[derive(Debug)]
pub struct BaselineServer {
    suite: Suite,
    secret: ServerSecret,
    window: FreshnessWindow,
    registry: RwLock<BTreeSet<Identity>>,
}

impl BaselineServer {
    pub fn new(suite: Suite, secret: ServerSecret, window: FreshnessWindow) -> Self {
        BaselineServer { suite, secret, window, registry: RwLock::new(BTreeSet::new()) }
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

    pub fn is_registered(&self, id: Identity) -> bool {
        self.registry.read().expect("registry lock").contains(&id)
    }

    pub fn registered(&self) -> Vec<Identity> {
        self.registry.read().expect("registry lock").iter().copied().collect()
    }

    /// Restores a registry entry from persisted state.
    pub fn restore(&self, id: Identity) {
        self.registry.write().expect("registry lock").insert(id);
    }

    /// R2: `H = h(ID || X)`, `e = H ⊕ W`.
    pub fn issue(&self, req: RegistrationRequest, ledger: &mut CostLedger) -> Result<IssuedCard, AuthError> {
        let mut registry = self.registry.write().expect("registry lock");
        if registry.contains(&req.id) {
            return Err(AuthError::DuplicateIdentity);
        }
        let h = self
            .suite
            .meter(ledger, Phase::Registration, Principal::Server)
            .hash(&[req.id.word(), self.secret.as_field()]);
        registry.insert(req.id);
        Ok(IssuedCard { suite: self.suite, e: h ^ req.w, y: self.secret.public() })
    }

    /// A1-A2. The freshness check runs before any exponentiation.
    pub fn respond(
        &self,
        msg: &BaselineLoginMessage,
        r_s: u128,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<(BaselineReplyMessage, SessionKey), AuthError> {
        let t2 = clock.now();
        let t1 = Timestamp::from_field(msg.t1)?;
        if !self.window.admits(t1, t2) {
            return Err(AuthError::Stale { sent: t1, received: t2 });
        }
        let mut m = self.suite.meter(ledger, Phase::Authentication, Principal::Server);
        let a3 = m.exp(msg.a1, self.secret.exponent())?;
        let id = Identity::from_word(msg.nid ^ a3);
        if !self.is_registered(id) {
            return Err(AuthError::UnknownIdentity);
        }
        let h = m.hash(&[id.word(), self.secret.as_field()]);
        if m.hash(&[id.word(), h, msg.a1, a3, msg.t1]) != msg.c_i {
            return Err(AuthError::LoginMismatch);
        }
        let a4 = m.exp_g(r_s)?;
        let a5 = m.exp(msg.a1, r_s)?;
        let t3 = clock.now();
        let sk = m.hash(&[id.word(), a3, a5, h, msg.t1, t3.to_field()]);
        let cs = m.hash(&[id.word(), sk, h, t3.to_field()]);
        Ok((
            BaselineReplyMessage { cs, a4, t3: t3.to_field() },
            SessionKey { key: sk, binding: [t1, t3] },
        ))
    }
}

impl LoginEndpoint for BaselineServer {
    fn scheme(&self) -> Scheme {
        Scheme::Baseline
    }

    fn handle_login(
        &self,
        login: &[u8],
        rng: &mut SeededRng,
        clock: &Clock,
        ledger: &mut CostLedger,
    ) -> Result<Vec<u8>, AuthError> {
        let msg = BaselineLoginMessage::from_bytes(login)?;
        let r_s = rng.random_exponent(&self.suite.params);
        self.respond(&msg, r_s, clock, ledger).map(|(reply, _)| reply.to_bytes())
    }
}

/// R1-R3 end to end over the secure registration channel.
pub fn register(
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    server: &BaselineServer,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<BaselineSmartCard, AuthError> {
    let (req, pending) = begin_registration(server.suite(), id, pw, template, rng, ledger)?;
    let issued = server.issue(req, ledger)?;
    Ok(pending.complete(issued, ledger))
}

/// Retained user-side secrets of one login.
#[derive(Debug)]
pub struct BaselineSession {
    suite: Suite,
    id: Identity,
    h: Field128,
    a2: Field128,
    r_u: u128,
    t1: Timestamp,
}

impl BaselineSession {
    /// Exports the ephemeral exponent, modelling a session-state leak.
    pub fn leak(&self) -> SessionLeak {
        SessionLeak { r_u: self.r_u }
    }
}

/// L1-L2. Refuses locally, before emitting anything, when `V` does not match.
pub fn login(
    card: &BaselineSmartCard,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    r_u: u128,
    clock: &Clock,
    ledger: &mut CostLedger,
) -> Result<(BaselineLoginMessage, BaselineSession), AuthError> {
    let r = card.extractor()?.rep(template, &card.helper)?;
    let mut m = card.suite.meter(ledger, Phase::Login, Principal::User);
    let n = card.l ^ r.0;
    if m.hash(&[id.word(), pw.word(), n]) != card.v {
        return Err(AuthError::LocalRefusal);
    }
    let h = card.e ^ m.hash(&[pw.word(), n]);
    let a1 = m.exp_g(r_u)?;
    let a2 = m.exp(card.y, r_u)?;
    let nid = id.word() ^ a2;
    let t1 = clock.now();
    let c_i = m.hash(&[id.word(), h, a1, a2, t1.to_field()]);
    Ok((
        BaselineLoginMessage { nid, a1, c_i, t1: t1.to_field() },
        BaselineSession { suite: card.suite, id, h, a2, r_u, t1 },
    ))
}

/// A3. Consumes the session; its secrets do not outlive this call.
pub fn finish(
    reply: &BaselineReplyMessage,
    session: BaselineSession,
    clock: &Clock,
    window: FreshnessWindow,
    ledger: &mut CostLedger,
) -> Result<SessionKey, AuthError> {
    let t4 = clock.now();
    let t3 = Timestamp::from_field(reply.t3)?;
    if !window.admits(t3, t4) {
        return Err(AuthError::Stale { sent: t3, received: t4 });
    }
    let mut m = session.suite.meter(ledger, Phase::Authentication, Principal::User);
    let a6 = m.exp(reply.a4, session.r_u)?;
    let id = session.id.word();
    let sk = m.hash(&[id, session.a2, a6, session.h, session.t1.to_field(), reply.t3]);
    if m.hash(&[id, sk, session.h, reply.t3]) != reply.cs {
        return Err(AuthError::ServerMismatch);
    }
    Ok(SessionKey { key: sk, binding: [session.t1, t3] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::HashAlg;
    use crate::fuzzy::{flip_positions, perturb};

    struct Fixture {
        server: BaselineServer,
        rng: SeededRng,
        id: Identity,
        pw: Password,
        bio: BiometricTemplate,
        card: BaselineSmartCard,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = SeededRng::new(seed);
        let suite = Suite::default();
        let x = rng.random_exponent(&suite.params);
        let server =
            BaselineServer::new(suite, ServerSecret::from_exponent(x, &suite.params).unwrap(), FreshnessWindow::default());
        let id = Identity::new("alice").unwrap();
        let pw = Password::new("correct horse").unwrap();
        let bio = BiometricTemplate::random(512, &mut rng, "alice");
        let card = register(id, &pw, &bio, &server, &mut rng, &mut CostLedger::default()).unwrap();
        Fixture { server, rng, id, pw, bio, card }
    }

    fn run(f: &mut Fixture, clock: &Clock) -> (SessionKey, SessionKey) {
        let mut l = CostLedger::default();
        let r_u = f.rng.random_exponent(&f.card.suite.params);
        let (msg, session) = login(&f.card, f.id, &f.pw, &f.bio, r_u, clock, &mut l).unwrap();
        let r_s = f.rng.random_exponent(&f.card.suite.params);
        let (reply, server_key) = f.server.respond(&msg, r_s, clock, &mut l).unwrap();
        let user_key = finish(&reply, session, clock, f.server.window(), &mut l).unwrap();
        (user_key, server_key)
    }

    #[test]
    fn honest_run_agrees() {
        let mut f = fixture(1);
        let (u, s) = run(&mut f, &Clock::simulated(1_000_000));
        assert_eq!(u, s);
    }

    #[test]
    fn card_defining_equations_hold() {
        let f = fixture(2);
        let suite = f.card.suite;
        let x = f.server.secret().as_field();
        let h = HashAlg::Sha256.digest(&[f.id.word(), x]);
        let r = f.card.extractor().unwrap().rep(&f.bio, &f.card.helper).unwrap();
        let n = f.card.l ^ r.0;
        assert_eq!(f.card.e ^ suite.hash.digest(&[f.pw.word(), n]), h);
        assert_eq!(f.card.v, suite.hash.digest(&[f.id.word(), f.pw.word(), n]));
        assert_eq!(f.card.storage_layout().len(), 8);
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut f = fixture(3);
        let err = register(f.id, &f.pw, &f.bio, &f.server, &mut f.rng, &mut CostLedger::default());
        assert_eq!(err.unwrap_err(), AuthError::DuplicateIdentity);
    }

    #[test]
    fn re_registration_draws_fresh_n() {
        let a = fixture(4);
        let suite = *a.server.suite();
        let server2 = BaselineServer::new(suite, a.server.secret().clone(), FreshnessWindow::default());
        let mut rng = SeededRng::new(99);
        let card2 = register(a.id, &a.pw, &a.bio, &server2, &mut rng, &mut CostLedger::default()).unwrap();
        assert_ne!(a.card.e, card2.e);
        assert_ne!(a.card.l, card2.l);
        assert_ne!(a.card.v, card2.v);
    }

    #[test]
    fn wrong_password_refused_locally() {
        let f = fixture(5);
        let mut l = CostLedger::default();
        let wrong = Password::new("wrong").unwrap();
        let err = login(&f.card, f.id, &wrong, &f.bio, 5, &Clock::simulated(0), &mut l).unwrap_err();
        assert_eq!(err, AuthError::LocalRefusal);
        assert_eq!(l.modexp_total(), 0);
    }

    #[test]
    fn noisy_biometric_accepted_far_one_refused() {
        let mut f = fixture(6);
        let positions: Vec<usize> = (0..128).map(|b| b * 4 + f.rng.below(4)).collect();
        let noisy = flip_positions(&f.bio, &positions);
        let mut l = CostLedger::default();
        assert!(login(&f.card, f.id, &f.pw, &noisy, 9, &Clock::simulated(0), &mut l).is_ok());
        let far = perturb(&f.bio, 200, &mut f.rng).unwrap();
        assert_eq!(
            login(&f.card, f.id, &f.pw, &far, 9, &Clock::simulated(0), &mut l).unwrap_err(),
            AuthError::LocalRefusal
        );
    }

    #[test]
    fn stale_login_rejected_before_exponentiation() {
        let mut f = fixture(7);
        let mut l = CostLedger::default();
        let (msg, _) = login(&f.card, f.id, &f.pw, &f.bio, 77, &Clock::simulated(10_000), &mut l).unwrap();
        let mut server_ledger = CostLedger::default();
        let err = f.server.respond(&msg, 5, &Clock::simulated(12_001), &mut server_ledger).unwrap_err();
        assert!(err.is_freshness());
        assert_eq!(server_ledger.modexp_total(), 0);
        assert_eq!(server_ledger.hash_total(), 0);
        let _ = &mut f.rng;
    }

    #[test]
    fn flipped_c_i_bits_rejected() {
        let mut f = fixture(8);
        let clock = Clock::simulated(50_000);
        let (msg, _) = login(&f.card, f.id, &f.pw, &f.bio, 1234, &clock, &mut CostLedger::default()).unwrap();
        for _ in 0..100 {
            let bit = f.rng.below(128);
            let tampered = BaselineLoginMessage { c_i: msg.c_i.with_bit_flipped(bit), ..msg };
            let err = f.server.respond(&tampered, 5, &clock, &mut CostLedger::default()).unwrap_err();
            assert_eq!(err, AuthError::LoginMismatch);
        }
    }

    #[test]
    fn unregistered_identity_rejected() {
        let f = fixture(9);
        let clock = Clock::simulated(0);
        let (msg, _) = login(&f.card, f.id, &f.pw, &f.bio, 1234, &clock, &mut CostLedger::default()).unwrap();
        let other = BaselineServer::new(*f.server.suite(), f.server.secret().clone(), FreshnessWindow::default());
        assert_eq!(other.respond(&msg, 5, &clock, &mut CostLedger::default()).unwrap_err(), AuthError::UnknownIdentity);
    }

    #[test]
    fn tampered_a4_and_replayed_reply_fail() {
        let mut f = fixture(10);
        let clock = Clock::simulated(100_000);
        let mut l = CostLedger::default();
        let (m1, s1) = login(&f.card, f.id, &f.pw, &f.bio, 1111, &clock, &mut l).unwrap();
        let (r1, _) = f.server.respond(&m1, 2222, &clock, &mut l).unwrap();
        let bad = BaselineReplyMessage { a4: r1.a4.with_bit_flipped(127), ..r1 };
        assert_eq!(finish(&bad, s1, &clock, f.server.window(), &mut l).unwrap_err(), AuthError::ServerMismatch);

        // A reply recorded for one session does not complete the next.
        let later = Clock::simulated(100_500);
        let r_u = f.rng.random_exponent(&f.card.suite.params);
        let (_m2, s2) = login(&f.card, f.id, &f.pw, &f.bio, r_u, &later, &mut l).unwrap();
        assert_eq!(finish(&r1, s2, &later, f.server.window(), &mut l).unwrap_err(), AuthError::ServerMismatch);
    }

    #[test]
    fn wire_sizes() {
        assert_eq!(BaselineLoginMessage::wire_len(), 64);
        assert_eq!(BaselineReplyMessage::wire_len(), 48);
    }
}
