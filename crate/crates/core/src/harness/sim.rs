//! In-process simulation: one server, enrolled users, and sessions run
//! over [`SimChannel`]s against a shared simulated clock.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::adversary::AdversaryKnowledge;
use crate::baseline::{self, BaselineLoginMessage, BaselineReplyMessage, BaselineServer, BaselineSession};
use crate::crypto::{Clock, Field128, FreshnessWindow, SeededRng, ServerSecret, Suite};
use crate::fuzzy::{BiometricTemplate, FuzzyExtractor};
use crate::harness::card::SmartCard;
use crate::harness::channel::SimChannel;
use crate::harness::cost::CostLedger;
use crate::harness::files::{Config, ServerState, ServerUser};
use crate::improved::{self, ImprovedLoginMessage, ImprovedReplyMessage, ImprovedServer, ImprovedSession};
use crate::scheme::{AuthError, Identity, LoginEndpoint, Password, Scheme, SessionKey, WireMessage};
use crate::transcript::{Direction, Transcript, TranscriptError};

/// Default start of simulated time: 2023-11-14T22:13:20Z.
pub const EPOCH_MS: u64 = 1_700_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("no enrolled user '{0}'")]
    UnknownUser(String),
    #[error("user '{0}' is already enrolled")]
    DuplicateUser(String),
    #[error("no session #{0}")]
    UnknownSession(usize),
    #[error("session #{0} has no {1} message in flight")]
    NothingInFlight(usize, &'static str),
    #[error("session #{0} is not waiting for a reply")]
    NotPending(usize),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Auth(e) => e.code(),
            SimError::Transcript(_) => "transcript",
            SimError::Setup(_) => "setup",
            SimError::UnknownUser(_) => "unknown-user",
            SimError::DuplicateUser(_) => "duplicate-user",
            SimError::UnknownSession(_) => "unknown-session",
            SimError::NothingInFlight(..) => "nothing-in-flight",
            SimError::NotPending(_) => "not-pending",
        }
    }
}

#[derive(Debug)]
pub enum AnyServer {
    Baseline(BaselineServer),
    Improved(ImprovedServer),
}

impl AnyServer {
    pub fn new(scheme: Scheme, suite: Suite, secret: ServerSecret, window: FreshnessWindow) -> Self {
        match scheme {
            Scheme::Baseline => AnyServer::Baseline(BaselineServer::new(suite, secret, window)),
            Scheme::Improved => AnyServer::Improved(ImprovedServer::new(suite, secret, window)),
        }
    }

    pub fn from_state(state: &ServerState, suite: Suite, window: FreshnessWindow) -> Result<Self, SimError> {
        let secret =
            ServerSecret::from_exponent(state.x, &suite.params).map_err(|e| SimError::Setup(e.to_string()))?;
        let server = AnyServer::new(state.scheme, suite, secret, window);
        for u in &state.users {
            match (&server, u) {
                (AnyServer::Baseline(s), ServerUser::Baseline(id)) => s.restore(*id),
                (AnyServer::Improved(s), ServerUser::Improved(r)) => s.restore(*r),
                _ => return Err(SimError::Setup("server record does not match scheme".into())),
            }
        }
        Ok(server)
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            AnyServer::Baseline(_) => Scheme::Baseline,
            AnyServer::Improved(_) => Scheme::Improved,
        }
    }

    pub fn endpoint(&self) -> &dyn LoginEndpoint {
        match self {
            AnyServer::Baseline(s) => s,
            AnyServer::Improved(s) => s,
        }
    }

    pub fn state(&self) -> ServerState {
        match self {
            AnyServer::Baseline(s) => ServerState {
                scheme: Scheme::Baseline,
                x: s.secret().exponent(),
                users: s.registered().into_iter().map(ServerUser::Baseline).collect(),
            },
            AnyServer::Improved(s) => ServerState {
                scheme: Scheme::Improved,
                x: s.secret().exponent(),
                users: s.records().into_iter().map(ServerUser::Improved).collect(),
            },
        }
    }
}

#[derive(Debug)]
enum AnySession {
    Baseline(BaselineSession),
    Improved(ImprovedSession),
}

#[derive(Clone, Debug)]
pub struct EnrolledUser {
    pub label: String,
    pub id: Identity,
    pub password: Password,
    pub template: BiometricTemplate,
    pub card: SmartCard,
}

/// How the user presents factors at login.
#[derive(Clone, Debug, Default)]
pub struct LoginOptions {
    /// Bit flips applied to the enrolled template, in distinct blocks.
    pub rescan_flips: usize,
    /// Present an unrelated template instead of the enrolled one.
    pub stranger: bool,
    /// Type this password instead of the enrolled one.
    pub password: Option<Password>,
}

#[derive(Debug)]
pub struct SessionState {
    pub index: usize,
    pub user: String,
    pub channel: SimChannel,
    pub presented: BiometricTemplate,
    pub r_u: u128,
    pub r_s: Option<u128>,
    pub server_key: Option<SessionKey>,
    pub user_key: Option<SessionKey>,
    pub failure: Option<AuthError>,
    pending: Option<AnySession>,
}

impl SessionState {
    pub fn transcript(&self) -> &Transcript {
        self.channel.transcript()
    }

    pub fn keys_agree(&self) -> bool {
        matches!((self.server_key, self.user_key), (Some(a), Some(b)) if a.key == b.key)
    }
}

pub struct Simulation {
    scheme: Scheme,
    seed: u64,
    suite: Suite,
    window: FreshnessWindow,
    extractor: FuzzyExtractor,
    rng: SeededRng,
    clock: Clock,
    skew_ms: i64,
    latency_ms: u64,
    server: AnyServer,
    users: BTreeMap<String, EnrolledUser>,
    sessions: Vec<SessionState>,
    ledger: CostLedger,
}

impl Simulation {
    pub fn new(scheme: Scheme, config: &Config) -> Result<Self, SimError> {
        let suite = config.suite().map_err(SimError::Setup)?;
        let extractor = config.extractor().map_err(SimError::Setup)?;
        let window = config.window();
        let mut rng = SeededRng::new(config.seed);
        let x = rng.random_exponent(&suite.params);
        let secret = ServerSecret::from_exponent(x, &suite.params).map_err(|e| SimError::Setup(e.to_string()))?;
        Ok(Simulation {
            scheme,
            seed: config.seed,
            suite,
            window,
            extractor,
            rng,
            clock: Clock::simulated(EPOCH_MS),
            skew_ms: 0,
            latency_ms: 0,
            server: AnyServer::new(scheme, suite, secret, window),
            users: BTreeMap::new(),
            sessions: Vec::new(),
            ledger: CostLedger::default(),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    pub fn window(&self) -> FreshnessWindow {
        self.window
    }

    /// Offset of the user's clock from the server's.
    pub fn set_skew(&mut self, ms: i64) {
        self.skew_ms = ms;
    }

    /// One-way latency of channels opened from now on.
    pub fn set_latency(&mut self, ms: u64) {
        self.latency_ms = ms;
    }

    pub fn advance(&mut self, ms: u64) {
        self.clock.advance(ms);
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    fn user_clock(&self) -> Clock {
        self.clock.skewed(self.skew_ms)
    }

    pub fn rng(&mut self) -> &mut SeededRng {
        &mut self.rng
    }

    pub fn server(&self) -> &AnyServer {
        &self.server
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut CostLedger {
        &mut self.ledger
    }

    pub fn user(&self, label: &str) -> Result<&EnrolledUser, SimError> {
        self.users.get(label).ok_or_else(|| SimError::UnknownUser(label.to_string()))
    }

    pub fn users(&self) -> impl Iterator<Item = &EnrolledUser> {
        self.users.values()
    }

    pub fn sessions(&self) -> &[SessionState] {
        &self.sessions
    }

    pub fn session(&self, index: usize) -> Result<&SessionState, SimError> {
        self.sessions.get(index).ok_or(SimError::UnknownSession(index))
    }

    fn session_mut(&mut self, index: usize) -> Result<&mut SessionState, SimError> {
        self.sessions.get_mut(index).ok_or(SimError::UnknownSession(index))
    }

    /// Registers `label` with a fresh random template. In the improved
    /// scheme the request takes one channel latency to reach the server,
    /// so `T2 - T1` equals the latency plus any clock skew.
    pub fn enroll(&mut self, label: &str, password: &str) -> Result<&EnrolledUser, SimError> {
        if self.users.contains_key(label) {
            return Err(SimError::DuplicateUser(label.to_string()));
        }
        let id = Identity::new(label).map_err(|e| SimError::Setup(format!("identity: {e}")))?;
        let password = Password::new(password).map_err(|e| SimError::Setup(format!("password: {e}")))?;
        let template = BiometricTemplate::random(self.extractor.template_bits(), &mut self.rng, label);
        let card = match &self.server {
            AnyServer::Baseline(s) => SmartCard::Baseline(baseline::register(
                id,
                &password,
                &template,
                s,
                &mut self.rng,
                &mut self.ledger,
            )?),
            AnyServer::Improved(s) => {
                let user_clock = self.clock.skewed(self.skew_ms);
                let (req, pending) = improved::begin_registration(
                    s.suite(),
                    id,
                    &password,
                    &template,
                    &user_clock,
                    &mut self.rng,
                    &mut self.ledger,
                )?;
                self.clock.advance(self.latency_ms);
                let issued = s.issue(req, &self.clock, &mut self.ledger)?;
                SmartCard::Improved(pending.complete(issued, &mut self.ledger))
            }
        };
        let user = EnrolledUser { label: label.to_string(), id, password, template, card };
        self.users.insert(label.to_string(), user);
        Ok(&self.users[label])
    }

    /// L1-L2: the user's card builds a login message and puts it on a new
    /// channel. Returns the session index; a local refusal still opens a
    /// session, with nothing in flight.
    pub fn start_login(&mut self, label: &str, opts: &LoginOptions) -> Result<usize, SimError> {
        let user = self.user(label)?.clone();
        let presented = if opts.stranger {
            BiometricTemplate::random(user.template.len(), &mut self.rng, "stranger")
        } else {
            self.extractor.rescan(&user.template, opts.rescan_flips, &mut self.rng).map_err(AuthError::from)?
        };
        let pw = opts.password.clone().unwrap_or(user.password.clone());
        let r_u = self.rng.random_exponent(&self.suite.params);
        let index = self.sessions.len();
        let mut channel = SimChannel::new(index as u64, self.scheme, self.seed, self.latency_ms);
        let user_clock = self.user_clock();
        let result = match &user.card {
            SmartCard::Baseline(card) => {
                baseline::login(card, user.id, &pw, &presented, r_u, &user_clock, &mut self.ledger)
                    .map(|(msg, s)| (msg.to_bytes(), AnySession::Baseline(s)))
            }
            SmartCard::Improved(card) => {
                improved::login(card, user.id, &pw, &presented, r_u, &user_clock, &mut self.ledger)
                    .map(|(msg, s)| (msg.to_bytes(), AnySession::Improved(s)))
            }
        };
        let (pending, failure) = match result {
            Ok((bytes, session)) => {
                channel.send(Direction::UserToServer, bytes, &user_clock, &mut self.ledger);
                (Some(session), None)
            }
            Err(e) => (None, Some(e)),
        };
        let failed = failure.clone();
        self.sessions.push(SessionState {
            index,
            user: label.to_string(),
            channel,
            presented,
            r_u,
            r_s: None,
            server_key: None,
            user_key: None,
            failure,
            pending,
        });
        match failed {
            Some(e) => Err(e.into()),
            None => Ok(index),
        }
    }

    /// A1-A2: delivers the login and lets the server answer.
    pub fn respond(&mut self, index: usize) -> Result<(), SimError> {
        let r_s = self.rng.random_exponent(&self.suite.params);
        let session = self.sessions.get_mut(index).ok_or(SimError::UnknownSession(index))?;
        let bytes = session
            .channel
            .deliver(Direction::UserToServer, &mut self.clock)
            .ok_or(SimError::NothingInFlight(index, "login"))?;
        let clock = &self.clock;
        let ledger = &mut self.ledger;
        let result = match &self.server {
            AnyServer::Baseline(s) => BaselineLoginMessage::from_bytes(&bytes)
                .and_then(|m| s.respond(&m, r_s, clock, ledger))
                .map(|(reply, key)| (reply.to_bytes(), key)),
            AnyServer::Improved(s) => ImprovedLoginMessage::from_bytes(&bytes)
                .and_then(|m| s.respond(&m, r_s, clock, ledger))
                .map(|(reply, key)| (reply.to_bytes(), key)),
        };
        match result {
            Ok((reply, key)) => {
                session.r_s = Some(r_s);
                session.server_key = Some(key);
                session.channel.send(Direction::ServerToUser, reply, clock, ledger);
                Ok(())
            }
            Err(e) => {
                session.failure = Some(e.clone());
                session.pending = None;
                Err(e.into())
            }
        }
    }

    /// A3: delivers the reply to the waiting user.
    pub fn finish(&mut self, index: usize) -> Result<SessionKey, SimError> {
        let window = self.window;
        let session = self.sessions.get_mut(index).ok_or(SimError::UnknownSession(index))?;
        let bytes = session
            .channel
            .deliver(Direction::ServerToUser, &mut self.clock)
            .ok_or(SimError::NothingInFlight(index, "reply"))?;
        let pending = session.pending.take().ok_or(SimError::NotPending(index))?;
        let user_clock = self.clock.skewed(self.skew_ms);
        let ledger = &mut self.ledger;
        let result = match pending {
            AnySession::Baseline(s) => BaselineReplyMessage::from_bytes(&bytes)
                .and_then(|m| baseline::finish(&m, s, &user_clock, window, ledger)),
            AnySession::Improved(s) => {
                ImprovedReplyMessage::from_bytes(&bytes).and_then(|m| improved::finish(&m, s, ledger))
            }
        };
        match result {
            Ok(key) => {
                session.user_key = Some(key);
                Ok(key)
            }
            Err(e) => {
                session.failure = Some(e.clone());
                Err(e.into())
            }
        }
    }

    /// Login, response, and finish back to back.
    pub fn run_honest(&mut self, label: &str, opts: &LoginOptions) -> Result<usize, SimError> {
        let index = self.start_login(label, opts)?;
        self.respond(index)?;
        self.finish(index)?;
        Ok(index)
    }

    pub fn tamper(&mut self, index: usize, field: &str, mask: Field128) -> Result<(), SimError> {
        Ok(self.session_mut(index)?.channel.tamper_in_flight(field, mask)?)
    }

    /// Resends the captured login of `index` on a fresh channel.
    pub fn replay_login(&mut self, index: usize) -> Result<usize, SimError> {
        let source = self.session(index)?;
        let bytes = source
            .transcript()
            .login_bytes()
            .ok_or(TranscriptError::MissingMessage("login"))?
            .to_vec();
        let user = source.user.clone();
        let presented = source.presented.clone();
        let r_u = source.r_u;
        let new_index = self.sessions.len();
        let mut channel = SimChannel::new(new_index as u64, self.scheme, self.seed, self.latency_ms);
        channel.send(Direction::UserToServer, bytes, &self.clock, &mut self.ledger);
        self.sessions.push(SessionState {
            index: new_index,
            user,
            channel,
            presented,
            r_u,
            r_s: None,
            server_key: None,
            user_key: None,
            failure: None,
            pending: None,
        });
        Ok(new_index)
    }

    /// What an insider holds after stealing `label`'s card and observing
    /// session `index`: card, transcript, biometric reading, and both
    /// session exponents.
    pub fn knowledge(&self, index: usize) -> Result<AdversaryKnowledge, SimError> {
        let session = self.session(index)?;
        let user = self.user(&session.user)?;
        AdversaryKnowledge::new(user.card.clone())
            .with_transcript(session.transcript().clone())
            .map(|k| k.with_biometric(session.presented.clone()).with_ephemerals(Some(session.r_u), session.r_s))
            .map_err(|e| SimError::Setup(e.to_string()))
    }
}

/// Ledger of one registration and one honest login for a fresh user.
pub fn measure_costs(scheme: Scheme, config: &Config) -> Result<CostLedger, SimError> {
    let mut sim = Simulation::new(scheme, config)?;
    sim.enroll("alice", "correct horse")?;
    sim.run_honest("alice", &LoginOptions::default())?;
    Ok(sim.ledger.clone())
}

/// Registers one user directly against `server`, outside a [`Simulation`].
#[allow(clippy::too_many_arguments)]
pub fn register_user(
    server: &AnyServer,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    user_clock: &Clock,
    server_clock: &Clock,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<SmartCard, AuthError> {
    Ok(match server {
        AnyServer::Baseline(s) => SmartCard::Baseline(baseline::register(id, pw, template, s, rng, ledger)?),
        AnyServer::Improved(s) => SmartCard::Improved(improved::register(
            id,
            pw,
            template,
            s,
            user_clock,
            server_clock,
            rng,
            ledger,
        )?),
    })
}

/// A completed login run by [`run_session`].
#[derive(Clone, Debug)]
pub struct SessionRun {
    pub transcript: Transcript,
    pub user_key: SessionKey,
    pub server_key: SessionKey,
    pub r_u: u128,
    pub r_s: u128,
}

/// One login, response, and finish. The user sends at `user_clock`, the
/// server receives and answers at `server_clock`, and the user checks the
/// reply at `reply_clock`.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    server: &AnyServer,
    card: &SmartCard,
    id: Identity,
    pw: &Password,
    template: &BiometricTemplate,
    user_clock: &Clock,
    server_clock: &Clock,
    reply_clock: &Clock,
    rng: &mut SeededRng,
    ledger: &mut CostLedger,
) -> Result<SessionRun, AuthError> {
    let r_u = rng.random_exponent(&card.suite().params);
    let r_s = rng.random_exponent(&card.suite().params);
    let mut transcript = Transcript::new(0, card.scheme(), rng.seed());
    let (user_key, server_key) = match (server, card) {
        (AnyServer::Baseline(s), SmartCard::Baseline(c)) => {
            let (login, session) = baseline::login(c, id, pw, template, r_u, user_clock, ledger)?;
            transcript.push(Direction::UserToServer, user_clock.now(), &login.to_bytes());
            let (reply, sk) = s.respond(&login, r_s, server_clock, ledger)?;
            transcript.push(Direction::ServerToUser, server_clock.now(), &reply.to_bytes());
            (baseline::finish(&reply, session, reply_clock, s.window(), ledger)?, sk)
        }
        (AnyServer::Improved(s), SmartCard::Improved(c)) => {
            let (login, session) = improved::login(c, id, pw, template, r_u, user_clock, ledger)?;
            transcript.push(Direction::UserToServer, user_clock.now(), &login.to_bytes());
            let (reply, sk) = s.respond(&login, r_s, server_clock, ledger)?;
            transcript.push(Direction::ServerToUser, server_clock.now(), &reply.to_bytes());
            (improved::finish(&reply, session, ledger)?, sk)
        }
        _ => return Err(AuthError::Malformed("card and server use different schemes".into())),
    };
    Ok(SessionRun { transcript, user_key, server_key, r_u, r_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::cost::{Phase, Principal};

    fn sim(scheme: Scheme) -> Simulation {
        Simulation::new(scheme, &Config::default()).unwrap()
    }

    #[test]
    fn honest_sessions_agree_both_schemes() {
        for scheme in [Scheme::Baseline, Scheme::Improved] {
            let mut s = sim(scheme);
            s.set_latency(40);
            s.set_skew(-300);
            s.enroll("alice", "pw-a").unwrap();
            s.enroll("bob", "pw-b").unwrap();
            for label in ["alice", "bob", "alice"] {
                let i = s.run_honest(label, &LoginOptions { rescan_flips: 5, ..Default::default() }).unwrap();
                assert!(s.session(i).unwrap().keys_agree(), "{scheme}");
                assert_eq!(s.session(i).unwrap().transcript().records.len(), 2);
            }
        }
    }

    #[test]
    fn wrong_factors_refuse_locally() {
        let mut s = sim(Scheme::Improved);
        s.enroll("alice", "pw-a").unwrap();
        let opts = LoginOptions { password: Some(Password::new("nope").unwrap()), ..Default::default() };
        assert_eq!(s.start_login("alice", &opts).unwrap_err().code(), "local-refusal");
        let opts = LoginOptions { stranger: true, ..Default::default() };
        assert_eq!(s.start_login("alice", &opts).unwrap_err().code(), "local-refusal");
        assert!(s.enroll("alice", "again").is_err());
    }

    #[test]
    fn replay_after_window_is_stale() {
        for scheme in [Scheme::Baseline, Scheme::Improved] {
            let mut s = sim(scheme);
            s.enroll("alice", "pw").unwrap();
            let i = s.run_honest("alice", &LoginOptions::default()).unwrap();
            s.advance(s.window().0 + 1);
            let before = s.ledger().modexps(Phase::Authentication, Principal::Server);
            let j = s.replay_login(i).unwrap();
            assert_eq!(s.respond(j).unwrap_err().code(), "stale");
            assert_eq!(s.ledger().modexps(Phase::Authentication, Principal::Server), before);
        }
    }

    #[test]
    fn tampered_login_is_rejected() {
        let mut s = sim(Scheme::Baseline);
        s.enroll("alice", "pw").unwrap();
        let i = s.start_login("alice", &LoginOptions::default()).unwrap();
        s.tamper(i, "C_i", Field128::from_u128(1)).unwrap();
        assert_eq!(s.respond(i).unwrap_err().code(), "login-mismatch");
    }

    #[test]
    fn server_state_restores() {
        let mut s = sim(Scheme::Improved);
        s.enroll("alice", "pw").unwrap();
        let state = s.server().state();
        let restored = AnyServer::from_state(&state, *s.suite(), s.window()).unwrap();
        assert_eq!(restored.state(), state);
    }

    #[test]
    fn measured_wire_and_storage() {
        let b = measure_costs(Scheme::Baseline, &Config::default()).unwrap();
        assert_eq!(b.wire_bits(), 7 * 128);
        assert_eq!(b.storage()[0].word_bits(), 8 * 128);
        let i = measure_costs(Scheme::Improved, &Config::default()).unwrap();
        assert_eq!(i.wire_bits(), 8 * 128);
        assert_eq!(i.storage()[0].word_bits(), 10 * 128);
    }
}
