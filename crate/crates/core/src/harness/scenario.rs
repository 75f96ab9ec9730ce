//! Scenario scripts: a line-oriented list of steps run against a fresh
//! [`Simulation`].
//!
//! ```text
//! scenario baseline-attack
//! scheme baseline
//! seed 7
//!
//! register alice correct horse
//! login alice flips=3
//! respond
//! finish
//! leak
//! dictionary 10000 alice
//! attack
//! impersonate forge
//! ```
//!
//! Header lines (`scenario`, `scheme`, `seed`, `window`) come first. A
//! session is named `#<n>`; steps that take one default to the latest.

use std::str::FromStr;

use crate::adversary::{impersonate, attack, ImpersonationMode, TimestampGrant};
use crate::crypto::Field128;
use crate::harness::card::LineCursor;
use crate::harness::cost::cost_report;
use crate::harness::files::{Config, ParseError};
use crate::harness::report::{AttackReport, ImpersonationReport, ScenarioReport, StepReport, StepStatus};
use crate::harness::sim::{AnyServer, LoginOptions, SimError, Simulation};
use crate::scheme::{Password, Scheme};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Register { user: String, password: String },
    Login { user: String, flips: usize, stranger: bool, password: Option<String> },
    Respond { session: Option<usize> },
    Finish { session: Option<usize> },
    AdvanceClock { ms: u64 },
    Latency { ms: u64 },
    Skew { ms: i64 },
    Tamper { field: String, mask: Field128, session: Option<usize> },
    Replay { session: Option<usize> },
    Leak { session: Option<usize> },
    /// `size` generated words, plus the named user's password at a
    /// random position.
    Dictionary { size: usize, include: Option<String> },
    GrantTimestamps,
    Attack { session: Option<usize> },
    Impersonate { mode: ImpersonationMode, session: Option<usize> },
    CostReport,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptStep {
    pub line: usize,
    pub text: String,
    pub step: Step,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScenarioScript {
    pub name: String,
    pub scheme: Option<Scheme>,
    pub seed: Option<u64>,
    pub window_ms: Option<u64>,
    pub steps: Vec<ScriptStep>,
}

fn session_ref(tok: &str) -> Option<usize> {
    tok.strip_prefix('#').and_then(|n| n.parse().ok())
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut script = ScenarioScript::default();
        let mut lines = LineCursor::new("scenario", text);
        while let Some((n, off, line)) = lines.next_nonempty() {
            let err = |col: usize, m: String| ParseError::new("scenario", n, off + col, m);
            let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let col = line.len() - rest.len();
            let args: Vec<&str> = rest.split_whitespace().collect();
            let header = matches!(cmd, "scenario" | "scheme" | "seed" | "window");
            if header && !script.steps.is_empty() {
                return Err(err(0, format!("'{cmd}' must come before the first step")));
            }
            let number = |s: Option<&&str>, what: &str| -> Result<u64, ParseError> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| err(col, format!("{cmd}: expected {what}")))
            };
            let session = |i: usize| -> Result<Option<usize>, ParseError> {
                match args.get(i) {
                    None => Ok(None),
                    Some(t) => session_ref(t)
                        .map(Some)
                        .ok_or_else(|| err(col, format!("{cmd}: expected a session like #0, got '{t}'"))),
                }
            };
            let step = match cmd {
                "scenario" => {
                    script.name = rest.to_string();
                    continue;
                }
                "scheme" => {
                    script.scheme = Some(Scheme::from_str(rest).map_err(|e| err(col, e))?);
                    continue;
                }
                "seed" => {
                    script.seed = Some(number(args.first(), "a seed")?);
                    continue;
                }
                "window" => {
                    script.window_ms = Some(number(args.first(), "milliseconds")?);
                    continue;
                }
                "register" => {
                    let (user, pw) = rest
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| err(col, "register: expected '<user> <password>'".into()))?;
                    Step::Register { user: user.to_string(), password: pw.trim().to_string() }
                }
                "login" => {
                    let user = args.first().ok_or_else(|| err(col, "login: expected a user".into()))?;
                    let (mut flips, mut stranger, mut password) = (0, false, None);
                    for a in &args[1..] {
                        if let Some(v) = a.strip_prefix("flips=") {
                            flips = v.parse().map_err(|_| err(col, format!("login: bad flips '{v}'")))?;
                        } else if let Some(v) = a.strip_prefix("password=") {
                            password = Some(v.to_string());
                        } else if *a == "stranger" {
                            stranger = true;
                        } else {
                            return Err(err(col, format!("login: unknown option '{a}'")));
                        }
                    }
                    Step::Login { user: user.to_string(), flips, stranger, password }
                }
                "respond" => Step::Respond { session: session(0)? },
                "finish" => Step::Finish { session: session(0)? },
                "advance-clock" => Step::AdvanceClock { ms: number(args.first(), "milliseconds")? },
                "latency" => Step::Latency { ms: number(args.first(), "milliseconds")? },
                "skew" => Step::Skew {
                    ms: args
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(col, "skew: expected signed milliseconds".into()))?,
                },
                "tamper" => {
                    let (field, mask) = match (args.first(), args.get(1)) {
                        (Some(f), Some(m)) => (f, m),
                        _ => return Err(err(col, "tamper: expected '<field> <bit|0xmask>'".into())),
                    };
                    let mask = match mask.strip_prefix("0x") {
                        Some(hex) => Field128::from_hex(&format!("{hex:0>32}")).map_err(|e| err(col, e.to_string()))?,
                        None => {
                            let bit: usize = mask
                                .parse()
                                .ok()
                                .filter(|b| *b < 128)
                                .ok_or_else(|| err(col, format!("tamper: bad bit '{mask}'")))?;
                            Field128::ZERO.with_bit_flipped(bit)
                        }
                    };
                    Step::Tamper { field: field.to_string(), mask, session: session(2)? }
                }
                "replay" => Step::Replay { session: session(0)? },
                "leak" => Step::Leak { session: session(0)? },
                "dictionary" => Step::Dictionary {
                    size: number(args.first(), "a size")? as usize,
                    include: args.get(1).map(|s| s.to_string()),
                },
                "grant-timestamps" => Step::GrantTimestamps,
                "attack" => Step::Attack { session: session(0)? },
                "impersonate" => {
                    let mode = match args.first() {
                        Some(&"forge") => ImpersonationMode::Forge,
                        Some(&"replay") => ImpersonationMode::Replay,
                        _ => return Err(err(col, "impersonate: expected 'forge' or 'replay'".into())),
                    };
                    Step::Impersonate { mode, session: session(1)? }
                }
                "cost-report" => Step::CostReport,
                other => return Err(err(0, format!("unknown step '{other}'"))),
            };
            script.steps.push(ScriptStep { line: n, text: line.to_string(), step });
        }
        Ok(script)
    }
}

/// Runner state beyond the simulation itself.
struct Runner {
    sim: Simulation,
    dictionary: Vec<Password>,
    grant: bool,
    leaked: Vec<usize>,
    report: ScenarioReport,
}

enum StepResult {
    Done(String),
    Rejected(String, String),
}

impl Runner {
    fn latest(&self, session: Option<usize>) -> Result<usize, SimError> {
        match session {
            Some(s) => Ok(s),
            None => self.sim.sessions().len().checked_sub(1).ok_or(SimError::UnknownSession(0)),
        }
    }

    fn protocol(&self, r: Result<String, SimError>) -> Result<StepResult, SimError> {
        match r {
            Ok(d) => Ok(StepResult::Done(d)),
            Err(SimError::Auth(e)) => Ok(StepResult::Rejected(e.code().to_string(), e.to_string())),
            Err(e) => Err(e),
        }
    }

    fn run(&mut self, step: &Step) -> Result<StepResult, SimError> {
        match step {
            Step::Register { user, password } => {
                self.sim.enroll(user, password)?;
                Ok(StepResult::Done(format!("enrolled {user}")))
            }
            Step::Login { user, flips, stranger, password } => {
                let password = password
                    .as_deref()
                    .map(Password::new)
                    .transpose()
                    .map_err(|e| SimError::Setup(e.to_string()))?;
                let opts = LoginOptions { rescan_flips: *flips, stranger: *stranger, password };
                let r = self.sim.start_login(user, &opts).map(|i| format!("session #{i}"));
                self.protocol(r)
            }
            Step::Respond { session } => {
                let i = self.latest(*session)?;
                let r = self.sim.respond(i).map(|_| format!("session #{i}"));
                self.protocol(r)
            }
            Step::Finish { session } => {
                let i = self.latest(*session)?;
                let r = self.sim.finish(i).map(|k| {
                    let agree = self.sim.session(i).map(|s| s.keys_agree()).unwrap_or(false);
                    format!("session #{i} key {} ({})", k.key, if agree { "agrees" } else { "differs" })
                });
                self.protocol(r)
            }
            Step::AdvanceClock { ms } => {
                self.sim.advance(*ms);
                Ok(StepResult::Done(format!("now {}", self.sim.clock().now())))
            }
            Step::Latency { ms } => {
                self.sim.set_latency(*ms);
                Ok(StepResult::Done(String::new()))
            }
            Step::Skew { ms } => {
                self.sim.set_skew(*ms);
                Ok(StepResult::Done(String::new()))
            }
            Step::Tamper { field, mask, session } => {
                let i = self.latest(*session)?;
                self.sim.tamper(i, field, *mask)?;
                Ok(StepResult::Done(format!("session #{i} {field} ^= {mask}")))
            }
            Step::Replay { session } => {
                let i = self.latest(*session)?;
                let j = self.sim.replay_login(i)?;
                Ok(StepResult::Done(format!("login of #{i} resent as session #{j}")))
            }
            Step::Leak { session } => {
                let i = self.latest(*session)?;
                self.sim.session(i)?;
                self.leaked.push(i);
                Ok(StepResult::Done(format!("r_u and r_s of session #{i} exported")))
            }
            Step::Dictionary { size, include } => {
                let generated = if include.is_some() { size.saturating_sub(1) } else { *size };
                let rng = self.sim.rng();
                let mut words: Vec<Password> = (0..generated)
                    .map(|_| {
                        let tag = rng.random_field().to_u128() >> 72;
                        Password::new(&format!("w{tag:014x}")).expect("short word")
                    })
                    .collect();
                if let Some(user) = include {
                    let pw = self.sim.user(user)?.password.clone();
                    let at = self.sim.rng().below(generated + 1);
                    words.insert(at, pw);
                }
                self.dictionary = words;
                Ok(StepResult::Done(format!("{} candidates", self.dictionary.len())))
            }
            Step::GrantTimestamps => {
                self.grant = true;
                Ok(StepResult::Done("registration timestamps disclosed (out of model)".into()))
            }
            Step::Attack { session } => {
                let i = self.latest(*session)?;
                let k = self.knowledge(i)?;
                let outcome = attack(&k);
                let honest = self.sim.session(i)?.server_key.map(|k| k.key);
                let key_matches = honest.is_some() && honest == outcome.forged_session_key;
                let detail = format!("{} after {} candidates", outcome.status.name(), outcome.work);
                self.report.attacks.push(AttackReport { session: i, outcome, honest_key: honest, key_matches });
                Ok(StepResult::Done(detail))
            }
            Step::Impersonate { mode, session } => {
                let i = self.latest(*session)?;
                let k = self.knowledge(i)?;
                let outcome = match self.report.attacks.iter().rev().find(|a| a.session == i) {
                    Some(a) => a.outcome.clone(),
                    None => attack(&k),
                };
                let mut rng = self.sim.rng().fork();
                let clock = self.sim.clock().clone();
                let mut ledger = self.sim.ledger().clone();
                let verdict = impersonate(&k, &outcome, self.sim.server().endpoint(), *mode, &mut rng, &clock, &mut ledger);
                *self.sim.ledger_mut() = ledger;
                let detail = format!("{verdict:?}").to_lowercase();
                self.report.impersonations.push(ImpersonationReport { session: i, mode: *mode, verdict });
                Ok(StepResult::Done(detail))
            }
            Step::CostReport => {
                let c = cost_report(self.sim.scheme(), self.sim.ledger());
                let detail = c
                    .cells
                    .iter()
                    .map(|c| format!("{} {}/{}", c.metric, c.measured, c.published))
                    .collect::<Vec<_>>()
                    .join(", ");
                self.report.costs.push(c);
                Ok(StepResult::Done(detail))
            }
        }
    }

    /// Knowledge for an attack on session `i`: exponents only if leaked.
    fn knowledge(&self, i: usize) -> Result<crate::adversary::AdversaryKnowledge, SimError> {
        let mut k = self.sim.knowledge(i)?.with_dictionary(self.dictionary.clone());
        if !self.leaked.contains(&i) {
            k = k.with_ephemerals(None, None);
        }
        if self.grant {
            if let AnyServer::Improved(s) = self.sim.server() {
                let user = self.sim.user(&self.sim.session(i)?.user)?;
                if let Some(r) = s.record_for(user.id) {
                    k = k.grant_timestamps(TimestampGrant { t1: r.t1, t2: r.t2 });
                }
            }
        }
        Ok(k)
    }
}

/// Runs every step in order. Protocol rejections and failed preconditions
/// are recorded per step; later steps still run.
pub fn run_scenario(script: &ScenarioScript, config: &Config) -> Result<ScenarioReport, SimError> {
    if script.steps.is_empty() {
        return Ok(ScenarioReport { scenario: script.name.clone(), ..Default::default() });
    }
    let mut config = config.clone();
    if let Some(seed) = script.seed {
        config.seed = seed;
    }
    if let Some(w) = script.window_ms {
        config.delta_t_ms = w;
    }
    let scheme = script.scheme.unwrap_or(Scheme::Baseline);
    let mut runner = Runner {
        sim: Simulation::new(scheme, &config)?,
        dictionary: Vec::new(),
        grant: false,
        leaked: Vec::new(),
        report: ScenarioReport {
            scenario: script.name.clone(),
            scheme: Some(scheme),
            seed: Some(config.seed),
            ..Default::default()
        },
    };
    for s in &script.steps {
        let (status, code, detail) = match runner.run(&s.step) {
            Ok(StepResult::Done(d)) => (StepStatus::Ok, None, d),
            Ok(StepResult::Rejected(code, d)) => (StepStatus::Rejected, Some(code), d),
            Err(e) => (StepStatus::Failed, Some(e.code().to_string()), e.to_string()),
        };
        runner.report.steps.push(StepReport { line: s.line, step: s.text.clone(), status, code, detail });
    }
    runner.report.transcripts = runner.sim.sessions().iter().map(|s| s.transcript().clone()).collect();
    runner.report.ledger = Some(runner.sim.ledger().clone());
    Ok(runner.report)
}
