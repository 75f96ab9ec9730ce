use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use triauth::adversary::{attack, AdversaryKnowledge};
use triauth::crypto::{mod_exp, Clock, SeededRng, ServerSecret};
use triauth::fuzzy::{BiometricTemplate, FuzzyExtractor};
use triauth::harness::card::SmartCard;
use triauth::harness::cost::{cost_report, CostLedger};
use triauth::harness::files::{parse_dictionary, parse_template, Config, LeakBundle, ParseError, ServerState};
use triauth::harness::scenario::{run_scenario, ScenarioScript};
use triauth::harness::sim::{measure_costs, register_user, run_session, AnyServer, SimError};
use triauth::scheme::{AuthError, Identity, Password, Scheme};
use triauth::transcript::{Transcript, TranscriptError};

const EXIT_PRECONDITION: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_FRESHNESS: u8 = 4;
const EXIT_AUTH: u8 = 5;

#[derive(Parser)]
#[command(name = "triauth", version, about = "Three-factor authentication simulator")]
struct Cli {
    /// TOML deployment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a user, creating or extending OUT/server.state
    Register {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        id: String,
        #[arg(long)]
        password: String,
        /// Enrolment template; a random one is drawn when omitted
        #[arg(long)]
        template: Option<PathBuf>,
        /// Simulated time in ms; the wall clock is used otherwise
        #[arg(long)]
        now: Option<u64>,
        /// One-way network delay in ms
        #[arg(long, default_value_t = 20)]
        delay: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one login against a stored server and write the transcript
    LoginRun {
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        card: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        password: String,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        server: PathBuf,
        /// Rescan noise: number of repetition blocks with one flipped bit
        #[arg(long, default_value_t = 0)]
        flips: usize,
        #[arg(long)]
        now: Option<u64>,
        /// Server clock offset relative to the user, in ms
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        skew: i64,
        #[arg(long, default_value_t = 20)]
        delay: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline password guessing from a stolen card and captured traffic
    Attack {
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        card: PathBuf,
        #[arg(long, required = true)]
        transcript: Vec<PathBuf>,
        /// Victim's biometric, if the adversary holds it
        #[arg(long)]
        template: Option<PathBuf>,
        /// Leaked session ephemerals
        #[arg(long)]
        leak: Option<PathBuf>,
        #[arg(long)]
        dict: PathBuf,
        /// Writes the outcome as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure one honest run and compare it with the published costs
    CostReport {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario script
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a card file's structure and group element
    VerifyCard {
        #[arg(long)]
        card: PathBuf,
    },
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn precondition(message: impl Into<String>) -> Self {
        CliError { code: EXIT_PRECONDITION, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError { code: EXIT_PARSE, message: format!("parse error: {e}") }
    }
}

impl From<AuthError> for CliError {
    fn from(e: AuthError) -> Self {
        let code = if e.is_freshness() { EXIT_FRESHNESS } else { EXIT_AUTH };
        CliError { code, message: format!("{}: {e}", e.code()) }
    }
}

impl From<TranscriptError> for CliError {
    fn from(e: TranscriptError) -> Self {
        match e {
            TranscriptError::Truncated(_) | TranscriptError::BadHeader { .. } => {
                CliError { code: EXIT_PARSE, message: format!("parse error: transcript file, line 1: {e}") }
            }
            other => CliError::precondition(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Auth(a) => a.into(),
            SimError::Transcript(t) => t.into(),
            other => CliError::precondition(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::precondition(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::precondition(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::precondition(format!("cannot create {}: {e}", dir.display())))
}

fn clock_at(now: Option<u64>) -> Clock {
    now.map(Clock::simulated).unwrap_or(Clock::Real)
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::parse(&read_text(path)?)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_card(path: &Path, cfg: &Config) -> Result<SmartCard> {
    Ok(SmartCard::parse(&read_text(path)?, cfg.trust_params)?)
}

fn load_transcript(path: &Path) -> Result<Transcript> {
    let bytes = fs::read(path).map_err(|e| CliError::precondition(format!("cannot read {}: {e}", path.display())))?;
    Ok(Transcript::from_bytes(&bytes)?)
}

fn check_scheme(expected: Option<Scheme>, found: Scheme, what: &str) -> Result<()> {
    match expected {
        Some(s) if s != found => Err(CliError::precondition(format!("{what} is for scheme {found}, not {s}"))),
        _ => Ok(()),
    }
}

fn identity(label: &str) -> Result<Identity> {
    Identity::new(label).map_err(|e| CliError::precondition(format!("identity: {e}")))
}

fn password(text: &str) -> Result<Password> {
    Password::new(text).map_err(|e| CliError::precondition(format!("password: {e}")))
}

fn register(cfg: &Config, args: RegisterArgs) -> Result<()> {
    let suite = cfg.suite().map_err(CliError::precondition)?;
    let extractor: FuzzyExtractor = cfg.extractor().map_err(CliError::precondition)?;
    let mut rng = SeededRng::new(cfg.seed);
    ensure_dir(&args.out)?;
    let state_path = args.out.join("server.state");
    let server = if state_path.exists() {
        let state = ServerState::parse(&read_text(&state_path)?)?;
        check_scheme(Some(args.scheme), state.scheme, "server.state")?;
        AnyServer::from_state(&state, suite, cfg.window())?
    } else {
        let x = rng.random_exponent(&suite.params);
        let secret = ServerSecret::from_exponent(x, &suite.params).map_err(|e| CliError::precondition(e.to_string()))?;
        AnyServer::new(args.scheme, suite, secret, cfg.window())
    };

    let template = match &args.template {
        Some(path) => parse_template(&read_text(path)?)?,
        None => BiometricTemplate::random(extractor.template_bits(), &mut rng, args.id.clone()),
    };
    let user_clock = clock_at(args.now);
    let server_clock = user_clock.skewed(args.delay as i64);
    let mut ledger = CostLedger::default();
    let card = register_user(
        &server,
        identity(&args.id)?,
        &password(&args.password)?,
        &template,
        &user_clock,
        &server_clock,
        &mut rng,
        &mut ledger,
    )?;

    write_file(&state_path, server.state().to_file_string())?;
    write_file(&args.out.join(format!("{}.card", args.id)), card.to_file_string())?;
    write_file(&args.out.join(format!("{}.template", args.id)), template.to_file_string())?;
    println!("registered {} ({}) in {}", args.id, args.scheme, args.out.display());
    Ok(())
}

struct RegisterArgs {
    scheme: Scheme,
    id: String,
    password: String,
    template: Option<PathBuf>,
    now: Option<u64>,
    delay: u64,
    out: PathBuf,
}

struct LoginArgs {
    scheme: Option<Scheme>,
    card: PathBuf,
    id: String,
    password: String,
    template: PathBuf,
    server: PathBuf,
    flips: usize,
    now: Option<u64>,
    skew: i64,
    delay: u64,
    out: PathBuf,
}

fn login_run(cfg: &Config, args: LoginArgs) -> Result<()> {
    let card = load_card(&args.card, cfg)?;
    check_scheme(args.scheme, card.scheme(), "card")?;
    let state = ServerState::parse(&read_text(&args.server)?)?;
    check_scheme(Some(card.scheme()), state.scheme, "server state")?;
    let server = AnyServer::from_state(&state, *card.suite(), cfg.window())?;
    let enrolled = parse_template(&read_text(&args.template)?)?;
    let mut rng = SeededRng::new(cfg.seed);
    let extractor = FuzzyExtractor::new(enrolled.len()).map_err(|e| CliError::precondition(e.to_string()))?;
    let presented = extractor.rescan(&enrolled, args.flips, &mut rng).map_err(|e| CliError::precondition(e.to_string()))?;

    let user_clock = clock_at(args.now);
    let server_clock = user_clock.skewed(args.skew.saturating_add(args.delay as i64));
    let reply_clock = user_clock.skewed(2 * args.delay as i64);
    let mut ledger = CostLedger::default();
    ensure_dir(&args.out)?;
    let result = run_session(
        &server,
        &card,
        identity(&args.id)?,
        &password(&args.password)?,
        &presented,
        &user_clock,
        &server_clock,
        &reply_clock,
        &mut rng,
        &mut ledger,
    );

    let report = match &result {
        Ok(run) => json!({
            "scheme": card.scheme(),
            "id": args.id,
            "status": "accepted",
            "user_key": run.user_key,
            "server_key": run.server_key,
            "keys_agree": run.user_key == run.server_key,
            "ledger": ledger,
        }),
        Err(e) => json!({
            "scheme": card.scheme(),
            "id": args.id,
            "status": e.code(),
            "detail": e.to_string(),
            "ledger": ledger,
        }),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_file(&args.out.join("login-report.json"), text)?;

    let run = result?;
    write_file(&args.out.join("session.tscr"), run.transcript.to_bytes())?;
    let leak = LeakBundle { r_u: Some(run.r_u), r_s: Some(run.r_s) };
    write_file(&args.out.join("session.leak"), leak.to_file_string())?;
    let summary = format!(
        "login {} ({}): accepted\n  session key {}\n  keys agree: {}\n",
        args.id,
        card.scheme(),
        run.user_key.key,
        run.user_key == run.server_key
    );
    write_file(&args.out.join("login-report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

struct AttackArgs {
    scheme: Option<Scheme>,
    card: PathBuf,
    transcript: Vec<PathBuf>,
    template: Option<PathBuf>,
    leak: Option<PathBuf>,
    dict: PathBuf,
    out: Option<PathBuf>,
}

fn run_attack(cfg: &Config, args: AttackArgs) -> Result<()> {
    let card = load_card(&args.card, cfg)?;
    check_scheme(args.scheme, card.scheme(), "card")?;
    let mut k = AdversaryKnowledge::new(card);
    for path in &args.transcript {
        k = k.with_transcript(load_transcript(path)?).map_err(|e| CliError::precondition(e.to_string()))?;
    }
    if let Some(path) = &args.template {
        k = k.with_biometric(parse_template(&read_text(path)?)?);
    }
    if let Some(path) = &args.leak {
        let leak = LeakBundle::parse(&read_text(path)?)?;
        k = k.with_ephemerals(leak.r_u, leak.r_s);
    }
    k = k.with_dictionary(parse_dictionary(&read_text(&args.dict)?)?);

    let outcome = attack(&k);
    println!("attack on {}: {}", outcome.scheme, outcome.status.name());
    if let Some(pw) = &outcome.recovered_password {
        println!("  password  {}", pw.text());
    }
    if let Some(id) = &outcome.recovered_identity {
        match id.word().to_label() {
            Some(label) => println!("  identity  {label}"),
            None => println!("  identity  {}", id.word()),
        }
    }
    if let Some(key) = &outcome.forged_session_key {
        println!("  session key {key}");
    }
    println!("  candidates tried {}, hash evaluations {}", outcome.work, outcome.hash_evaluations);
    if let Some(reason) = &outcome.reason {
        println!("  reason: {reason}");
    }
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&outcome).expect("outcome serializes");
        text.push('\n');
        write_file(out, text)?;
    }
    Ok(())
}

fn run_cost_report(cfg: &Config, scheme: Scheme, out: Option<PathBuf>) -> Result<()> {
    let ledger = measure_costs(scheme, cfg)?;
    let report = cost_report(scheme, &ledger);
    print!("{}", report.render());
    if let Some(out) = out {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        write_file(&out, text)?;
    }
    Ok(())
}

fn replay(cfg: &Config, scenario: &Path, out: Option<PathBuf>) -> Result<()> {
    let script = ScenarioScript::parse(&read_text(scenario)?)?;
    let report = run_scenario(&script, cfg)?;
    let rendered = report.render();
    print!("{rendered}");
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        write_file(&dir.join("report.json"), report.to_json())?;
        write_file(&dir.join("report.txt"), &rendered)?;
    }
    Ok(())
}

fn verify_card(cfg: &Config, path: &Path) -> Result<()> {
    let card = load_card(path, cfg)?;
    let params = &card.suite().params;
    let y = params.element(card.y()).map_err(|e| CliError::precondition(format!("Y: {e}")))?;
    let q = (params.p() - 1) / 2;
    let check = mod_exp(y, q, params).map_err(|e| CliError::precondition(e.to_string()))?;
    if check.to_u128() != 1 {
        return Err(CliError::precondition("Y is not in the prime-order subgroup"));
    }
    let bits = card.helper().offset.len();
    FuzzyExtractor::new(bits).map_err(|e| CliError::precondition(format!("P_i: {e}")))?;
    println!("OK {} card, {} items, helper {} bits", card.scheme(), card.storage_layout().len(), bits);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Register { scheme, id, password, template, now, delay, out } => {
            register(&cfg, RegisterArgs { scheme, id, password, template, now, delay, out })
        }
        Command::LoginRun { scheme, card, id, password, template, server, flips, now, skew, delay, out } => login_run(
            &cfg,
            LoginArgs { scheme, card, id, password, template, server, flips, now, skew, delay, out },
        ),
        Command::Attack { scheme, card, transcript, template, leak, dict, out } => {
            run_attack(&cfg, AttackArgs { scheme, card, transcript, template, leak, dict, out })
        }
        Command::CostReport { scheme, out } => run_cost_report(&cfg, scheme, out),
        Command::Replay { scenario, out } => replay(&cfg, &scenario, out),
        Command::VerifyCard { card } => verify_card(&cfg, &card),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
