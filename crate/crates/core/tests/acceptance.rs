//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use triauth::adversary::{
    attack_baseline, attack_improved, forge_with_guessed_timestamps, guess_timestamps, impersonate,
    AdversaryKnowledge, AttackStatus, ImpersonationMode, TimestampGrant,
};
use triauth::crypto::{Clock, Field128, SeededRng};
use triauth::fuzzy::{flip_positions, BiometricTemplate, FuzzyExtractor};
use triauth::harness::cost::{cost_report, CostLedger, Phase, Principal};
use triauth::harness::files::Config;
use triauth::harness::report::ScenarioReport;
use triauth::harness::scenario::{run_scenario, ScenarioScript};
use triauth::harness::sim::{measure_costs, AnyServer, LoginOptions, Simulation};
use triauth::scheme::{Password, Scheme};
use triauth::transcript::{locate_field, wire_fields, Direction};

type Verdict = Result<String, String>;

fn check(ok: bool, pass: String, fail: String) -> Verdict {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn config(seed: u64) -> Config {
    Config { seed, ..Config::default() }
}

fn label(prefix: char, rng: &mut SeededRng) -> String {
    format!("{prefix}{:012x}", rng.random_field().to_u128() >> 80)
}

// 1. Honest key agreement.
fn honest_agreement() -> Verdict {
    let start = Instant::now();
    let mut rng = SeededRng::new(101);
    let window = Config::default().delta_t_ms;
    let mut summary = Vec::new();
    for scheme in [Scheme::Baseline, Scheme::Improved] {
        let (mut runs, mut agree) = (0, 0);
        for batch in 0..100u64 {
            let mut sim = Simulation::new(scheme, &config(1000 + batch)).map_err(|e| e.to_string())?;
            let users: Vec<String> = (0..10).map(|_| label('u', &mut rng)).collect();
            for u in &users {
                let pw = label('p', &mut rng);
                sim.set_latency(rng.below(window as usize / 4 + 1) as u64);
                sim.enroll(u, &pw).map_err(|e| e.to_string())?;
            }
            for u in &users {
                let half = window as i64 / 2;
                sim.set_skew(rng.below(window as usize + 1) as i64 - half);
                sim.set_latency(rng.below(window as usize / 4 + 1) as u64);
                let flips = rng.below(129);
                runs += 1;
                if let Ok(i) = sim.run_honest(u, &LoginOptions { rescan_flips: flips, ..Default::default() }) {
                    if sim.session(i).map(|s| s.keys_agree()).unwrap_or(false) {
                        agree += 1;
                    }
                }
                sim.advance(rng.below(60_000) as u64);
            }
        }
        summary.push((scheme, runs, agree));
    }
    let elapsed = start.elapsed();
    let all = summary.iter().all(|(_, r, a)| r == a && *r == 1000);
    let text = summary.iter().map(|(s, r, a)| format!("{s} {a}/{r}")).collect::<Vec<_>>().join(", ");
    let text = format!("{text} sessions agree in {:.2}s", elapsed.as_secs_f64());
    check(all && elapsed < Duration::from_secs(10), text.clone(), text)
}

struct BaselineVictim {
    sim: Simulation,
    knowledge: AdversaryKnowledge,
    honest_key: Field128,
    password: Password,
    id: triauth::scheme::Identity,
}

fn dictionary(size: usize, truth: &Password, rng: &mut SeededRng) -> Vec<Password> {
    let mut words: Vec<Password> = (0..size - 1)
        .map(|i| Password::new(&format!("cand{i:05}-{:06x}", rng.below(1 << 24))).unwrap())
        .collect();
    words.insert(rng.below(size), truth.clone());
    words
}

fn victim_sim(scheme: Scheme, seed: u64, rng: &mut SeededRng) -> Result<(Simulation, usize, Password), String> {
    let mut sim = Simulation::new(scheme, &config(seed)).map_err(|e| e.to_string())?;
    sim.set_latency(rng.below(200) as u64);
    sim.set_skew(rng.below(1001) as i64 - 500);
    let user = label('v', rng);
    let pw = label('p', rng);
    // A few other users so lookups are not trivially unique.
    for _ in 0..3 {
        let other = label('o', rng);
        let opw = label('p', rng);
        sim.enroll(&other, &opw).map_err(|e| e.to_string())?;
    }
    sim.enroll(&user, &pw).map_err(|e| e.to_string())?;
    let flips = rng.below(129);
    let i = sim
        .run_honest(&user, &LoginOptions { rescan_flips: flips, ..Default::default() })
        .map_err(|e| e.to_string())?;
    Ok((sim, i, Password::new(&pw).unwrap()))
}

fn baseline_victims() -> Result<Vec<BaselineVictim>, String> {
    let mut rng = SeededRng::new(202);
    (0..100u64)
        .map(|n| {
            let (sim, i, password) = victim_sim(Scheme::Baseline, 5000 + n, &mut rng)?;
            let session = sim.session(i).map_err(|e| e.to_string())?;
            let honest_key = session.server_key.ok_or("no server key")?.key;
            let id = sim.user(&session.user).map_err(|e| e.to_string())?.id;
            let knowledge = sim
                .knowledge(i)
                .map_err(|e| e.to_string())?
                .with_dictionary(dictionary(10_000, &password, &mut rng));
            Ok(BaselineVictim { sim, knowledge, honest_key, password, id })
        })
        .collect()
}

// 2. Attack reproduction on the baseline scheme.
fn baseline_attack(victims: &[BaselineVictim], started: Instant) -> (Verdict, Vec<triauth::adversary::AttackOutcome>) {
    let mut outcomes = Vec::new();
    let mut good = 0;
    let mut work = 0;
    for v in victims {
        let out = attack_baseline(&v.knowledge);
        work += out.work;
        if out.status == AttackStatus::Recovered
            && out.recovered_password.as_ref() == Some(&v.password)
            && out.recovered_identity == Some(v.id)
            && out.forged_session_key == Some(v.honest_key)
        {
            good += 1;
        }
        outcomes.push(out);
    }
    let elapsed = started.elapsed();
    let text = format!(
        "{good}/100 victims: password, identity and session key recovered ({work} candidates tried) in {:.2}s",
        elapsed.as_secs_f64()
    );
    (check(good == 100 && elapsed < Duration::from_secs(30), text.clone(), text), outcomes)
}

struct ImprovedVictim {
    sim: Simulation,
    knowledge: AdversaryKnowledge,
    honest_key: Field128,
    password: Password,
    grant: TimestampGrant,
}

fn improved_victims() -> Result<Vec<ImprovedVictim>, String> {
    let mut rng = SeededRng::new(404);
    (0..100u64)
        .map(|n| {
            let (sim, i, password) = victim_sim(Scheme::Improved, 7000 + n, &mut rng)?;
            let session = sim.session(i).map_err(|e| e.to_string())?;
            let honest_key = session.server_key.ok_or("no server key")?.key;
            let id = sim.user(&session.user).map_err(|e| e.to_string())?.id;
            let grant = match sim.server() {
                AnyServer::Improved(s) => {
                    let r = s.record_for(id).ok_or("no record")?;
                    TimestampGrant { t1: r.t1, t2: r.t2 }
                }
                AnyServer::Baseline(_) => return Err("wrong server".into()),
            };
            let knowledge = sim
                .knowledge(i)
                .map_err(|e| e.to_string())?
                .with_dictionary(dictionary(10_000, &password, &mut rng));
            Ok(ImprovedVictim { sim, knowledge, honest_key, password, grant })
        })
        .collect()
}

// 3. Impersonation follow-through.
fn impersonation(
    baseline: &[BaselineVictim],
    outcomes: &[triauth::adversary::AttackOutcome],
    improved: &[ImprovedVictim],
) -> Verdict {
    let mut rng = SeededRng::new(303);
    let mut accepted = 0;
    let mut recovered = 0;
    for (v, out) in baseline.iter().zip(outcomes) {
        if !out.is_recovered() {
            continue;
        }
        recovered += 1;
        let later = Clock::simulated(v.sim.clock().now().0 + 3_600_000);
        let verdict = impersonate(
            &v.knowledge,
            out,
            v.sim.server().endpoint(),
            ImpersonationMode::Forge,
            &mut rng,
            &later,
            &mut CostLedger::default(),
        );
        accepted += verdict.is_accept() as usize;
    }
    let mut rejected = 0;
    let mut insufficient = 0;
    for v in improved {
        let out = attack_improved(&v.knowledge);
        if out.status != AttackStatus::InsufficientKnowledge {
            continue;
        }
        insufficient += 1;
        let later = Clock::simulated(v.sim.clock().now().0 + 1_000);
        let verdict = impersonate(
            &v.knowledge,
            &out,
            v.sim.server().endpoint(),
            ImpersonationMode::Forge,
            &mut rng,
            &later,
            &mut CostLedger::default(),
        );
        rejected += (!verdict.is_accept()) as usize;
    }
    let text = format!(
        "baseline forged logins accepted {accepted}/{recovered}; improved forged logins rejected {rejected}/{insufficient}"
    );
    check(
        recovered == 100 && accepted == recovered && insufficient == 100 && rejected == insufficient,
        text.clone(),
        text,
    )
}

// 4. Resistance of the improved scheme.
fn improved_resistance(victims: &[ImprovedVictim]) -> Verdict {
    let mut rng = SeededRng::new(505);
    let insufficient =
        victims.iter().filter(|v| attack_improved(&v.knowledge).status == AttackStatus::InsufficientKnowledge).count();
    let mut attempts = 0;
    let mut matches = 0;
    for v in victims {
        for _ in 0..100 {
            let guess = guess_timestamps(&v.knowledge, &mut rng);
            attempts += 1;
            if forge_with_guessed_timestamps(&v.knowledge, guess, &v.password) == Some(v.honest_key) {
                matches += 1;
            }
        }
    }
    let mut flipped = 0;
    for v in victims {
        let out = attack_improved(&v.knowledge.clone().grant_timestamps(v.grant));
        if out.status == AttackStatus::Recovered
            && out.recovered_password.as_ref() == Some(&v.password)
            && out.forged_session_key == Some(v.honest_key)
        {
            flipped += 1;
        }
    }
    let text = format!(
        "insufficient_knowledge {insufficient}/100; guessed-timestamp forgeries matching {matches}/{attempts}; \
         with true (T1, T2) recovered {flipped}/100"
    );
    check(insufficient == 100 && attempts == 10_000 && matches == 0 && flipped == 100, text.clone(), text)
}

// 5. Cost reconciliation.
fn costs() -> Verdict {
    // Hash counts derived by hand from the protocol equations, per phase:
    // (registration, login, authentication).
    let expected = [(Scheme::Baseline, (3, 3, 6)), (Scheme::Improved, (5, 7, 12))];
    let mut ok = true;
    let mut lines = Vec::new();
    for (scheme, (reg, login, auth)) in expected {
        let ledger = measure_costs(scheme, &Config::default()).map_err(|e| e.to_string())?;
        let report = cost_report(scheme, &ledger);
        let wire = report.cell("communication bits").unwrap();
        let storage = report.cell("card storage bits").unwrap();
        ok &= wire.agrees && storage.agrees;
        let measured = (
            ledger.hashes_in(Phase::Registration),
            ledger.hashes_in(Phase::Login),
            ledger.hashes_in(Phase::Authentication),
        );
        ok &= measured == (reg, login, auth);
        ok &= ledger.modexps(Phase::Registration, Principal::User) == 0;
        let la = report.cell("hashes (login+auth)").unwrap();
        let all = report.cell("hashes (all phases)").unwrap();
        lines.push(format!(
            "{scheme}: wire {}/{} bits, card {}/{} bits, hashes reg {} login {} auth {} \
             (login+auth {} vs {}, all {} vs {})",
            wire.measured,
            wire.published,
            storage.measured,
            storage.published,
            measured.0,
            measured.1,
            measured.2,
            la.measured,
            la.published,
            all.measured,
            all.published
        ));
    }
    let text = lines.join("; ");
    check(ok, format!("{text}; hash differences documented per phase"), text)
}

// 6. Fuzzy extractor tolerance.
fn fuzzy() -> Verdict {
    let mut rng = SeededRng::new(606);
    let fx = FuzzyExtractor::default();
    let t = fx.repetition();
    let mut reps = 0;
    let mut bad = 0;
    for n in 0..1000 {
        let b = BiometricTemplate::random(fx.template_bits(), &mut rng, "t");
        let (key, helper) = fx.gen(&b, &mut rng).map_err(|e| e.to_string())?;
        let mut readings = vec![b.clone()];
        readings.push(fx.rescan(&b, 128, &mut rng).map_err(|e| e.to_string())?);
        for _ in 0..4 {
            let k = rng.below(129);
            readings.push(fx.rescan(&b, k, &mut rng).map_err(|e| e.to_string())?);
        }
        if n < 4 {
            // Every single-position flip, exhaustively.
            for pos in 0..fx.template_bits() {
                readings.push(flip_positions(&b, &[pos]));
            }
            // Every position within one block, combined with one flip in
            // each other block.
            for j in 0..t {
                let positions: Vec<usize> = (0..128).map(|blk| blk * t + (j + blk) % t).collect();
                readings.push(flip_positions(&b, &positions));
            }
        }
        for r in &readings {
            reps += 1;
            if fx.rep(r, &helper).map_err(|e| e.to_string())? != key {
                bad += 1;
            }
        }
    }

    let mut refused = [0usize; 2];
    for (s, scheme) in [Scheme::Baseline, Scheme::Improved].into_iter().enumerate() {
        let mut sim = Simulation::new(scheme, &config(660 + s as u64)).map_err(|e| e.to_string())?;
        let users: Vec<String> = (0..100).map(|_| label('f', &mut rng)).collect();
        for u in &users {
            let pw = label('p', &mut rng);
            sim.enroll(u, &pw).map_err(|e| e.to_string())?;
        }
        for u in &users {
            for _ in 0..10 {
                let r = sim.start_login(u, &LoginOptions { stranger: true, ..Default::default() });
                if matches!(r, Err(ref e) if e.code() == "local-refusal") {
                    refused[s] += 1;
                }
            }
        }
    }
    let text = format!(
        "rep exact on {}/{reps} readings within 1 flip per block; stranger templates refused: baseline {}/1000, improved {}/1000",
        reps - bad,
        refused[0],
        refused[1]
    );
    check(bad == 0 && refused.iter().all(|r| *r >= 999), text.clone(), text)
}

// 7. Tampering, replay, and staleness.
fn robustness() -> Verdict {
    let mut rng = SeededRng::new(707);
    let mut lines = Vec::new();
    let mut ok = true;
    for scheme in [Scheme::Baseline, Scheme::Improved] {
        let mut sim = Simulation::new(scheme, &config(770)).map_err(|e| e.to_string())?;
        sim.set_latency(25);
        sim.enroll("alice", "alice-pw").map_err(|e| e.to_string())?;
        let fields = wire_fields(scheme);
        let mut rejected = 0;
        for trial in 0..1000 {
            let field = fields[trial % fields.len()];
            let mask = Field128::ZERO.with_bit_flipped(rng.below(128));
            let (dir, _) = locate_field(scheme, field).map_err(|e| e.to_string())?;
            let i = sim.start_login("alice", &LoginOptions::default()).map_err(|e| e.to_string())?;
            let rejected_here = if dir == Direction::UserToServer {
                sim.tamper(i, field, mask).map_err(|e| e.to_string())?;
                sim.respond(i).is_err() || sim.finish(i).is_err()
            } else {
                sim.respond(i).map_err(|e| e.to_string())?;
                sim.tamper(i, field, mask).map_err(|e| e.to_string())?;
                sim.finish(i).is_err()
            };
            if rejected_here && !sim.session(i).map_err(|e| e.to_string())?.keys_agree() {
                rejected += 1;
            }
            sim.advance(10);
        }

        // Replays of recorded honest logins after the window.
        let honest: Vec<usize> = (0..100)
            .map(|_| sim.run_honest("alice", &LoginOptions::default()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        sim.advance(sim.window().0 + 1);
        let mut replay_stale = 0;
        let mut modexp_free = 0;
        for i in honest {
            let before = sim.ledger().clone();
            let j = sim.replay_login(i).map_err(|e| e.to_string())?;
            if matches!(sim.respond(j), Err(ref e) if e.code() == "stale") {
                replay_stale += 1;
            }
            let after = sim.ledger();
            let exps = after.modexps(Phase::Authentication, Principal::Server)
                - before.modexps(Phase::Authentication, Principal::Server);
            let hashes = after.hashes(Phase::Authentication, Principal::Server)
                - before.hashes(Phase::Authentication, Principal::Server);
            // The improved server derives T3 (one hash per stored record)
            // before it can check freshness.
            let allowed_hashes = if scheme == Scheme::Improved { 1 } else { 0 };
            if exps == 0 && hashes == allowed_hashes {
                modexp_free += 1;
            }
        }

        // Fresh logins from a user clock that is too far ahead.
        let mut stale_fresh = 0;
        sim.set_skew(sim.window().0 as i64 + 500);
        for _ in 0..100 {
            let before = sim.ledger().modexps(Phase::Authentication, Principal::Server);
            let i = sim.start_login("alice", &LoginOptions::default()).map_err(|e| e.to_string())?;
            let stale = matches!(sim.respond(i), Err(ref e) if e.code() == "stale");
            if stale && sim.ledger().modexps(Phase::Authentication, Principal::Server) == before {
                stale_fresh += 1;
            }
        }
        sim.set_skew(0);

        ok &= rejected == 1000 && replay_stale == 100 && modexp_free == 100 && stale_fresh == 100;
        lines.push(format!(
            "{scheme}: tampered {rejected}/1000 rejected, late replays {replay_stale}/100 stale \
             ({modexp_free}/100 before any modexp), skewed logins {stale_fresh}/100 stale"
        ));
    }
    let text = lines.join("; ");
    check(ok, text.clone(), text)
}

// 8. Determinism of shipped scenarios.
fn determinism() -> Verdict {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let pinned = include_str!("../testdata/scenario_digests.txt");
    let mut checked = 0;
    let mut ok = true;
    let mut failures = Vec::new();
    for line in pinned.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (name, want) = line.split_once(' ').ok_or("bad digest line")?;
        let text = std::fs::read_to_string(format!("{dir}/{name}.scenario")).map_err(|e| e.to_string())?;
        let script = ScenarioScript::parse(&text).map_err(|e| e.to_string())?;
        let run = || -> Result<(ScenarioReport, String), String> {
            let r = run_scenario(&script, &Config::default()).map_err(|e| e.to_string())?;
            let mut h = Sha256::new();
            h.update(r.to_json().as_bytes());
            for t in &r.transcripts {
                h.update(t.to_bytes());
            }
            Ok((r, h.finalize().iter().map(|b| format!("{b:02x}")).collect()))
        };
        let (a, da) = run()?;
        let (b, db) = run()?;
        let same = a.to_json() == b.to_json() && da == db && da == want;
        if !same {
            failures.push(name.to_string());
        }
        ok &= same;
        checked += 1;
    }
    let shipped = std::fs::read_dir(dir).map_err(|e| e.to_string())?.count();
    ok &= checked == shipped;
    let text = format!(
        "{checked}/{shipped} shipped scenarios replay byte-identically and match digests pinned on the reference platform{}",
        if failures.is_empty() { String::new() } else { format!(" (mismatch: {})", failures.join(", ")) }
    );
    check(ok, text.clone(), text)
}

fn report(n: usize, title: &str, started: Instant, v: &Verdict) -> bool {
    let (tag, detail) = match v {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n} [{tag}] {title}: {detail} ({:.2}s)", started.elapsed().as_secs_f64());
    v.is_ok()
}

fn main() -> ExitCode {
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "honest key agreement", t, &honest_agreement());

    let t = Instant::now();
    let (c2, victims, outcomes) = match baseline_victims() {
        Ok(v) => {
            let (verdict, outcomes) = baseline_attack(&v, t);
            (verdict, v, outcomes)
        }
        Err(e) => (Err(e), Vec::new(), Vec::new()),
    };
    all &= report(2, "baseline dictionary attack", t, &c2);

    let t = Instant::now();
    let improved = improved_victims();
    let c3 = match &improved {
        Ok(iv) => impersonation(&victims, &outcomes, iv),
        Err(e) => Err(e.clone()),
    };
    all &= report(3, "impersonation", t, &c3);

    let t = Instant::now();
    let c4 = match &improved {
        Ok(iv) => improved_resistance(iv),
        Err(e) => Err(e.clone()),
    };
    all &= report(4, "improved scheme resistance", t, &c4);

    let t = Instant::now();
    all &= report(5, "cost reconciliation", t, &costs());

    let t = Instant::now();
    all &= report(6, "fuzzy extractor tolerance", t, &fuzzy());

    let t = Instant::now();
    all &= report(7, "tampering, replay and staleness", t, &robustness());

    let t = Instant::now();
    all &= report(8, "deterministic replay", t, &determinism());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
