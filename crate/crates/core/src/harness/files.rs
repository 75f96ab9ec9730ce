//! Flat-file formats: config, biometric templates, dictionaries, leak
//! bundles, and server state.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Field128, FreshnessWindow, GroupParams, HashAlg, Suite, Timestamp, DEFAULT_G, DEFAULT_P};
use crate::fuzzy::{BiometricTemplate, BitString, FuzzyExtractor, DEFAULT_TEMPLATE_BITS};
use crate::harness::card::LineCursor;
use crate::improved::ImprovedServerRecord;
use crate::scheme::{Identity, Password, Scheme, SessionLeak};

/// A malformed input file, located by 1-based line and byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub what: String,
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(what: &str, line: usize, offset: usize, message: impl Into<String>) -> Self {
        ParseError { what: what.to_string(), line, offset, message: message.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} file, line {} (byte {}): {}", self.what, self.line, self.offset, self.message)
    }
}

/// Deployment configuration, stored as TOML:
///
/// ```toml
/// p = "0xffffffffffffffffffffffffffffc3a7"
/// g = "4"
/// hash = "sha256"
/// delta_t_ms = 2000
/// seed = 1
/// template_bits = 512
/// trust_params = false
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub p: String,
    pub g: String,
    pub hash: HashAlg,
    pub delta_t_ms: u64,
    pub seed: u64,
    pub template_bits: usize,
    /// Skip the primality and subgroup checks for user-supplied `(p, g)`.
    pub trust_params: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            p: format!("{DEFAULT_P:#x}"),
            g: DEFAULT_G.to_string(),
            hash: HashAlg::Sha256,
            delta_t_ms: FreshnessWindow::DEFAULT_MS,
            seed: 1,
            template_bits: DEFAULT_TEMPLATE_BITS,
            trust_params: false,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            let line = text[..offset.min(text.len())].matches('\n').count() + 1;
            ParseError::new("config", line, offset, e.message().to_string())
        })?;
        cfg.suite().map_err(|m| ParseError::new("config", 1, 0, m))?;
        cfg.extractor().map_err(|m| ParseError::new("config", 1, 0, m))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn group(&self) -> Result<GroupParams, String> {
        let p = parse_int(&self.p).ok_or_else(|| format!("p: cannot parse '{}'", self.p))?;
        let g = parse_int(&self.g).ok_or_else(|| format!("g: cannot parse '{}'", self.g))?;
        if p == DEFAULT_P && g == DEFAULT_G {
            return Ok(GroupParams::default());
        }
        if self.trust_params {
            GroupParams::trusted(p, g)
        } else {
            GroupParams::checked(p, g)
        }
        .map_err(|e| e.to_string())
    }

    pub fn suite(&self) -> Result<Suite, String> {
        Ok(Suite::new(self.group()?, self.hash))
    }

    pub fn window(&self) -> FreshnessWindow {
        FreshnessWindow(self.delta_t_ms)
    }

    pub fn extractor(&self) -> Result<FuzzyExtractor, String> {
        FuzzyExtractor::new(self.template_bits).map_err(|e| e.to_string())
    }
}

fn parse_int(s: &str) -> Option<u128> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u128::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

/// Template file: `bits <n>`, optional `label <text>`, then the hex string.
pub fn parse_template(text: &str) -> Result<BiometricTemplate, ParseError> {
    let mut lines = LineCursor::new("template", text);
    let (n, off, line) = lines.next_required()?;
    let bits: usize = line
        .strip_prefix("bits ")
        .and_then(|b| b.trim().parse().ok())
        .ok_or_else(|| ParseError::new("template", n, off, "expected 'bits <length>'"))?;
    let (mut n, mut off, mut line) = lines.next_required()?;
    let mut label = String::new();
    if let Some(l) = line.strip_prefix("label") {
        label = l.trim().to_string();
        (n, off, line) = lines.next_required()?;
    }
    let bits = BitString::from_hex(bits, line).map_err(|e| ParseError::new("template", n, off, e.to_string()))?;
    if let Some((n, off, _)) = lines.next_nonempty() {
        return Err(ParseError::new("template", n, off, "unexpected trailing content"));
    }
    Ok(BiometricTemplate::new(bits, label))
}

/// One candidate per line; blank lines are skipped.
pub fn parse_dictionary(text: &str) -> Result<Vec<Password>, ParseError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let word = raw.trim_end_matches(['\n', '\r']);
        if !word.is_empty() {
            let pw = Password::new(word).map_err(|e| ParseError::new("dictionary", i + 1, offset, e.to_string()))?;
            out.push(pw);
        }
        offset += raw.len();
    }
    Ok(out)
}

pub fn dictionary_to_string(words: &[Password]) -> String {
    words.iter().map(|w| format!("{}\n", w.text())).collect()
}

/// Exported session ephemerals: `r_u <hex>` and optionally `r_s <hex>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakBundle {
    pub r_u: Option<u128>,
    pub r_s: Option<u128>,
}

impl LeakBundle {
    pub fn from_session(leak: SessionLeak, r_s: Option<u128>) -> Self {
        LeakBundle { r_u: Some(leak.r_u), r_s }
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        if let Some(r) = self.r_u {
            out.push_str(&format!("r_u {}\n", Field128::from_u128(r).to_hex()));
        }
        if let Some(r) = self.r_s {
            out.push_str(&format!("r_s {}\n", Field128::from_u128(r).to_hex()));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = LineCursor::new("leak", text);
        let mut bundle = LeakBundle { r_u: None, r_s: None };
        while let Some((n, off, line)) = lines.next_nonempty() {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| ParseError::new("leak", n, off, "expected '<name> <hex>'"))?;
            let value = Field128::from_hex(v).map_err(|e| ParseError::new("leak", n, off, e.to_string()))?.to_u128();
            match k {
                "r_u" => bundle.r_u = Some(value),
                "r_s" => bundle.r_s = Some(value),
                other => return Err(ParseError::new("leak", n, off, format!("unknown entry '{other}'"))),
            }
        }
        Ok(bundle)
    }
}

/// Persisted server: `TRIAUTH-SERVER 1`, `scheme`, `X`, then one line per
/// user. Baseline lines hold the identity; improved lines hold
/// `<ID hex> <T1 ms> <T2 ms>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerState {
    pub scheme: Scheme,
    pub x: u128,
    pub users: Vec<ServerUser>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServerUser {
    Baseline(Identity),
    Improved(ImprovedServerRecord),
}

impl ServerState {
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "TRIAUTH-SERVER 1\nscheme {}\nX {}\n",
            self.scheme,
            Field128::from_u128(self.x).to_hex()
        );
        for u in &self.users {
            match u {
                ServerUser::Baseline(id) => out.push_str(&format!("{}\n", id.word().to_hex())),
                ServerUser::Improved(r) => {
                    out.push_str(&format!("{} {} {}\n", r.id.word().to_hex(), r.t1.0, r.t2.0))
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let what = "server";
        let mut lines = LineCursor::new(what, text);
        let (n, off, header) = lines.next_required()?;
        if header != "TRIAUTH-SERVER 1" {
            return Err(ParseError::new(what, n, off, "missing TRIAUTH-SERVER 1 header"));
        }
        let (n, off, line) = lines.next_required()?;
        let scheme: Scheme = line
            .strip_prefix("scheme ")
            .ok_or_else(|| ParseError::new(what, n, off, "expected 'scheme <name>'"))?
            .parse()
            .map_err(|e: String| ParseError::new(what, n, off, e))?;
        let (n, off, line) = lines.next_required()?;
        let x = line
            .strip_prefix("X ")
            .and_then(|h| Field128::from_hex(h).ok())
            .ok_or_else(|| ParseError::new(what, n, off, "expected 'X <hex>'"))?
            .to_u128();
        let mut users = Vec::new();
        while let Some((n, off, line)) = lines.next_nonempty() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: &str| ParseError::new(what, n, off, m.to_string());
            let id = Identity::from_word(Field128::from_hex(parts[0]).map_err(|e| bad(&e.to_string()))?);
            let user = match (scheme, parts.len()) {
                (Scheme::Baseline, 1) => ServerUser::Baseline(id),
                (Scheme::Improved, 3) => {
                    let t1 = parts[1].parse().map_err(|_| bad("T1 is not a number"))?;
                    let t2 = parts[2].parse().map_err(|_| bad("T2 is not a number"))?;
                    ServerUser::Improved(ImprovedServerRecord { id, t1: Timestamp(t1), t2: Timestamp(t2) })
                }
                _ => return Err(bad("wrong number of columns for this scheme")),
            };
            users.push(user);
        }
        Ok(ServerState { scheme, x, users })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SeededRng;

    #[test]
    fn default_config_round_trips() {
        let cfg = Config::default();
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(Config::parse("").unwrap(), cfg);
    }

    #[test]
    fn config_errors_point_at_the_key() {
        let err = Config::parse("seed = 3\nbogus = 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Config::parse("p = \"0x17\"\ng = \"4\"\n").unwrap_err();
        assert!(err.message.contains("subgroup") || err.message.contains("2^64"), "{}", err.message);
        let trusted = Config::parse("p = \"0x17\"\ng = \"4\"\ntrust_params = true\n").unwrap();
        assert_eq!(trusted.group().unwrap().p(), 23);
        assert!(Config::parse("template_bits = 100\n").is_err());
    }

    #[test]
    fn template_file_round_trip() {
        let mut rng = SeededRng::new(3);
        let t = BiometricTemplate::random(512, &mut rng, "left index");
        assert_eq!(parse_template(&t.to_file_string()).unwrap(), t);
        assert!(parse_template("bits 512\nabcd\n").is_err());
    }

    #[test]
    fn dictionary_lines() {
        let words = parse_dictionary("alpha\nbeta\r\n\ngamma").unwrap();
        let texts: Vec<&str> = words.iter().map(|w| w.text()).collect();
        assert_eq!(texts, ["alpha", "beta", "gamma"]);
        let err = parse_dictionary("ok\nthis-line-is-way-too-long\n").unwrap_err();
        assert_eq!((err.line, err.offset), (2, 3));
    }

    #[test]
    fn leak_and_server_round_trip() {
        let leak = LeakBundle { r_u: Some(77), r_s: None };
        assert_eq!(LeakBundle::parse(&leak.to_file_string()).unwrap(), leak);
        assert!(LeakBundle::parse("r_x 00\n").is_err());

        let state = ServerState {
            scheme: Scheme::Improved,
            x: 12345,
            users: vec![ServerUser::Improved(ImprovedServerRecord {
                id: Identity::new("carol").unwrap(),
                t1: Timestamp(10),
                t2: Timestamp(35),
            })],
        };
        assert_eq!(ServerState::parse(&state.to_file_string()).unwrap(), state);
        let err = ServerState::parse("TRIAUTH-SERVER 1\nscheme baseline\nX 00\n").unwrap_err();
        assert_eq!(err.line, 3);
    }
}
