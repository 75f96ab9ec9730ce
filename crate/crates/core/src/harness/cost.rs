use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Field128;
use crate::scheme::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Registration,
    Login,
    Authentication,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principal {
    User,
    Server,
    Adversary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEntry {
    pub label: String,
    pub bits: u64,
}

/// Card storage in two units: protocol words (each stored item is one
/// 128-bit word, helper data included) and raw serialized bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageEntry {
    pub label: String,
    pub items: Vec<String>,
    pub words: u64,
    pub raw_bits: u64,
}

impl StorageEntry {
    pub fn word_bits(&self) -> u64 {
        self.words * Field128::BITS
    }
}

/// Per-run counters: hash and exponentiation calls per phase and principal,
/// bits on the wire per message, and card storage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    #[serde(with = "counter_list")]
    hashes: BTreeMap<(Phase, Principal), u64>,
    #[serde(with = "counter_list")]
    modexps: BTreeMap<(Phase, Principal), u64>,
    wire: Vec<WireEntry>,
    storage: Vec<StorageEntry>,
}

impl CostLedger {
    pub(crate) fn count_hash(&mut self, phase: Phase, principal: Principal) {
        *self.hashes.entry((phase, principal)).or_default() += 1;
    }

    pub(crate) fn count_modexp(&mut self, phase: Phase, principal: Principal) {
        *self.modexps.entry((phase, principal)).or_default() += 1;
    }

    /// Bits are taken from the serialized message, never from a layout table.
    pub fn record_wire(&mut self, label: impl Into<String>, bytes: &[u8]) {
        self.wire.push(WireEntry { label: label.into(), bits: bytes.len() as u64 * 8 });
    }

    pub fn record_storage(&mut self, label: impl Into<String>, items: &[(&str, usize)]) {
        self.storage.push(StorageEntry {
            label: label.into(),
            items: items.iter().map(|(n, _)| n.to_string()).collect(),
            words: items.len() as u64,
            raw_bits: items.iter().map(|(_, b)| *b as u64).sum(),
        });
    }

    pub fn hashes(&self, phase: Phase, principal: Principal) -> u64 {
        self.hashes.get(&(phase, principal)).copied().unwrap_or(0)
    }

    pub fn hashes_in(&self, phase: Phase) -> u64 {
        self.hashes.iter().filter(|((p, _), _)| *p == phase).map(|(_, n)| n).sum()
    }

    pub fn hash_total(&self) -> u64 {
        self.hashes.values().sum()
    }

    pub fn modexps(&self, phase: Phase, principal: Principal) -> u64 {
        self.modexps.get(&(phase, principal)).copied().unwrap_or(0)
    }

    pub fn modexp_total(&self) -> u64 {
        self.modexps.values().sum()
    }

    pub fn wire(&self) -> &[WireEntry] {
        &self.wire
    }

    pub fn wire_bits(&self) -> u64 {
        self.wire.iter().map(|w| w.bits).sum()
    }

    pub fn storage(&self) -> &[StorageEntry] {
        &self.storage
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (k, v) in &other.hashes {
            *self.hashes.entry(*k).or_default() += v;
        }
        for (k, v) in &other.modexps {
            *self.modexps.entry(*k).or_default() += v;
        }
        self.wire.extend(other.wire.iter().cloned());
        self.storage.extend(other.storage.iter().cloned());
    }

    /// Flattened `(phase, principal, hashes, modexps)` rows for reports.
    pub fn rows(&self) -> Vec<CostRow> {
        let mut keys: Vec<_> = self.hashes.keys().chain(self.modexps.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(phase, principal)| CostRow {
                phase,
                principal,
                hashes: self.hashes(phase, principal),
                modexps: self.modexps(phase, principal),
            })
            .collect()
    }
}

/// Counter maps go to JSON as `[[phase, principal, count], ...]`.
mod counter_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{Phase, Principal};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(Phase, Principal), u64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|((a, b), n)| (*a, *b, *n)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(Phase, Principal), u64>, D::Error> {
        let v: Vec<(Phase, Principal, u64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(a, b, n)| ((a, b), n)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub phase: Phase,
    pub principal: Principal,
    pub hashes: u64,
    pub modexps: u64,
}

/// Published per-scheme figures, in hash invocations and bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedCosts {
    pub hashes: u64,
    pub wire_bits: u64,
    pub storage_bits: u64,
}

impl PublishedCosts {
    pub fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Baseline => PublishedCosts { hashes: 11, wire_bits: 128 * 7, storage_bits: 128 * 8 },
            Scheme::Improved => PublishedCosts { hashes: 21, wire_bits: 128 * 8, storage_bits: 128 * 10 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCell {
    pub metric: String,
    pub published: u64,
    pub measured: u64,
    pub agrees: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostComparison {
    pub scheme: Scheme,
    pub cells: Vec<CostCell>,
    pub per_phase: Vec<CostRow>,
    pub warnings: Vec<String>,
}

impl CostComparison {
    pub fn cell(&self, metric: &str) -> Option<&CostCell> {
        self.cells.iter().find(|c| c.metric == metric)
    }

    pub fn render(&self) -> String {
        let mut out = format!("cost comparison: {}\n", self.scheme);
        for c in &self.cells {
            out.push_str(&format!(
                "  {:<28} published {:>6}  measured {:>6}  {}{}\n",
                c.metric,
                c.published,
                c.measured,
                if c.agrees { "agree" } else { "DIFFER" },
                if c.note.is_empty() { String::new() } else { format!("  ({})", c.note) },
            ));
        }
        out.push_str("  per phase:\n");
        for r in &self.per_phase {
            out.push_str(&format!(
                "    {:<15} {:<10} hashes {:>3}  modexp {:>3}\n",
                format!("{:?}", r.phase).to_lowercase(),
                format!("{:?}", r.principal).to_lowercase(),
                r.hashes,
                r.modexps
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out
    }
}

/// Compares one honest run's ledger with the published figures.
///
/// The hash figure is compared under two readings: login plus
/// authentication only, and all phases including registration.
pub fn cost_report(scheme: Scheme, ledger: &CostLedger) -> CostComparison {
    let published = PublishedCosts::for_scheme(scheme);
    let mut warnings = Vec::new();

    let session_hashes =
        ledger.hashes_in(Phase::Login) + ledger.hashes_in(Phase::Authentication);
    let all_hashes = session_hashes + ledger.hashes_in(Phase::Registration);
    if ledger.hashes_in(Phase::Authentication) == 0 {
        warnings.push("no authentication phase recorded; hash figures are partial".into());
    }
    if ledger.hashes_in(Phase::Registration) == 0 {
        warnings.push("no registration recorded; all-phase hash figure is partial".into());
    }

    let login_auth = CostCell {
        metric: "hashes (login+auth)".into(),
        published: published.hashes,
        measured: session_hashes,
        agrees: session_hashes == published.hashes,
        note: signed_delta(session_hashes, published.hashes),
    };
    let with_registration = CostCell {
        metric: "hashes (all phases)".into(),
        published: published.hashes,
        measured: all_hashes,
        agrees: all_hashes == published.hashes,
        note: signed_delta(all_hashes, published.hashes),
    };

    let wire_bits = ledger.wire_bits();
    if ledger.wire().len() < 2 {
        warnings.push(format!(
            "only {} wire message(s) recorded; communication figure is partial",
            ledger.wire().len()
        ));
    }
    let wire = CostCell {
        metric: "communication bits".into(),
        published: published.wire_bits,
        measured: wire_bits,
        agrees: wire_bits == published.wire_bits,
        note: format!("{} messages", ledger.wire().len()),
    };

    let storage = match ledger.storage().last() {
        Some(s) => CostCell {
            metric: "card storage bits".into(),
            published: published.storage_bits,
            measured: s.word_bits(),
            agrees: s.word_bits() == published.storage_bits,
            note: format!("{} words; {} raw serialized bits", s.words, s.raw_bits),
        },
        None => {
            warnings.push("no card issued; storage figure unavailable".into());
            CostCell {
                metric: "card storage bits".into(),
                published: published.storage_bits,
                measured: 0,
                agrees: false,
                note: "missing".into(),
            }
        }
    };

    CostComparison {
        scheme,
        cells: vec![login_auth, with_registration, wire, storage],
        per_phase: ledger.rows(),
        warnings,
    }
}

fn signed_delta(measured: u64, published: u64) -> String {
    let d = measured as i64 - published as i64;
    if d == 0 {
        String::new()
    } else {
        format!("delta {d:+}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_gives_partial_report() {
        let report = cost_report(Scheme::Baseline, &CostLedger::default());
        assert!(report.warnings.len() >= 3);
        assert!(!report.cell("card storage bits").unwrap().agrees);
    }

    #[test]
    fn wire_bits_come_from_bytes() {
        let mut l = CostLedger::default();
        l.record_wire("login", &[0u8; 64]);
        l.record_wire("reply", &[0u8; 48]);
        assert_eq!(l.wire_bits(), 896);
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = CostLedger::default();
        a.count_hash(Phase::Login, Principal::User);
        let mut b = CostLedger::default();
        b.count_hash(Phase::Login, Principal::User);
        b.count_modexp(Phase::Login, Principal::User);
        a.merge(&b);
        assert_eq!(a.hashes(Phase::Login, Principal::User), 2);
        assert_eq!(a.modexp_total(), 1);
    }
}
