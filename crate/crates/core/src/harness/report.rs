//! Scenario reports: a structured JSON document and a line summary.

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackOutcome, ImpersonationMode, Verdict};
use crate::crypto::Field128;
use crate::harness::cost::{CostComparison, CostLedger};
use crate::scheme::Scheme;
use crate::transcript::Transcript;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    Ok,
    /// A protocol party rejected the step (freshness, verifier mismatch).
    Rejected,
    /// The step could not run (unknown user, nothing in flight, ...).
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub line: usize,
    pub step: String,
    pub status: StepStatus,
    pub code: Option<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackReport {
    pub session: usize,
    pub outcome: AttackOutcome,
    pub honest_key: Option<Field128>,
    pub key_matches: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpersonationReport {
    pub session: usize,
    pub mode: ImpersonationMode,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub scheme: Option<Scheme>,
    pub seed: Option<u64>,
    pub steps: Vec<StepReport>,
    pub transcripts: Vec<Transcript>,
    pub attacks: Vec<AttackReport>,
    pub impersonations: Vec<ImpersonationReport>,
    pub costs: Vec<CostComparison>,
    pub ledger: Option<CostLedger>,
}

impl ScenarioReport {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StepReport> {
        self.steps.iter().filter(|s| s.status == StepStatus::Failed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.is_empty() {
            out.push_str("empty scenario\n");
            return out;
        }
        out.push_str(&format!(
            "scenario {} ({}, seed {})\n",
            self.scenario,
            self.scheme.map(|s| s.name()).unwrap_or("-"),
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into())
        ));
        for s in &self.steps {
            let status = match s.status {
                StepStatus::Ok => "ok",
                StepStatus::Rejected => "rejected",
                StepStatus::Failed => "FAILED",
            };
            let code = s.code.as_deref().map(|c| format!(" [{c}]")).unwrap_or_default();
            let detail = if s.detail.is_empty() { String::new() } else { format!(": {}", s.detail) };
            out.push_str(&format!("  {:>3}  {:<9}{} {}{}\n", s.line, status, code, s.step, detail));
        }
        for a in &self.attacks {
            out.push_str(&format!(
                "attack on session #{}: {} (work {}, key {})\n",
                a.session,
                a.outcome.status.name(),
                a.outcome.work,
                if a.key_matches { "matches honest key" } else { "no match" }
            ));
            if let Some(r) = &a.outcome.reason {
                out.push_str(&format!("  reason: {r}\n"));
            }
        }
        for i in &self.impersonations {
            let v = match &i.verdict {
                Verdict::Accept => "accept".to_string(),
                Verdict::Reject(c) => format!("reject ({c})"),
            };
            out.push_str(&format!("impersonation ({:?}) after session #{}: {v}\n", i.mode, i.session));
        }
        for c in &self.costs {
            out.push_str(&c.render());
        }
        out
    }
}
