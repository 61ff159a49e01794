//! Check records and verification reports shared by every pipeline.

use serde::{Deserialize, Serialize};

use crate::opalg::{Comparison, Verdict};

/// One named check with its residual, tolerance and outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn from_comparison(name: impl Into<String>, c: &Comparison) -> Self {
        CheckRecord {
            name: name.into(),
            residual: c.deviation,
            tolerance: c.tolerance,
            verdict: c.verdict,
            witness: c.witness.clone(),
            note: None,
        }
    }

    /// Passes when `residual ≤ tolerance` (and the residual is finite).
    pub fn residual(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let verdict = if residual.is_finite() && residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        CheckRecord { name: name.into(), residual, tolerance, verdict, witness: None, note: None }
    }

    /// A yes/no expectation; the residual is 0 on pass and 1 on failure.
    pub fn boolean(name: impl Into<String>, ok: bool) -> Self {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        CheckRecord { name: name.into(), residual: f64::from(!ok), tolerance: 0.0, verdict, witness: None, note: None }
    }

    pub fn with_witness(mut self, witness: Option<String>) -> Self {
        self.witness = witness;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Window, phase and seed a report was produced under.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// Collected checks of one run; checks are kept sorted by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub command: String,
    pub input: String,
    pub environment: Environment,
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub data: Option<serde_json::Value>,
    pub overall: Verdict,
}

impl VerificationReport {
    pub fn new(command: impl Into<String>, input: impl Into<String>, environment: Environment) -> Self {
        VerificationReport {
            command: command.into(),
            input: input.into(),
            environment,
            checks: Vec::new(),
            notes: Vec::new(),
            data: None,
            overall: Verdict::Inconclusive,
        }
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
        self.finish();
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = CheckRecord>) {
        self.checks.extend(checks);
        self.finish();
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    fn finish(&mut self) {
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
        self.overall = overall(&self.checks);
    }

    pub fn passed(&self) -> bool {
        self.overall == Verdict::Pass
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Pass iff there is at least one check and every check passes.
pub fn overall(checks: &[CheckRecord]) -> Verdict {
    if checks.is_empty() {
        Verdict::Inconclusive
    } else if checks.iter().all(CheckRecord::passed) {
        Verdict::Pass
    } else if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_requires_every_check() {
        let mut r = VerificationReport::new("verify", "x", Environment::default());
        assert_eq!(r.overall, Verdict::Inconclusive);
        r.push(CheckRecord::residual("b", 0.0, 1e-10));
        r.push(CheckRecord::residual("a", 1.0, 1e-10));
        assert_eq!(r.overall, Verdict::Fail);
        assert_eq!(r.checks[0].name, "a");
        assert!(!CheckRecord::residual("nan", f64::NAN, 1.0).passed());
    }
}
