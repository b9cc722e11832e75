//! Verdict records shared by the geometric, analytic and Monte Carlo checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    OutOfTheoremScope,
    Skipped,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::OutOfTheoremScope => "out-of-theorem-scope",
            Verdict::Skipped => "skipped",
        }
    }
}

/// One named check: the measured quantity, the budget it was held to and
/// the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub estimate: f64,
    pub slack: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
}

impl CheckOutcome {
    /// Passes when `estimate <= slack`.
    pub fn at_most(name: impl Into<String>, estimate: f64, slack: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            estimate,
            slack,
            verdict: Verdict::from_bool(estimate <= slack),
            detail: String::new(),
        }
    }

    /// Passes when `lo <= estimate <= hi`; `slack` records `hi`.
    pub fn within(name: impl Into<String>, estimate: f64, lo: f64, hi: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            estimate,
            slack: hi,
            verdict: Verdict::from_bool(estimate >= lo && estimate <= hi),
            detail: format!("band [{lo}, {hi}]"),
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            estimate: if ok { 1.0 } else { 0.0 },
            slack: 1.0,
            verdict: Verdict::from_bool(ok),
            detail: detail.into(),
        }
    }

    pub fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            estimate: f64::NAN,
            slack: f64::NAN,
            verdict: Verdict::Skipped,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }
}

pub fn any_failed(checks: &[CheckOutcome]) -> bool {
    checks.iter().any(|c| c.verdict.is_failure())
}
