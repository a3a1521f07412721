//! Check reports produced by the verification suite.

/// Outcome of a single check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    /// The tested inequality held within tolerance.
    Pass,
    /// The tested inequality was violated beyond tolerance.
    Fail,
    /// The trajectory did not contain the event the check needs (for
    /// example, extinction was never reached); neither pass nor fail.
    Inconclusive,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

/// One sampled comparison inside a check: at `time`, the measured quantity,
/// the bound it was tested against, and the signed slack `margin`
/// (nonnegative means the inequality held at this sample).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub time: f64,
    pub quantity: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Result of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub check_name: String,
    /// `true` unless the check conclusively failed; inconclusive checks do
    /// not fail a suite.
    pub passed: bool,
    pub status: CheckStatus,
    /// Smallest signed slack over all samples.  `passed` (for conclusive
    /// checks) means `worst_margin >= -tolerance` for the tolerance the
    /// check was run with.
    pub worst_margin: f64,
    pub details: Vec<SampleRecord>,
}

impl VerificationReport {
    /// Build a conclusive report: passes iff `worst_margin >= -tolerance`.
    pub fn conclusive(
        check_name: &str,
        worst_margin: f64,
        tolerance: f64,
        details: Vec<SampleRecord>,
    ) -> Self {
        let ok = worst_margin >= -tolerance;
        VerificationReport {
            check_name: check_name.to_string(),
            passed: ok,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            worst_margin,
            details,
        }
    }

    /// Build an inconclusive report (the check could not be decided).
    pub fn inconclusive(check_name: &str, details: Vec<SampleRecord>) -> Self {
        VerificationReport {
            check_name: check_name.to_string(),
            passed: true,
            status: CheckStatus::Inconclusive,
            worst_margin: 0.0,
            details,
        }
    }
}
