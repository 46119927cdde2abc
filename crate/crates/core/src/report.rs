//! Pass/fail records shared by the verification routines.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Computed and recorded, but not held to a threshold.
    Reported,
}

/// One named check. `margin` is the worst observed ratio to its threshold
/// (below 1 passes) unless the check documents otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub margin: f64,
    pub worst_case: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, margin: f64, worst_case: impl Into<String>) -> Self {
        let status = if pass { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, margin, worst_case: worst_case.into() }
    }

    pub fn reported(name: impl Into<String>, margin: f64, worst_case: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Reported, margin, worst_case: worst_case.into() }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(Check::passed)
}
