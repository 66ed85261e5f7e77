use serde::{Deserialize, Serialize};

use crate::numcore::DEFAULT_FD_STEP;

/// One check; `pass ⇔ max_violation ≤ tolerance` (NaN fails).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub probes: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
    pub fd_step: Option<f64>,
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, probes: usize, max_violation: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            probes,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
            seed: None,
            fd_step: None,
            h: None,
            error: None,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(check: impl Into<String>, probes: usize, tolerance: f64, error: impl std::fmt::Display) -> Self {
        let mut r = Self::new(check, probes, f64::NAN, tolerance);
        r.error = Some(error.to_string());
        r
    }

    /// Negative control: passes iff `observed > threshold`; the recorded
    /// violation is `threshold / observed` against tolerance 1.
    pub fn lower_bound(check: impl Into<String>, probes: usize, observed: f64, threshold: f64) -> Self {
        Self::new(check, probes, threshold / observed, 1.0)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = Some(step);
        self
    }

    pub fn with_default_fd_step(self) -> Self {
        self.with_fd_step(DEFAULT_FD_STEP)
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        match &self.error {
            Some(e) => format!("{verdict} {} error: {e}", self.check),
            None => format!(
                "{verdict} {} max_violation={:.3e} tolerance={:.1e} probes={}",
                self.check, self.max_violation, self.tolerance, self.probes
            ),
        }
    }
}

pub fn all_pass(reports: &[VerificationReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_tolerance() {
        assert!(VerificationReport::new("a", 1, 1e-9, 1e-8).pass);
        assert!(!VerificationReport::new("a", 1, 1e-7, 1e-8).pass);
        assert!(!VerificationReport::new("a", 1, f64::NAN, 1e-8).pass);
        assert!(VerificationReport::lower_bound("neg", 1, 0.1, 1e-3).pass);
        assert!(!VerificationReport::lower_bound("neg", 1, 1e-6, 1e-3).pass);
    }

    #[test]
    fn json_has_the_documented_fields() {
        let r = VerificationReport::new("x", 3, 0.5, 1.0).with_seed(7).with_h(0.1);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["check", "probes", "max_violation", "tolerance", "pass", "seed", "fd_step", "h"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v.get("error").is_none());
    }
}
