//! Report type shared by the structural and replay audits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub t: Option<u64>,
    pub channel: Option<usize>,
    pub detail: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub id: String,
    pub description: String,
    pub passed: bool,
    pub max_abs_diff: f64,
    pub findings: Vec<Finding>,
}

impl ProbeResult {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            passed: true,
            max_abs_diff: 0.0,
            findings: Vec::new(),
        }
    }

    /// Record an observed difference; any nonzero entry is also a finding.
    pub(crate) fn observe(&mut self, t: Option<u64>, channel: Option<usize>, diff: f64, tolerance: f64, detail: &str) {
        let diff = diff.abs();
        self.max_abs_diff = self.max_abs_diff.max(diff);
        if diff > tolerance || diff.is_nan() {
            self.fail(t, channel, diff, detail);
        }
    }

    pub(crate) fn fail(&mut self, t: Option<u64>, channel: Option<usize>, magnitude: f64, detail: &str) {
        self.passed = false;
        self.findings.push(Finding {
            t,
            channel,
            detail: detail.to_owned(),
            magnitude,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub probes: Vec<ProbeResult>,
}

impl AuditReport {
    /// Probes are kept sorted by id so that reports compare byte-for-byte.
    pub fn new(name: impl Into<String>, mut probes: Vec<ProbeResult>) -> Self {
        probes.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            name: name.into(),
            probes,
        }
    }

    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.passed)
    }

    pub fn probe(&self, id: &str) -> Option<&ProbeResult> {
        self.probes.iter().find(|p| p.id == id)
    }
}
