//! Report records, JSON-lines emission and the summary table.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use aas_core::coherence::{AlignmentOutcome, HarmonyOutcome, PenaltyOutcome, PsrOutcome};
use aas_core::dynamics::{RateReport, TrajectoryMetrics};
use aas_core::hierarchy::{DominanceReport, RollupReport, WholePartReport};
use aas_core::ontology::MergeGroup;
use aas_core::representation::{DizzinessVerdict, Sequentiality, TruthFloorCaps};
use aas_core::teleology::{DriftDecomposition, DriftLedger, JusticeReport, PerfectionReport, Verdict};
use aas_core::{AuditReport, ScoreBreakdown, TrajectorySummary};
use serde::{Deserialize, Serialize};

use crate::config::ClauseConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    #[value(name = "json-lines")]
    JsonLines,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub epsilon: f64,
    pub channels: usize,
    pub ids: Vec<String>,
    pub sessions: usize,
    pub config: ClauseConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc: Option<PenaltyOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psr: Option<PsrOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmony: Option<HarmonyOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationOutput {
    pub dizziness: DizzinessVerdict,
    pub trace_mass: f64,
    pub sequentiality: Sequentiality,
    /// Absent while the memory trace has no mass.
    pub reason: Option<f64>,
    pub rational_set: Vec<usize>,
    /// Absent when a configured rational channel is below the floor.
    pub truth_floor: Option<TruthFloorCaps>,
    pub floor_violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub t: u64,
    pub breakdown: ScoreBreakdown,
    pub penalties: Penalties,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<RepresentationOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<RollupReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perfection: Option<PerfectionReport>,
}

impl SessionScore {
    pub fn penalty_total(&self) -> f64 {
        let p = &self.penalties;
        p.pc.as_ref().map_or(0.0, |o| o.penalty)
            + p.psr.as_ref().map_or(0.0, |o| o.penalty)
            + p.harmony.as_ref().map_or(0.0, |o| o.harm)
            + p.alignment.as_ref().map_or(0.0, |o| o.harm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub summary: TrajectorySummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<TrajectoryMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law_fixity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windowless: Option<AuditReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup: Option<Vec<MergeGroup>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyRecord {
    pub dominance: DominanceReport,
    pub whole_part: WholePartReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub scores: Vec<f64>,
    /// Absent when the stream is too short to fill one window.
    pub ledger: Option<DriftLedger>,
    pub decomposition: DriftDecomposition,
    pub verdict: Verdict,
    pub justice: JusticeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksRecord {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    Config(ConfigRecord),
    Session(SessionScore),
    Trajectory(TrajectoryRecord),
    Audit(AuditRecord),
    Hierarchy(HierarchyRecord),
    Drift(DriftRecord),
    Checks(ChecksRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: ConfigRecord,
    pub sessions: Vec<SessionScore>,
    pub trajectory: Option<TrajectoryRecord>,
    pub audit: Option<AuditRecord>,
    pub hierarchy: Option<HierarchyRecord>,
    pub drift: Option<DriftRecord>,
    pub checks: ChecksRecord,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.passed
    }

    /// Records in emission order.
    pub fn records(&self) -> Vec<Record> {
        let mut out = vec![Record::Config(self.config.clone())];
        out.extend(self.sessions.iter().cloned().map(Record::Session));
        out.extend(self.trajectory.clone().map(Record::Trajectory));
        out.extend(self.audit.clone().map(Record::Audit));
        out.extend(self.hierarchy.clone().map(Record::Hierarchy));
        out.extend(self.drift.clone().map(Record::Drift));
        out.push(Record::Checks(self.checks.clone()));
        out
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let mut config = None;
        let mut checks = None;
        let mut report_sessions = Vec::new();
        let (mut trajectory, mut audit, mut hierarchy, mut drift) = (None, None, None, None);
        for r in records {
            match r {
                Record::Config(c) => config = Some(c),
                Record::Session(s) => report_sessions.push(s),
                Record::Trajectory(t) => trajectory = Some(t),
                Record::Audit(a) => audit = Some(a),
                Record::Hierarchy(h) => hierarchy = Some(h),
                Record::Drift(d) => drift = Some(d),
                Record::Checks(c) => checks = Some(c),
            }
        }
        Ok(Self {
            config: config.ok_or_else(|| CliError::validation("report has no config record"))?,
            sessions: report_sessions,
            trajectory,
            audit,
            hierarchy,
            drift,
            checks: checks.ok_or_else(|| CliError::validation("report has no checks record"))?,
        })
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CliError::io("report", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| CliError::Line { line: i + 1, message: format!("bad report record: {e}") })?;
            records.push(rec);
        }
        Self::from_records(records)
    }
}

pub fn emit(report: &Report, format: Format, out: &mut impl Write) -> io::Result<()> {
    match format {
        Format::JsonLines => emit_records(&report.records(), out),
        Format::Table => out.write_all(render_table(report).as_bytes()),
    }?;
    out.flush()
}

pub fn emit_records(records: &[Record], out: &mut impl Write) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    let c = &report.config;
    let _ = writeln!(s, "epsilon {}  channels {}  sessions {}", c.epsilon, c.channels, c.sessions);
    let _ = writeln!(
        s,
        "{:>6} {:>10} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "t", "S", "rho", "H", "apper", "pc", "psr", "harmony", "align", "penalties"
    );
    for row in &report.sessions {
        let b = &row.breakdown;
        let p = &row.penalties;
        let _ = writeln!(
            s,
            "{:>6} {:>10.6} {:>8.4} {:>8.4} {:>8.4} {:>10} {:>10} {:>10} {:>10} {:>10.6}",
            row.t,
            b.total,
            b.peak_share,
            b.contrib_entropy,
            b.apper_level,
            opt(p.pc.as_ref().map(|o| o.penalty)),
            opt(p.psr.as_ref().map(|o| o.penalty)),
            opt(p.harmony.as_ref().map(|o| o.harm)),
            opt(p.alignment.as_ref().map(|o| o.harm)),
            row.penalty_total()
        );
    }
    if let Some(t) = &report.trajectory {
        if let Some(f) = t.law_fixity {
            let _ = writeln!(s, "law fixity {f:.6}");
        }
    }
    if let Some(a) = &report.audit {
        if let Some(w) = &a.windowless {
            let _ = writeln!(s, "windowless audit {}", if w.passed() { "pass" } else { "FAIL" });
        }
        if let Some(d) = &a.dedup {
            let groups: Vec<String> = d.iter().map(|g| format!("{:?}", g.members)).collect();
            let _ = writeln!(s, "dedup groups {}", if groups.is_empty() { "none".into() } else { groups.join(" ") });
        }
        if let Some(r) = &a.rate {
            let _ = writeln!(s, "rate violations {}  flatlines {}", r.violations.len(), r.suspicious_flatlines.len());
        }
    }
    if let Some(h) = &report.hierarchy {
        let dom = h.dominance.stable_dominant.map_or_else(|| "none".into(), |g| g.to_string());
        let _ = writeln!(s, "stable dominant group {dom}");
    }
    if let Some(d) = &report.drift {
        let trigger = d.verdict.trigger.map_or_else(|| "-".into(), |(a, b)| format!("windows {a}..={b}"));
        let _ = writeln!(
            s,
            "verdict {:?} ({trigger})  final S {:.6}  final P {:.6}",
            d.verdict.decision, d.justice.final_score, d.justice.final_perfection
        );
    }
    let failed: Vec<&Check> = report.checks.checks.iter().filter(|c| !c.passed).collect();
    let _ = writeln!(s, "checks {}/{} passed", report.checks.checks.len() - failed.len(), report.checks.checks.len());
    for c in failed {
        let _ = writeln!(s, "  FAIL {}: {}", c.name, c.detail);
    }
    s
}
