//! Runs every enabled clause over a session stream.
//!
//! Order: base breakdowns, ontology audits, dynamics, representation,
//! coherence penalties, hierarchy, teleology, then invariant checks. Clauses
//! read the snapshots and never feed each other.

use aas_core::coherence::{alignment_penalty, harmony_penalty, pc_penalty, psr_penalty};
use aas_core::dynamics::{rate_check, trajectory_metrics};
use aas_core::hierarchy::{dominance_scan, level_rollup, whole_part_check};
use aas_core::ontology::{dedup_plan, windowless_audit, StaticRedundancy};
use aas_core::representation::{
    delta_phi_plus, dizziness_scan, infer_laws, law_fixity, reason_score, sequentiality, truth_floor_caps,
    MemoryTrace, SharesAsLaw,
};
use aas_core::teleology::{
    drift_classify, drift_decomposition, governance_decide, justice_harness, variety_order_perfection,
    GovernancePolicy, Verdict, Decision,
};
use aas_core::{score_session, trajectory_summary, SessionSnapshot};
use rayon::prelude::*;

use crate::config::Plan;
use crate::error::{ClauseContext, Result};
use crate::report::{
    AuditRecord, Check, ChecksRecord, ConfigRecord, DriftRecord, HierarchyRecord, Penalties, Report,
    RepresentationOutput, SessionScore, TrajectoryRecord,
};
use crate::session::SessionFile;

const TOL: f64 = 1e-12;

/// True unless `AAS_NO_PARALLEL=1`.
pub fn parallel_from_env() -> bool {
    std::env::var("AAS_NO_PARALLEL").map_or(true, |v| v != "1")
}

fn map_indexed<T: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = if parallel {
        (0..n).into_par_iter().map(&f).collect()
    } else {
        (0..n).map(&f).collect()
    };
    // First error in stream order, regardless of scheduling.
    results.into_iter().collect()
}

pub fn run_pipeline(file: &SessionFile, plan: &Plan, parallel: bool) -> Result<Report> {
    let stream = &file.snapshots;
    let k = &plan.kernel;
    let n = stream.len();

    // Habit traces: `traces[t]` holds the history before session t.
    let traces = match &plan.representation {
        Some(rep) => {
            let m = file.header.channels;
            let mut tr = MemoryTrace::new(rep.clause.lambda, m).clause("representation")?;
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                out.push(tr.clone());
                let rise = match t {
                    0 => vec![0.0; m],
                    _ => delta_phi_plus(&stream[t - 1], &stream[t], k).clause("representation")?,
                };
                tr = tr.step(&rise).clause("representation")?;
            }
            out.push(tr);
            out
        }
        None => Vec::new(),
    };

    let sessions = map_indexed(n, parallel, |t| session_score(stream, t, plan, &traces))?;
    let breakdowns: Vec<_> = sessions.iter().map(|s| s.breakdown.clone()).collect();

    let trajectory = TrajectoryRecord {
        summary: trajectory_summary(stream, k).clause("trajectory")?,
        metrics: match plan.dynamics {
            Some(_) => Some(trajectory_metrics(stream, k).clause("dynamics")?),
            None => None,
        },
        law_fixity: match &plan.representation {
            Some(rep) => Some(law_fixity(&rep.prior, &infer_laws(&breakdowns, &SharesAsLaw)).clause("representation")?),
            None => None,
        },
    };

    let audit = if plan.audit.is_some() || plan.dynamics.is_some() {
        let windowless = plan
            .audit
            .as_ref()
            .map(|a| windowless_audit(stream, &a.probes, k, &StaticRedundancy));
        let dedup = match &plan.audit {
            Some(a) => Some(dedup_plan(stream, a.dedup_tolerance, k).clause("audit")?),
            None => None,
        };
        let rate = match &plan.dynamics {
            Some(d) if n >= 2 => Some(rate_check(stream, &d.cap, d.dt).clause("dynamics")?),
            _ => None,
        };
        Some(AuditRecord { windowless, dedup, rate })
    } else {
        None
    };

    let hierarchy = match &plan.hierarchy {
        Some(h) => {
            let group_r: Vec<Vec<f64>> = stream
                .iter()
                .map(|s| s.rs().iter().map(|r| r * h.group_redundancy_scale).collect())
                .collect();
            Some(HierarchyRecord {
                dominance: dominance_scan(stream, &h.view, k).clause("hierarchy")?,
                whole_part: whole_part_check(stream, &h.view, &group_r, k).clause("hierarchy")?,
            })
        }
        None => None,
    };

    let drift = match &plan.teleology {
        Some(t) => {
            let scores: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
            let ledger = if scores.len() > t.window {
                Some(drift_classify(&scores, t.window, t.eta, t.stride).clause("teleology")?)
            } else {
                None
            };
            let policy = GovernancePolicy { promote_after: t.promote_after, rollback_after: t.rollback_after };
            let verdict = match &ledger {
                Some(l) => governance_decide(l, &policy).clause("teleology")?,
                None => Verdict { decision: Decision::Hold, trigger: None },
            };
            Some(DriftRecord {
                decomposition: drift_decomposition(&scores).clause("teleology")?,
                justice: justice_harness(stream, k).clause("teleology")?,
                scores,
                ledger,
                verdict,
            })
        }
        None => None,
    };

    let mut report = Report {
        config: ConfigRecord {
            epsilon: k.epsilon(),
            channels: file.header.channels,
            ids: file.header.ids.clone(),
            sessions: n,
            config: plan.echo.clone(),
        },
        sessions,
        trajectory: Some(trajectory),
        audit,
        hierarchy,
        drift,
        checks: ChecksRecord { passed: true, checks: Vec::new() },
    };
    report.checks = run_checks(&report, stream, plan, &traces);
    Ok(report)
}

fn session_score(stream: &[SessionSnapshot], t: usize, plan: &Plan, traces: &[MemoryTrace]) -> Result<SessionScore> {
    let k = &plan.kernel;
    let snap = &stream[t];
    let prev = t.checked_sub(1).map(|p| &stream[p]);
    let next = stream.get(t + 1);
    let breakdown = score_session(snap, k);

    let mut penalties = Penalties::default();
    if let Some(c) = &plan.contradiction {
        penalties.pc = Some(pc_penalty(snap, c, k).clause("contradiction")?);
    }
    if let (Some(net), Some(prev)) = (&plan.sufficient_reason, prev) {
        penalties.psr = Some(psr_penalty(snap, &prev.xs(), net, k).clause("sufficient_reason")?);
    }
    if let Some(split) = &plan.harmony {
        let (soul, body, pairing) = split.split(snap).clause("harmony")?;
        penalties.harmony = Some(harmony_penalty(&soul, &body, &pairing, k).clause("harmony")?);
    }
    if let (Some(a), Some(next)) = (&plan.alignment, next) {
        penalties.alignment = Some(alignment_penalty(snap, next, &a.targets, a.dead_band, k).clause("alignment")?);
    }

    let representation = match &plan.representation {
        Some(rep) => {
            let c = &rep.clause;
            let trace = &traces[t];
            let dizziness = dizziness_scan(snap, prev, c.tau, c.delta, k).clause("representation")?;
            let seq = sequentiality(&breakdown, trace, c.tau, c.eta_smoothing).clause("representation")?;
            let reason = match trace.prior() {
                Some(_) => Some(reason_score(&breakdown, trace, &rep.prior).clause("representation")?),
                None => None,
            };
            let xs = snap.xs();
            let rational_set = c
                .rational_set
                .clone()
                .unwrap_or_else(|| (0..xs.len()).filter(|&i| xs[i] >= c.beta).collect());
            let floor_violations: Vec<usize> = rational_set.iter().copied().filter(|&i| xs[i] < c.beta).collect();
            let truth_floor = if floor_violations.is_empty() {
                Some(truth_floor_caps(snap, &rational_set, c.beta, k).clause("representation")?)
            } else {
                None
            };
            Some(RepresentationOutput {
                dizziness,
                trace_mass: trace.mass(),
                sequentiality: seq,
                reason,
                rational_set,
                truth_floor,
                floor_violations,
            })
        }
        None => None,
    };

    let hierarchy = match &plan.hierarchy {
        Some(h) => Some(level_rollup(&h.tree.build(snap), k).clause("hierarchy")?),
        None => None,
    };

    let perfection = match &plan.teleology {
        Some(tc) if snap.total_alpha() > 0.0 => {
            Some(variety_order_perfection(&breakdown, snap.total_alpha(), tc.gamma, k).clause("teleology")?)
        }
        _ => None,
    };

    Ok(SessionScore { t: snap.t(), breakdown, penalties, representation, hierarchy, perfection })
}

struct Tally {
    name: &'static str,
    total: usize,
    failed: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, total: 0, failed: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failed.push(what());
        }
    }

    fn finish(self) -> Check {
        let detail = match self.failed.first() {
            None => format!("{} of {} hold", self.total, self.total),
            Some(first) => format!("{} of {} fail; first: {first}", self.failed.len(), self.total),
        };
        Check { name: self.name.into(), passed: self.failed.is_empty(), detail }
    }
}

fn run_checks(report: &Report, stream: &[SessionSnapshot], plan: &Plan, traces: &[MemoryTrace]) -> ChecksRecord {
    let k = &plan.kernel;
    let mut checks = Vec::new();

    let mut bounds = Tally::new("score-bounds");
    for (s, snap) in report.sessions.iter().zip(stream) {
        let b = &s.breakdown;
        let cap = snap.total_alpha() * k.phi_max();
        bounds.check(b.total >= 0.0 && b.total <= cap * (1.0 + TOL) + TOL, || format!("t = {}: S = {}", s.t, b.total));
        let sum: f64 = b.shares.iter().sum();
        bounds.check(b.total == 0.0 || (sum - 1.0).abs() < 1e-9, || format!("t = {}: shares sum {sum}", s.t));
    }
    checks.push(bounds.finish());

    if let Some(a) = &report.audit {
        if let Some(w) = &a.windowless {
            let failed: Vec<&str> = w.probes.iter().filter(|p| !p.passed).map(|p| p.id.as_str()).collect();
            checks.push(Check {
                name: "windowless-audit".into(),
                passed: failed.is_empty(),
                detail: if failed.is_empty() {
                    format!("{} probes clean", w.probes.len())
                } else {
                    format!("failed probes: {}", failed.join(", "))
                },
            });
        }
        if let Some(r) = &a.rate {
            let mut t = Tally::new("rate-limits");
            t.total = r.violations.len().max(1);
            t.failed = r
                .violations
                .iter()
                .map(|v| format!("t {}..{}: |dS| = {} > {}", v.from_t, v.to_t, v.delta.abs(), v.allowed))
                .collect();
            checks.push(t.finish());
        }
    }

    if let Some(m) = report.trajectory.as_ref().and_then(|t| t.metrics.as_ref()) {
        let mut j = Tally::new("jensen-gap");
        for (i, c) in m.channels.iter().enumerate() {
            j.check(c.jensen_gap >= -TOL, || format!("channel {i}: gap {}", c.jensen_gap));
        }
        checks.push(j.finish());
    }

    if plan.representation.is_some() {
        let mut cap = Tally::new("trace-cap");
        for tr in traces {
            let c = tr.cap(k);
            cap.check(tr.values().iter().all(|&v| v <= c * (1.0 + TOL)), || format!("trace exceeds {c}"));
        }
        checks.push(cap.finish());
        let (mut diz, mut seq, mut floor) =
            (Tally::new("dizziness-bound"), Tally::new("consecutiveness-bound"), Tally::new("truth-floor-caps"));
        for s in &report.sessions {
            let r = s.representation.as_ref().expect("representation enabled");
            if let Some(b) = r.dizziness.min_active_bound {
                diz.check(r.dizziness.active_count as f64 + TOL >= b, || format!("t = {}: {} < {b}", s.t, r.dizziness.active_count));
            }
            seq.check(r.sequentiality.consec + TOL >= r.sequentiality.bound_lhs, || format!("t = {}", s.t));
            floor.check(
                r.floor_violations.is_empty() && r.truth_floor.as_ref().is_some_and(|c| c.dominates_actual(TOL)),
                || format!("t = {}: floor violations {:?}", s.t, r.floor_violations),
            );
        }
        checks.extend([diz.finish(), seq.finish(), floor.finish()]);
    }

    let mut pen = Tally::new("penalty-bounds");
    for s in &report.sessions {
        let p = &s.penalties;
        let pairs = [
            p.pc.as_ref().map(|o| (o.penalty, o.bound)),
            p.psr.as_ref().map(|o| (o.penalty, o.bound)),
            p.harmony.as_ref().map(|o| (o.harm, o.bound)),
            p.alignment.as_ref().map(|o| (o.harm, o.bound)),
        ];
        for (v, b) in pairs.into_iter().flatten() {
            pen.check(v >= 0.0 && v <= b * (1.0 + TOL) + TOL, || format!("t = {}: {v} > {b}", s.t));
        }
        if let Some(o) = &p.pc {
            pen.check(o.base_total == s.breakdown.total, || format!("t = {}: base score moved", s.t));
        }
    }
    if pen.total > 0 {
        checks.push(pen.finish());
    }

    if let Some(h) = &report.hierarchy {
        let mut chain = Tally::new("level-chain");
        for s in &report.sessions {
            let r = s.hierarchy.as_ref().expect("hierarchy enabled");
            let monotone = r.levels.windows(2).all(|w| w[1].total + TOL >= w[0].total);
            let capped = r.levels.iter().all(|l| l.total <= r.cap * (1.0 + TOL) + TOL);
            chain.check(monotone && capped, || format!("t = {}", s.t));
        }
        checks.push(chain.finish());
        checks.push(Check {
            name: "whole-part".into(),
            passed: h.whole_part.holds(TOL),
            detail: format!("{} sessions, {} windows", h.whole_part.steps.len(), h.whole_part.bounds.len()),
        });
    }

    if let Some(d) = &report.drift {
        let mut p = Tally::new("perfection-range");
        for s in &report.sessions {
            if let Some(r) = &s.perfection {
                p.check((0.0..=1.0).contains(&r.perfection), || format!("t = {}: P = {}", s.t, r.perfection));
            }
        }
        checks.push(p.finish());
        let scale = d.scores.iter().fold(1.0f64, |a, s| a.max(s.abs())) * d.scores.len() as f64;
        checks.push(Check {
            name: "drift-decomposition".into(),
            passed: d.decomposition.residual.abs() <= 1e-12 * scale,
            detail: format!("residual {:e}", d.decomposition.residual),
        });
    }

    ChecksRecord { passed: checks.iter().all(|c| c.passed), checks }
}
