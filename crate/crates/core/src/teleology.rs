//! Variety, order and perfection indices, windowed net-drift governance and
//! the long-horizon justice harness.

use serde::{Deserialize, Serialize};

use crate::dynamics::{appetition_step, AppetitionCommand};
use crate::error::{check_unit, AasError, Result};
use crate::kernel::{score_session, KernelConfig, ScoreBreakdown, SessionSnapshot};

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectionReport {
    pub variety: f64,
    pub order: f64,
    pub gamma: f64,
    pub perfection: f64,
    pub aas_max: f64,
}

/// `V = H/log2 m` (0 below two active channels), `O = 1 − S/(A φ(0))`,
/// `P = V^γ O^(1−γ)`.
pub fn variety_order_perfection(
    bd: &ScoreBreakdown,
    total_alpha: f64,
    gamma: f64,
    cfg: &KernelConfig,
) -> Result<PerfectionReport> {
    if !(total_alpha.is_finite() && total_alpha > 0.0) {
        return Err(AasError::domain(format!("total alpha {total_alpha} must be > 0")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(AasError::domain(format!("gamma = {gamma} outside (0, 1)")));
    }
    let variety = if bd.active_count >= 2 {
        (bd.contrib_entropy / (bd.active_count as f64).log2()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let aas_max = total_alpha * cfg.phi_max();
    let order = (1.0 - bd.total / aas_max).clamp(0.0, 1.0);
    let perfection = if variety == 0.0 {
        0.0
    } else {
        variety.powf(gamma) * order.powf(1.0 - gamma)
    };
    Ok(PerfectionReport { variety, order, gamma, perfection, aas_max })
}

/// `1 − S/S_max` for a snapshot; a snapshot with no active mass counts as perfect.
pub fn normalized_perfection(snap: &SessionSnapshot, cfg: &KernelConfig) -> f64 {
    let aas_max = snap.total_alpha() * cfg.phi_max();
    if aas_max <= 0.0 {
        return 1.0;
    }
    (1.0 - score_session(snap, cfg).total / aas_max).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftClass {
    /// Sustained improvement: window sum ≤ −η.
    G,
    /// Sustained regression: window sum ≥ +η.
    K,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftWindow {
    /// Index of the first delta in the window.
    pub start: usize,
    pub sum: f64,
    pub class: DriftClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftLedger {
    pub deltas: Vec<f64>,
    pub window: usize,
    pub eta: f64,
    pub stride: usize,
    pub windows: Vec<DriftWindow>,
}

pub fn classify_window(sum: f64, eta: f64) -> DriftClass {
    if sum <= -eta {
        DriftClass::G
    } else if sum >= eta {
        DriftClass::K
    } else {
        DriftClass::Neutral
    }
}

/// Classify sliding windows of `window` consecutive score deltas.
pub fn drift_classify(scores: &[f64], window: usize, eta: f64, stride: usize) -> Result<DriftLedger> {
    if window == 0 || stride == 0 {
        return Err(AasError::domain("window and stride must be >= 1"));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(AasError::domain(format!("eta = {eta} must be > 0")));
    }
    if scores.len() < window + 1 {
        return Err(AasError::precondition(format!(
            "{} scores cannot fill a window of {window} deltas",
            scores.len()
        )));
    }
    let deltas: Vec<f64> = scores.windows(2).map(|w| w[1] - w[0]).collect();
    let windows = (0..=deltas.len() - window)
        .step_by(stride)
        .map(|start| {
            let sum: f64 = deltas[start..start + window].iter().sum();
            DriftWindow { start, sum, class: classify_window(sum, eta) }
        })
        .collect();
    Ok(DriftLedger { deltas, window, eta, stride, windows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernancePolicy {
    pub promote_after: usize,
    pub rollback_after: usize,
}

impl Default for GovernancePolicy {
    fn default() -> Self {
        Self { promote_after: 3, rollback_after: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Promote,
    Rollback,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Ledger window indices `[first, last]` of the run that triggered the decision.
    pub trigger: Option<(usize, usize)>,
}

fn first_run(windows: &[DriftWindow], class: DriftClass, len: usize) -> Option<(usize, usize)> {
    let mut run = 0;
    for (i, w) in windows.iter().enumerate() {
        run = if w.class == class { run + 1 } else { 0 };
        if run == len {
            return Some((i + 1 - len, i));
        }
    }
    None
}

/// Rollback if any run of `rollback_after` consecutive K windows exists, else
/// promote on a run of `promote_after` G windows, else hold.
pub fn governance_decide(ledger: &DriftLedger, policy: &GovernancePolicy) -> Result<Verdict> {
    if policy.promote_after == 0 || policy.rollback_after == 0 {
        return Err(AasError::domain("run lengths must be >= 1"));
    }
    if let Some(trigger) = first_run(&ledger.windows, DriftClass::K, policy.rollback_after) {
        return Ok(Verdict { decision: Decision::Rollback, trigger: Some(trigger) });
    }
    if let Some(trigger) = first_run(&ledger.windows, DriftClass::G, policy.promote_after) {
        return Ok(Verdict { decision: Decision::Promote, trigger: Some(trigger) });
    }
    Ok(Verdict { decision: Decision::Hold, trigger: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDecomposition {
    pub initial: f64,
    pub last: f64,
    pub improvement: f64,
    pub degradation: f64,
    /// `initial − improvement + degradation − last`.
    pub residual: f64,
}

/// Split the score path into total rises and total falls.
pub fn drift_decomposition(scores: &[f64]) -> Result<DriftDecomposition> {
    let (&initial, &last) = scores
        .first()
        .zip(scores.last())
        .ok_or_else(|| AasError::precondition("empty score series"))?;
    let (mut improvement, mut degradation) = (0.0, 0.0);
    for w in scores.windows(2) {
        let d = w[1] - w[0];
        degradation += d.max(0.0);
        improvement += (-d).max(0.0);
    }
    Ok(DriftDecomposition {
        initial,
        last,
        improvement,
        degradation,
        residual: initial - improvement + degradation - last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum JusticeScenario {
    /// Appetition toward `target` at a fixed rate.
    Benevolent { target: f64, step: f64 },
    /// `x ← decay · x`.
    Degradation { decay: f64 },
    NoOp,
}

impl JusticeScenario {
    fn advance(&self, snap: &SessionSnapshot, cfg: &KernelConfig) -> Result<SessionSnapshot> {
        match *self {
            Self::Benevolent { target, step } => {
                let cmd = AppetitionCommand::uniform(snap.len(), target, step)?;
                Ok(appetition_step(snap, &cmd, cfg)?.next)
            }
            Self::Degradation { decay } => {
                check_unit("decay", decay)?;
                let xs: Vec<f64> = snap.xs().iter().map(|x| x * decay).collect();
                Ok(snap.with_xs(&xs)?.with_t(snap.t() + 1))
            }
            Self::NoOp => Ok(snap.with_t(snap.t() + 1)),
        }
    }

    /// Roll the scenario forward, returning `steps + 1` snapshots.
    pub fn simulate(&self, initial: &SessionSnapshot, steps: usize, cfg: &KernelConfig) -> Result<Vec<SessionSnapshot>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(initial.clone());
        for _ in 0..steps {
            let next = self.advance(out.last().expect("nonempty"), cfg)?;
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Improving,
    Degrading,
    Flat,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JusticeReport {
    pub scores: Vec<f64>,
    pub perfection: Vec<f64>,
    /// `U_* = max_t A_t φ(0)`.
    pub cap: f64,
    pub final_score: f64,
    pub final_perfection: f64,
    pub gap_to_cap: f64,
    pub direction: Direction,
}

/// Score and normalised-perfection traces with the boundary approached.
pub fn justice_harness(stream: &[SessionSnapshot], cfg: &KernelConfig) -> Result<JusticeReport> {
    if stream.is_empty() {
        return Err(AasError::precondition("empty stream"));
    }
    let scores: Vec<f64> = stream.iter().map(|s| score_session(s, cfg).total).collect();
    let perfection: Vec<f64> = stream.iter().map(|s| normalized_perfection(s, cfg)).collect();
    let cap = stream
        .iter()
        .map(|s| s.total_alpha() * cfg.phi_max())
        .fold(0.0, f64::max);
    let falls = scores.windows(2).all(|w| w[1] <= w[0]);
    let rises = scores.windows(2).all(|w| w[1] >= w[0]);
    let direction = match (falls, rises) {
        (true, true) => Direction::Flat,
        (true, false) => Direction::Improving,
        (false, true) => Direction::Degrading,
        (false, false) => Direction::Mixed,
    };
    let final_score = *scores.last().expect("nonempty");
    Ok(JusticeReport {
        final_perfection: *perfection.last().expect("nonempty"),
        gap_to_cap: cap - final_score,
        final_score,
        scores,
        perfection,
        cap,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_0: f64 = 6.658_211_482_751_794_7;

    fn k() -> KernelConfig {
        KernelConfig::default()
    }

    fn one(x: f64) -> SessionSnapshot {
        SessionSnapshot::from_xr(0, &[x], &[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn variety_extremes() {
        let s = SessionSnapshot::from_xr(0, &[0.3; 4], &[0.0; 4], &[0.25; 4]).unwrap();
        let r = variety_order_perfection(&score_session(&s, &k()), 1.0, 0.5, &k()).unwrap();
        assert!((r.variety - 1.0).abs() < 1e-12);
        let r = variety_order_perfection(&score_session(&one(0.5), &k()), 1.0, 0.5, &k()).unwrap();
        assert_eq!(r.variety, 0.0);
        assert_eq!(r.perfection, 0.0);
        assert!((r.order - 0.851_944_303_160_992_4).abs() < 1e-12);
    }

    #[test]
    fn perfection_errors() {
        let bd = score_session(&one(0.5), &k());
        assert!(variety_order_perfection(&bd, 0.0, 0.5, &k()).is_err());
        assert!(variety_order_perfection(&bd, 1.0, 1.0, &k()).is_err());
    }

    fn cumulative(deltas: &[f64]) -> Vec<f64> {
        let mut s = vec![1.0];
        for d in deltas {
            s.push(s.last().unwrap() + d);
        }
        s
    }

    #[test]
    fn drift_examples() {
        let l = drift_classify(&cumulative(&[-0.05, -0.02, 0.01, -0.04]), 4, 0.05, 1).unwrap();
        assert_eq!(l.windows.len(), 1);
        assert_eq!(l.windows[0].class, DriftClass::G);
        let l = drift_classify(&[0.7; 6], 2, 0.05, 1).unwrap();
        assert!(l.windows.iter().all(|w| w.class == DriftClass::Neutral));
        let l = drift_classify(&[0.5, 0.6, 0.5, 0.6, 0.5, 0.6], 2, 0.05, 1).unwrap();
        assert_eq!(l.windows.len(), 4);
        assert!(l.windows.iter().all(|w| w.class == DriftClass::Neutral));
        let l = drift_classify(&[0.0; 10], 3, 0.1, 3).unwrap();
        assert_eq!(l.windows.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert!(drift_classify(&[0.0; 3], 3, 0.1, 1).is_err());
        assert!(drift_classify(&[0.0; 5], 3, 0.0, 1).is_err());
    }

    fn ledger(classes: &[DriftClass]) -> DriftLedger {
        DriftLedger {
            deltas: Vec::new(),
            window: 1,
            eta: 1.0,
            stride: 1,
            windows: classes
                .iter()
                .enumerate()
                .map(|(start, &class)| DriftWindow { start, sum: 0.0, class })
                .collect(),
        }
    }

    #[test]
    fn governance_examples() {
        use DriftClass::*;
        let two = GovernancePolicy { promote_after: 2, rollback_after: 1 };
        let v = governance_decide(&ledger(&[Neutral, G, G]), &two).unwrap();
        assert_eq!((v.decision, v.trigger), (Decision::Promote, Some((1, 2))));
        let v = governance_decide(&ledger(&[G, G, G, K]), &GovernancePolicy::default()).unwrap();
        assert_eq!((v.decision, v.trigger), (Decision::Rollback, Some((3, 3))));
        let strict = GovernancePolicy { promote_after: 2, rollback_after: 2 };
        let v = governance_decide(&ledger(&[G, K, G, K, G]), &strict).unwrap();
        assert_eq!(v.decision, Decision::Hold);
        assert!(governance_decide(&ledger(&[]), &GovernancePolicy { promote_after: 0, rollback_after: 1 }).is_err());
    }

    #[test]
    fn decomposition_identity() {
        let d = drift_decomposition(&[1.0, 0.7, 0.9, 0.2, 0.2, 0.5]).unwrap();
        assert!(d.residual.abs() < 1e-15);
        assert!((d.improvement - 1.0).abs() < 1e-15);
        assert!((d.degradation - 0.5).abs() < 1e-15);
    }

    #[test]
    fn benevolent_reaches_floor() {
        let sc = JusticeScenario::Benevolent { target: 1.0, step: 0.1 };
        let stream = sc.simulate(&one(0.5), 200, &k()).unwrap();
        let x_t = stream[200].channels()[0].x;
        assert!((x_t - (1.0 - 0.5 * 0.9f64.powi(200))).abs() < 1e-14);
        let r = justice_harness(&stream, &k()).unwrap();
        assert_eq!(r.direction, Direction::Improving);
        assert!(r.final_score < 1e-8);
        assert!(r.final_perfection > 1.0 - 1e-8);
    }

    #[test]
    fn degradation_reaches_cap() {
        let sc = JusticeScenario::Degradation { decay: 0.9 };
        let r = justice_harness(&sc.simulate(&one(0.5), 200, &k()).unwrap(), &k()).unwrap();
        assert_eq!(r.direction, Direction::Degrading);
        assert!((r.cap - PHI_0).abs() < 1e-12);
        assert!(r.gap_to_cap < 1e-6);
    }

    #[test]
    fn noop_is_flat() {
        let r = justice_harness(&JusticeScenario::NoOp.simulate(&one(0.4), 20, &k()).unwrap(), &k()).unwrap();
        assert_eq!(r.direction, Direction::Flat);
        assert!(r.perfection.windows(2).all(|w| w[0] == w[1]));
    }
}
