//! Perception and apperception diagnostics: dizziness regimes, exponentially
//! forgotten memory traces, sequentiality, the reason score, truth-floor caps
//! and law fixity.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_unit, AasError, Result};
use crate::info::{kl_bits, normalize, smooth_uniform, total_variation};
use crate::kernel::{score_session, KernelConfig, ScoreBreakdown, SessionSnapshot};

/// Default uniform mixing applied to priors before taking divergences.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DizzinessVerdict {
    pub total: f64,
    pub tau_dizzy: bool,
    pub delta_dizzy: bool,
    /// `S_t / τ`, a lower bound on the active count, present under τ-dizziness.
    pub min_active_bound: Option<f64>,
    pub active_count: usize,
    /// `max_i [φ(x_t) − φ(x_{t−1})]⁺`; zero without a previous session.
    pub ap_peak: f64,
    /// Mass carried by contributions at or above τ.
    pub salient_mass: f64,
}

/// Positive-part one-step penalty rises `[φ(x_t) − φ(x_{t−1})]⁺`.
pub fn delta_phi_plus(
    previous: &SessionSnapshot,
    current: &SessionSnapshot,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    if previous.len() != current.len() {
        return Err(AasError::Arity {
            expected: current.len(),
            found: previous.len(),
        });
    }
    Ok(previous
        .channels()
        .iter()
        .zip(current.channels())
        .map(|(p, c)| (cfg.phi(c.x) - cfg.phi(p.x)).max(0.0))
        .collect())
}

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AasError::domain(format!("{name} = {v} must be > 0")))
    }
}

/// τ-dizziness (mass without a salient contribution) and δ-dizziness (mass
/// without a sharp rise).
pub fn dizziness_scan(
    current: &SessionSnapshot,
    previous: Option<&SessionSnapshot>,
    tau: f64,
    delta: f64,
    cfg: &KernelConfig,
) -> Result<DizzinessVerdict> {
    check_threshold("tau", tau)?;
    check_threshold("delta", delta)?;
    let b = score_session(current, cfg);
    Ok(verdict_from(&b, previous.map(|p| delta_phi_plus(p, current, cfg)).transpose()?, tau, delta))
}

fn verdict_from(b: &ScoreBreakdown, rises: Option<Vec<f64>>, tau: f64, delta: f64) -> DizzinessVerdict {
    let perceiving = b.total > 0.0;
    let tau_dizzy = perceiving && b.max_contribution() < tau;
    let ap_peak = rises
        .as_deref()
        .map_or(0.0, |r| r.iter().copied().fold(0.0, f64::max));
    DizzinessVerdict {
        total: b.total,
        tau_dizzy,
        delta_dizzy: perceiving && rises.is_some() && ap_peak < delta,
        min_active_bound: tau_dizzy.then(|| b.total / tau),
        active_count: b.active_count,
        ap_peak,
        salient_mass: b.contributions.iter().filter(|&&c| c >= tau).sum(),
    }
}

/// Exponentially forgotten trace of past penalty rises, one entry per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTrace {
    lambda: f64,
    trace: Vec<f64>,
}

impl MemoryTrace {
    pub fn new(lambda: f64, channels: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(AasError::domain(format!("lambda = {lambda} outside (0, 1)")));
        }
        Ok(Self {
            lambda,
            trace: vec![0.0; channels],
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.trace
    }

    /// `‖M‖₁`.
    pub fn mass(&self) -> f64 {
        self.trace.iter().sum()
    }

    /// The sequential prior `q = M / ‖M‖₁`, if any trace mass exists.
    pub fn prior(&self) -> Option<Vec<f64>> {
        normalize(&self.trace)
    }

    /// Upper bound `φ(0)/(1−λ)` on every entry.
    pub fn cap(&self, cfg: &KernelConfig) -> f64 {
        cfg.phi_max() / (1.0 - self.lambda)
    }

    /// `M' = ΔΦ⁺ + λ M`.
    pub fn step(&self, delta_phi_plus: &[f64]) -> Result<Self> {
        if delta_phi_plus.len() != self.trace.len() {
            return Err(AasError::Arity {
                expected: self.trace.len(),
                found: delta_phi_plus.len(),
            });
        }
        if let Some(bad) = delta_phi_plus.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(AasError::domain(format!("penalty rise {bad} must be >= 0")));
        }
        Ok(Self {
            lambda: self.lambda,
            trace: delta_phi_plus
                .iter()
                .zip(&self.trace)
                .map(|(d, m)| d + self.lambda * m)
                .collect(),
        })
    }
}

pub fn memory_trace_step(trace: &MemoryTrace, delta_phi_plus: &[f64]) -> Result<MemoryTrace> {
    trace.step(delta_phi_plus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sequentiality {
    /// `Σ q_i p_i`.
    pub consec: f64,
    /// `D(p ‖ q̂)` with the smoothed sequential prior.
    pub kl: f64,
    /// Contribution mass on channels whose trace reaches τ.
    pub expectation_mass: f64,
    /// `(τ / ‖M‖₁) · (B / S)`, a lower bound on `consec`.
    pub bound_lhs: f64,
}

fn check_smoothing(eta: f64) -> Result<()> {
    if (0.0..1.0).contains(&eta) {
        Ok(())
    } else {
        Err(AasError::domain(format!("smoothing {eta} outside [0, 1)")))
    }
}

pub fn sequentiality(
    breakdown: &ScoreBreakdown,
    trace: &MemoryTrace,
    tau: f64,
    eta_smoothing: f64,
) -> Result<Sequentiality> {
    check_threshold("tau", tau)?;
    check_smoothing(eta_smoothing)?;
    if breakdown.shares.len() != trace.values().len() {
        return Err(AasError::Arity {
            expected: breakdown.shares.len(),
            found: trace.values().len(),
        });
    }
    let (q, mass) = match trace.prior() {
        Some(q) if breakdown.total > 0.0 => (q, trace.mass()),
        _ => {
            return Ok(Sequentiality {
                consec: 0.0,
                kl: 0.0,
                expectation_mass: 0.0,
                bound_lhs: 0.0,
            })
        }
    };
    let p = &breakdown.shares;
    let consec = q.iter().zip(p).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
    let kl = kl_bits(p, &smooth_uniform(&q, eta_smoothing)).max(0.0);
    let expectation_mass: f64 = trace
        .values()
        .iter()
        .zip(&breakdown.contributions)
        .filter(|(m, _)| **m >= tau)
        .map(|(_, c)| c)
        .sum();
    Ok(Sequentiality {
        consec,
        kl,
        expectation_mass,
        bound_lhs: (tau / mass) * (expectation_mass / breakdown.total),
    })
}

/// A fixed law-like distribution over channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalPrior {
    r: Vec<f64>,
    eta_smoothing: f64,
}

impl RationalPrior {
    pub fn new(r: Vec<f64>, eta_smoothing: f64) -> Result<Self> {
        check_smoothing(eta_smoothing)?;
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AasError::domain("prior entries must be nonnegative"));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AasError::WeightSum { sum, expected: 1.0 });
        }
        let prior = Self { r, eta_smoothing };
        if prior.smoothed().iter().any(|v| *v <= 0.0) {
            return Err(AasError::domain("smoothed prior must have full support"));
        }
        Ok(prior)
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            r: vec![1.0 / m as f64; m],
            eta_smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn eta_smoothing(&self) -> f64 {
        self.eta_smoothing
    }

    pub fn smoothed(&self) -> Vec<f64> {
        smooth_uniform(&self.r, self.eta_smoothing)
    }
}

/// `Σ p_i log2(r̂_i / q̂_i) = D(p‖q̂) − D(p‖r̂)` on already-smoothed priors.
pub fn reason_score_from_shares(p: &[f64], q_hat: &[f64], r_hat: &[f64]) -> f64 {
    p.iter()
        .zip(q_hat.iter().zip(r_hat))
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, (q, r))| pi * (r / q).log2())
        .sum()
}

/// Positive when the current shares sit closer to the rational prior than to
/// the habit prior carried by the memory trace.
pub fn reason_score(breakdown: &ScoreBreakdown, trace: &MemoryTrace, prior: &RationalPrior) -> Result<f64> {
    let m = breakdown.shares.len();
    for len in [trace.values().len(), prior.r().len()] {
        if len != m {
            return Err(AasError::Arity { expected: m, found: len });
        }
    }
    let q = trace
        .prior()
        .ok_or_else(|| AasError::precondition("memory trace has no mass"))?;
    let q_hat = smooth_uniform(&q, prior.eta_smoothing());
    Ok(reason_score_from_shares(&breakdown.shares, &q_hat, &prior.smoothed()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFloorCaps {
    pub actual: f64,
    /// `(Σ_S α) φ(β) + Σ_{S^c} α φ(x)`.
    pub pointwise_cap: f64,
    /// `A [ρ^α φ(β) + (1−ρ^α) φ(0)]`.
    pub alpha_mass_cap: f64,
    /// `φ(β) Σ_S α / ρ`, defined only when the rational share `ρ` is positive.
    pub p_mass_cap: Option<f64>,
    pub rational_share: f64,
    /// `Σ p_i φ(x_i)`, a diagnostic distinct from the α-weighted mean `S/A`.
    pub p_weighted_mean_phi: Option<f64>,
}

impl TruthFloorCaps {
    pub fn dominates_actual(&self, tolerance: f64) -> bool {
        self.actual <= self.pointwise_cap + tolerance
            && self.actual <= self.alpha_mass_cap + tolerance
            && self.p_mass_cap.is_none_or(|c| self.actual <= c + tolerance)
    }
}

/// Upper bounds on the session score implied by recall floors on the rational set.
pub fn truth_floor_caps(
    snap: &SessionSnapshot,
    rational_set: &[usize],
    beta: f64,
    cfg: &KernelConfig,
) -> Result<TruthFloorCaps> {
    check_unit("beta", beta)?;
    let mut in_set = vec![false; snap.len()];
    for &i in rational_set {
        check_index(i, snap.len())?;
        in_set[i] = true;
        let x = snap.channels()[i].x;
        if x < beta {
            return Err(AasError::precondition(format!(
                "channel {i} recall {x} below truth floor {beta}"
            )));
        }
    }
    let b = score_session(snap, cfg);
    let phi_beta = cfg.phi(beta);
    let mut alpha_in = 0.0;
    let mut alpha_out = 0.0;
    let mut free_cost = 0.0;
    let mut rational_share = 0.0;
    for i in 0..snap.len() {
        let a = snap.alpha(i);
        if in_set[i] {
            alpha_in += a;
            rational_share += b.shares[i];
        } else {
            alpha_out += a;
            free_cost += b.contributions[i];
        }
    }
    let p_weighted_mean_phi = (b.total > 0.0).then(|| {
        b.shares
            .iter()
            .zip(snap.channels())
            .map(|(p, c)| p * cfg.phi(c.x))
            .sum()
    });
    Ok(TruthFloorCaps {
        actual: b.total,
        pointwise_cap: alpha_in * phi_beta + free_cost,
        alpha_mass_cap: alpha_in * phi_beta + alpha_out * cfg.phi_max(),
        p_mass_cap: (rational_share > 0.0).then(|| phi_beta * alpha_in / rational_share),
        rational_share,
        p_weighted_mean_phi,
    })
}

/// Maps a session's breakdown to the law it expresses.
pub trait LawInference {
    fn infer(&self, breakdown: &ScoreBreakdown) -> Vec<f64>;
}

/// Takes the contribution shares themselves as the inferred law.
#[derive(Debug, Clone, Copy, Default)]
pub struct SharesAsLaw;

impl LawInference for SharesAsLaw {
    fn infer(&self, breakdown: &ScoreBreakdown) -> Vec<f64> {
        breakdown.shares.clone()
    }
}

pub fn infer_laws(breakdowns: &[ScoreBreakdown], inference: &dyn LawInference) -> Vec<Vec<f64>> {
    breakdowns.iter().map(|b| inference.infer(b)).collect()
}

/// `1 − mean_{t≥2} TV(r, r̂_t)`; a horizon of one (or none) scores 1.
pub fn law_fixity(prior: &RationalPrior, inferred: &[Vec<f64>]) -> Result<f64> {
    let m = prior.r().len();
    for law in inferred {
        if law.len() != m {
            return Err(AasError::Arity { expected: m, found: law.len() });
        }
    }
    if inferred.len() < 2 {
        return Ok(1.0);
    }
    let tv: f64 = inferred[1..].iter().map(|law| total_variation(prior.r(), law)).sum();
    Ok((1.0 - tv / (inferred.len() - 1) as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> KernelConfig {
        KernelConfig::default()
    }

    fn breakdown(contributions: &[f64]) -> ScoreBreakdown {
        let total: f64 = contributions.iter().sum();
        let shares: Vec<f64> = contributions
            .iter()
            .map(|c| if total > 0.0 { c / total } else { 0.0 })
            .collect();
        ScoreBreakdown {
            t: 0,
            epsilon: 0.01,
            contributions: contributions.to_vec(),
            total,
            peak_share: shares.iter().copied().fold(0.0, f64::max),
            shares,
            contrib_entropy: 0.0,
            kappa: 0.0,
            apper_level: 0.0,
            active_count: contributions.iter().filter(|c| **c > 0.0).count(),
        }
    }

    #[test]
    fn diffuse_breakdown_is_tau_dizzy() {
        let v = verdict_from(&breakdown(&[0.05, 0.04, 0.06]), None, 0.1, 0.1);
        assert!(v.tau_dizzy);
        assert!((v.min_active_bound.unwrap() - 1.5).abs() < 1e-12);
        assert!(v.min_active_bound.unwrap() <= v.active_count as f64);
        assert!(!v.delta_dizzy, "no previous session");
    }

    #[test]
    fn cessation_and_salience() {
        let v = verdict_from(&breakdown(&[0.0, 0.0]), Some(vec![0.0, 0.0]), 0.1, 0.1);
        assert!(!v.tau_dizzy && !v.delta_dizzy);
        let v = verdict_from(&breakdown(&[0.5, 0.01]), None, 0.1, 0.1);
        assert!(!v.tau_dizzy);
        assert_eq!(v.min_active_bound, None);
    }

    #[test]
    fn delta_dizziness_from_snapshots() {
        let prev = SessionSnapshot::from_xr(0, &[0.9, 0.95], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let cur = SessionSnapshot::from_xr(1, &[0.89, 0.95], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let v = dizziness_scan(&cur, Some(&prev), 1.0, 0.5, &cfg()).unwrap();
        assert!(v.delta_dizzy);
        assert!(v.ap_peak > 0.0 && v.ap_peak < 0.5);
        let sharp = SessionSnapshot::from_xr(1, &[0.1, 0.95], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(!dizziness_scan(&sharp, Some(&prev), 1.0, 0.5, &cfg()).unwrap().delta_dizzy);
        assert!(dizziness_scan(&cur, None, 0.0, 0.5, &cfg()).is_err());
    }

    #[test]
    fn trace_recursion() {
        let t = MemoryTrace::new(0.5, 1).unwrap();
        assert_eq!(t.step(&[0.0]).unwrap().values(), &[0.0]);
        let mut t = t.step(&[1.0]).unwrap();
        for k in 1..=10 {
            t = t.step(&[0.0]).unwrap();
            assert_eq!(t.values()[0], 0.5f64.powi(k));
        }
        assert!(MemoryTrace::new(1.0, 1).is_err());
        assert!(MemoryTrace::new(0.0, 1).is_err());
        assert!(t.step(&[-1.0]).is_err());
    }

    #[test]
    fn trace_saturates_below_cap() {
        let cfg = cfg();
        let mut t = MemoryTrace::new(0.9, 1).unwrap();
        for _ in 0..2000 {
            t = t.step(&[cfg.phi_max()]).unwrap();
            assert!(t.values()[0] <= t.cap(&cfg));
        }
        assert!((t.values()[0] - t.cap(&cfg)).abs() < 1e-9);
    }

    fn trace_with(values: &[f64]) -> MemoryTrace {
        MemoryTrace::new(0.5, values.len()).unwrap().step(values).unwrap()
    }

    #[test]
    fn sequentiality_cases() {
        let b = breakdown(&[0.9, 0.1]);
        let s = sequentiality(&b, &trace_with(&[1.0, 1.0]), 0.5, DEFAULT_SMOOTHING).unwrap();
        assert!((s.consec - 0.5).abs() < 1e-15);
        assert!(s.consec >= s.bound_lhs - 1e-12);

        let b = breakdown(&[0.3, 0.3]);
        let s = sequentiality(&b, &trace_with(&[2.0, 2.0]), 0.5, DEFAULT_SMOOTHING).unwrap();
        assert!(s.kl.abs() < 1e-15);

        let b = breakdown(&[0.7, 0.0]);
        let s = sequentiality(&b, &trace_with(&[2.0, 0.0]), 1.0, DEFAULT_SMOOTHING).unwrap();
        assert_eq!(s.consec, 1.0);
        assert!((s.bound_lhs - 0.5).abs() < 1e-15);

        let empty = sequentiality(&breakdown(&[0.0, 0.0]), &trace_with(&[1.0, 0.0]), 1.0, 0.0).unwrap();
        assert_eq!(empty.consec, 0.0);
    }

    #[test]
    fn reason_score_reference() {
        let b = breakdown(&[0.9, 0.1]);
        let prior = RationalPrior::new(vec![0.8, 0.2], DEFAULT_SMOOTHING).unwrap();
        let score = reason_score(&b, &trace_with(&[1.0, 1.0]), &prior).unwrap();
        // D(p‖q) − D(p‖r) = 0.531004406… − 0.052932501…
        assert!((score - 0.478_071_905_112_637_6).abs() < 1e-5, "{score}");
        let no_mass = MemoryTrace::new(0.5, 2).unwrap();
        assert!(reason_score(&b, &no_mass, &prior).is_err());
    }

    #[test]
    fn reason_sign_dichotomy() {
        let q_hat = smooth_uniform(&[0.6, 0.3, 0.1], DEFAULT_SMOOTHING);
        let r_hat = smooth_uniform(&[0.2, 0.3, 0.5], DEFAULT_SMOOTHING);
        let at_r = reason_score_from_shares(&r_hat, &q_hat, &r_hat);
        assert!((at_r - kl_bits(&r_hat, &q_hat)).abs() < 1e-12);
        assert!(at_r >= 0.0);
        let at_q = reason_score_from_shares(&q_hat, &q_hat, &r_hat);
        assert!((at_q + kl_bits(&q_hat, &r_hat)).abs() < 1e-12);
        assert!(at_q <= 0.0);
    }

    #[test]
    fn truth_floor_reference() {
        let cfg = cfg();
        // Rational channel α=0.5 at the floor, free channel α=0.5 at x=0.2.
        let snap = SessionSnapshot::from_xr(0, &[0.8, 0.2], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let caps = truth_floor_caps(&snap, &[0], 0.8, &cfg).unwrap();
        assert!((caps.pointwise_cap - 1.292_127_769_920_102_2).abs() < 1e-12);
        assert!(caps.dominates_actual(1e-12));
        let higher = SessionSnapshot::from_xr(0, &[0.95, 0.2], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let caps_hi = truth_floor_caps(&higher, &[0], 0.8, &cfg).unwrap();
        assert_eq!(caps_hi.pointwise_cap, caps.pointwise_cap);
        assert!(caps_hi.dominates_actual(1e-12));

        let floor_broken = truth_floor_caps(&snap, &[1], 0.8, &cfg);
        assert!(matches!(floor_broken, Err(AasError::Precondition(_))));
    }

    #[test]
    fn truth_floor_degenerate_sets() {
        let cfg = cfg();
        let perfect = SessionSnapshot::from_xr(0, &[1.0, 1.0], &[0.0, 0.3], &[0.5, 0.5]).unwrap();
        let caps = truth_floor_caps(&perfect, &[0, 1], 1.0, &cfg).unwrap();
        assert_eq!((caps.actual, caps.pointwise_cap, caps.alpha_mass_cap), (0.0, 0.0, 0.0));
        assert_eq!(caps.p_mass_cap, None);

        let snap = SessionSnapshot::from_xr(0, &[0.3, 0.6], &[0.1, 0.3], &[0.5, 0.5]).unwrap();
        let caps = truth_floor_caps(&snap, &[], 0.5, &cfg).unwrap();
        assert_eq!(caps.pointwise_cap, caps.actual);
    }

    #[test]
    fn law_fixity_cases() {
        let prior = RationalPrior::new(vec![0.7, 0.3], 0.0).unwrap();
        let same = vec![vec![0.7, 0.3]; 4];
        assert_eq!(law_fixity(&prior, &same).unwrap(), 1.0);
        assert_eq!(law_fixity(&prior, &same[..1]).unwrap(), 1.0);

        let point = RationalPrior::new(vec![1.0, 0.0], DEFAULT_SMOOTHING).unwrap();
        assert_eq!(law_fixity(&point, &vec![vec![0.0, 1.0]; 3]).unwrap(), 0.0);
        assert!(law_fixity(&point, &[vec![1.0]]).is_err());
    }

    #[test]
    fn prior_validation() {
        assert!(RationalPrior::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(RationalPrior::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(RationalPrior::new(vec![1.0, 0.0], 1e-6).is_ok());
    }
}
