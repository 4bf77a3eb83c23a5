//! Rate caps, appetition steps, trajectory metrics and counterfactual replay.

use serde::{Deserialize, Serialize};

use crate::audit::{AuditReport, ProbeResult};
use crate::error::{check_index, check_unit, AasError, Result};
use crate::kernel::{check_arity, score_session, KernelConfig, SessionSnapshot};

/// Absolute slack on rate comparisons.
pub const RATE_TOLERANCE: f64 = 1e-9;
/// A flatline needs `S` constant within this band...
pub const FLATLINE_SCORE_BAND: f64 = 1e-12;
/// ...while some channel contribution moves by more than this...
pub const FLATLINE_CHANNEL_MOTION: f64 = 1e-6;
/// ...across at least this many consecutive sessions.
pub const FLATLINE_MIN_SESSIONS: usize = 3;

/// Bound on `|dS/dt|` given bounds on the recall and redundancy rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCap {
    pub epsilon: f64,
    pub lx: f64,
    pub lr: f64,
    pub cap: f64,
}

pub fn rate_cap(cfg: &KernelConfig, lx: f64, lr: f64) -> Result<RateCap> {
    for (name, v) in [("L_x", lx), ("L_R", lr)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(AasError::domain(format!("{name} = {v} must be >= 0")));
        }
    }
    Ok(RateCap {
        epsilon: cfg.epsilon(),
        lx,
        lr,
        cap: cfg.phi_max() * lr + cfg.slope_bound() * lx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateViolation {
    pub from_t: u64,
    pub to_t: u64,
    pub delta: f64,
    pub allowed: f64,
}

/// Run of sessions with a constant total while individual channels move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flatline {
    pub start_t: u64,
    pub end_t: u64,
    pub max_channel_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub cap: RateCap,
    pub dt: f64,
    pub violations: Vec<RateViolation>,
    pub suspicious_flatlines: Vec<Flatline>,
}

impl RateReport {
    pub fn ramps_only(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flag consecutive sessions whose score jump exceeds `cap · dt`.
pub fn rate_check(stream: &[SessionSnapshot], cap: &RateCap, dt: f64) -> Result<RateReport> {
    if stream.len() < 2 {
        return Err(AasError::precondition("rate check needs at least 2 snapshots"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(AasError::domain(format!("dt = {dt} must be > 0")));
    }
    check_arity(stream)?;
    let cfg = KernelConfig::new(cap.epsilon)?;
    let breakdowns: Vec<_> = stream.iter().map(|s| score_session(s, &cfg)).collect();
    let allowed = cap.cap * dt;

    let mut violations = Vec::new();
    let mut flatlines = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    let close_run = |run: &mut Option<(usize, f64)>, end: usize, out: &mut Vec<Flatline>| {
        if let Some((start, motion)) = run.take() {
            if end - start + 1 >= FLATLINE_MIN_SESSIONS {
                out.push(Flatline {
                    start_t: stream[start].t(),
                    end_t: stream[end].t(),
                    max_channel_delta: motion,
                });
            }
        }
    };

    for k in 0..breakdowns.len() - 1 {
        let (a, b) = (&breakdowns[k], &breakdowns[k + 1]);
        let delta = b.total - a.total;
        if delta.abs() > allowed + RATE_TOLERANCE {
            violations.push(RateViolation {
                from_t: a.t,
                to_t: b.t,
                delta,
                allowed,
            });
        }
        let motion = a
            .contributions
            .iter()
            .zip(&b.contributions)
            .map(|(x, y)| (y - x).abs())
            .fold(0.0, f64::max);
        if delta.abs() <= FLATLINE_SCORE_BAND && motion > FLATLINE_CHANNEL_MOTION {
            let entry = run.get_or_insert((k, 0.0));
            entry.1 = entry.1.max(motion);
        } else {
            close_run(&mut run, k, &mut flatlines);
        }
    }
    close_run(&mut run, breakdowns.len() - 1, &mut flatlines);

    Ok(RateReport {
        cap: *cap,
        dt,
        violations,
        suspicious_flatlines: flatlines,
    })
}

/// Per-channel internal targets `g ∈ [0,1]` and step sizes `η ∈ [0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppetitionCommand {
    pub targets: Vec<f64>,
    pub steps: Vec<f64>,
}

impl AppetitionCommand {
    pub fn new(targets: Vec<f64>, steps: Vec<f64>) -> Result<Self> {
        let cmd = Self { targets, steps };
        cmd.validate()?;
        Ok(cmd)
    }

    /// Same target and step on every one of `m` channels.
    pub fn uniform(m: usize, target: f64, step: f64) -> Result<Self> {
        Self::new(vec![target; m], vec![step; m])
    }

    fn validate(&self) -> Result<()> {
        if self.targets.len() != self.steps.len() {
            return Err(AasError::Arity {
                expected: self.targets.len(),
                found: self.steps.len(),
            });
        }
        for (&g, &eta) in self.targets.iter().zip(&self.steps) {
            check_unit("target", g)?;
            check_unit("step", eta)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppetitionOutcome {
    pub next: SessionSnapshot,
    /// `N = Σ α η |g − x|`.
    pub new_perception: f64,
    /// `Σ α η [φ(x) − φ(g)]⁺`, the drop certified by convexity.
    pub guaranteed_drop: f64,
}

/// Move every `x` a fraction `η` of the way toward its target. `R` is carried over.
pub fn appetition_step(
    snap: &SessionSnapshot,
    cmd: &AppetitionCommand,
    cfg: &KernelConfig,
) -> Result<AppetitionOutcome> {
    cmd.validate()?;
    if cmd.targets.len() != snap.len() {
        return Err(AasError::Arity {
            expected: snap.len(),
            found: cmd.targets.len(),
        });
    }
    let mut next_x = Vec::with_capacity(snap.len());
    let mut new_perception = 0.0;
    let mut guaranteed_drop = 0.0;
    for (i, c) in snap.channels().iter().enumerate() {
        let (g, eta) = (cmd.targets[i], cmd.steps[i]);
        let alpha = snap.alpha(i);
        next_x.push(((1.0 - eta) * c.x + eta * g).clamp(0.0, 1.0));
        new_perception += alpha * eta * (g - c.x).abs();
        guaranteed_drop += alpha * eta * (cfg.phi(c.x) - cfg.phi(g)).max(0.0);
    }
    let next = snap.with_xs(&next_x)?.with_t(snap.t() + 1);
    Ok(AppetitionOutcome {
        next,
        new_perception,
        guaranteed_drop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    /// `C = Σ_t c_t`.
    pub cumulative_cost: f64,
    /// Entropy of the cost profile `c_t / C` over time.
    pub time_entropy: f64,
    pub mass: f64,
    pub weighted_mean_x: Option<f64>,
    /// `Σ α φ(x) − A φ(x̄)`; nonnegative by convexity.
    pub jensen_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub steps: usize,
    pub channels: Vec<ChannelMetrics>,
}

pub fn trajectory_metrics(stream: &[SessionSnapshot], cfg: &KernelConfig) -> Result<TrajectoryMetrics> {
    let m = check_arity(stream)?;
    let channels = (0..m)
        .map(|i| {
            let alphas: Vec<f64> = stream.iter().map(|s| s.alpha(i)).collect();
            let xs: Vec<f64> = stream.iter().map(|s| s.channels()[i].x).collect();
            let costs: Vec<f64> = alphas.iter().zip(&xs).map(|(a, &x)| a * cfg.phi(x)).collect();
            let cumulative_cost: f64 = costs.iter().sum();
            let mass: f64 = alphas.iter().sum();
            let weighted_mean_x = (mass > 0.0).then(|| {
                let num: f64 = alphas.iter().zip(&xs).map(|(a, x)| a * x).sum();
                (num / mass).clamp(0.0, 1.0)
            });
            let jensen_gap = weighted_mean_x.map_or(0.0, |xbar| cumulative_cost - mass * cfg.phi(xbar));
            ChannelMetrics {
                cumulative_cost,
                time_entropy: crate::info::normalized_entropy_bits(&costs),
                mass,
                weighted_mean_x,
                jensen_gap,
            }
        })
        .collect();
    Ok(TrajectoryMetrics {
        steps: stream.len(),
        channels,
    })
}

/// `Σ_t |c_{t,i} − c_{t,j}|`.
pub fn trajectory_distance(stream: &[SessionSnapshot], i: usize, j: usize, cfg: &KernelConfig) -> Result<f64> {
    let m = check_arity(stream)?;
    check_index(i, m)?;
    check_index(j, m)?;
    Ok(stream
        .iter()
        .map(|s| {
            let ci = s.alpha(i) * cfg.phi(s.channels()[i].x);
            let cj = s.alpha(j) * cfg.phi(s.channels()[j].x);
            (ci - cj).abs()
        })
        .sum())
}

/// Compare two worlds that agree on the `shared` channels.
///
/// Shared contributions must coincide bit-for-bit and the difference of totals
/// must be carried entirely by the non-shared channels.
pub fn internality_replay_audit(
    world_a: &[SessionSnapshot],
    world_b: &[SessionSnapshot],
    shared: &[usize],
    cfg: &KernelConfig,
) -> AuditReport {
    let mut pre = ProbeResult::new("precondition", "worlds share weights and (x, R) histories on the shared set");
    let mut insulated = ProbeResult::new("shared-contributions", "shared channels contribute identically in both worlds");
    let mut separable = ProbeResult::new("separability", "total difference equals the non-shared contribution difference");

    if world_a.len() != world_b.len() {
        pre.fail(None, None, (world_a.len() as f64 - world_b.len() as f64).abs(), "horizon mismatch");
    }
    for (a, b) in world_a.iter().zip(world_b) {
        let t = Some(a.t());
        if a.len() != b.len() {
            pre.fail(t, None, 0.0, "arity mismatch");
            continue;
        }
        if a.weights() != b.weights() {
            pre.fail(t, None, 0.0, "weights differ");
        }
        if let Some(&bad) = shared.iter().find(|&&i| i >= a.len()) {
            pre.fail(t, Some(bad), 0.0, "shared channel out of range");
            continue;
        }
        for &i in shared {
            if a.channels()[i] != b.channels()[i] {
                pre.fail(t, Some(i), (a.channels()[i].x - b.channels()[i].x).abs(), "shared history differs");
            }
        }
        let (ba, bb) = (score_session(a, cfg), score_session(b, cfg));
        for &i in shared {
            insulated.observe(t, Some(i), ba.contributions[i] - bb.contributions[i], 0.0, "shared contribution differs");
        }
        let outside: f64 = (0..a.len())
            .filter(|i| !shared.contains(i))
            .map(|i| ba.contributions[i] - bb.contributions[i])
            .sum();
        let diff = ba.total - bb.total;
        let tol = 1e-12 * ba.total.abs().max(bb.total.abs()).max(1.0);
        separable.observe(t, None, diff - outside, tol, "total difference not explained by non-shared channels");
    }
    AuditReport::new("internality-replay", vec![pre, insulated, separable])
}
