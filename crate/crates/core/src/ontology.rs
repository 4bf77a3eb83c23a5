//! Structural clauses: refinement and embedding invariance, compound bounds,
//! windowlessness audits, intrinsic signatures and deduplication.

use serde::{Deserialize, Serialize};

use crate::audit::{AuditReport, ProbeResult};
use crate::error::{check_index, check_unit, AasError, Result};
use crate::kernel::{
    breakdown_from_mass, check_arity, score_session, ChannelState, KernelConfig,
    NormalizedEntropySpread, SessionSnapshot, WEIGHT_TOLERANCE,
};

/// Split one channel into sub-channels that inherit its `(x, R, metadata)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementPlan {
    pub target_channel: usize,
    pub sub_weights: Vec<f64>,
}

/// Replace the target channel, in place, by one sub-channel per sub-weight.
pub fn apply_refinement(snap: &SessionSnapshot, plan: &RefinementPlan) -> Result<SessionSnapshot> {
    let target = plan.target_channel;
    check_index(target, snap.len())?;
    if plan.sub_weights.is_empty() {
        return Err(AasError::domain("refinement needs at least one sub-weight"));
    }
    if plan.sub_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(AasError::domain("sub-weights must be nonnegative"));
    }
    let sum: f64 = plan.sub_weights.iter().sum();
    let expected = snap.weights()[target];
    if (sum - expected).abs() > WEIGHT_TOLERANCE {
        return Err(AasError::WeightSum { sum, expected });
    }

    let k = plan.sub_weights.len();
    let mut channels = Vec::with_capacity(snap.len() + k - 1);
    let mut weights = Vec::with_capacity(snap.len() + k - 1);
    let mut metadata = Vec::with_capacity(snap.len() + k - 1);
    for i in 0..snap.len() {
        if i == target {
            for &w in &plan.sub_weights {
                channels.push(snap.channels()[i]);
                weights.push(w);
                metadata.push(snap.metadata()[i].clone());
            }
        } else {
            channels.push(snap.channels()[i]);
            weights.push(snap.weights()[i]);
            metadata.push(snap.metadata()[i].clone());
        }
    }
    SessionSnapshot::new(snap.t(), channels, weights, metadata)
}

/// A compound formed from several monads, each a session stream of its own.
///
/// `overlaps[j][t][i]` is the compound-level overlap `Λ` of channel `i` of
/// monad `j` at stream position `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundSpec {
    pub monads: Vec<Vec<SessionSnapshot>>,
    pub mixture_weights: Vec<f64>,
    pub overlaps: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundScore {
    pub compound_total: f64,
    pub standalone_mix: f64,
}

/// Overlap-masked compound score at stream position `t` against the
/// mixture of stand-alone scores.
pub fn compound_score(spec: &CompoundSpec, t: usize, cfg: &KernelConfig) -> Result<CompoundScore> {
    let n = spec.monads.len();
    if spec.mixture_weights.len() != n {
        return Err(AasError::Arity {
            expected: n,
            found: spec.mixture_weights.len(),
        });
    }
    if spec.overlaps.len() != n {
        return Err(AasError::Arity {
            expected: n,
            found: spec.overlaps.len(),
        });
    }
    if spec.mixture_weights.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(AasError::domain("mixture weights must be nonnegative"));
    }
    let pi_sum: f64 = spec.mixture_weights.iter().sum();
    if (pi_sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(AasError::WeightSum {
            sum: pi_sum,
            expected: 1.0,
        });
    }

    let mut compound_total = 0.0;
    let mut standalone_mix = 0.0;
    for (j, stream) in spec.monads.iter().enumerate() {
        let snap = stream.get(t).ok_or(AasError::Index {
            index: t,
            len: stream.len(),
        })?;
        let lambda = spec.overlaps[j].get(t).ok_or(AasError::Index {
            index: t,
            len: spec.overlaps[j].len(),
        })?;
        if lambda.len() != snap.len() {
            return Err(AasError::Arity {
                expected: snap.len(),
                found: lambda.len(),
            });
        }
        let pi = spec.mixture_weights[j];
        let mut masked = 0.0;
        let mut alone = 0.0;
        for (i, (c, &l)) in snap.channels().iter().zip(lambda).enumerate() {
            check_unit("overlap", l)?;
            if l < c.r {
                return Err(AasError::precondition(format!(
                    "overlap {l} below stand-alone redundancy {} (monad {j}, channel {i})",
                    c.r
                )));
            }
            let w = snap.weights()[i];
            let phi = cfg.phi(c.x);
            masked += w * (1.0 - l) * phi;
            alone += w * (1.0 - c.r) * phi;
        }
        compound_total += pi * masked;
        standalone_mix += pi * alone;
    }
    Ok(CompoundScore {
        compound_total,
        standalone_mix,
    })
}

/// Source of per-channel redundancy values for audit recomputation.
pub trait RedundancyEstimator {
    fn redundancy(&self, snap: &SessionSnapshot) -> Vec<f64>;
}

/// Takes `R` as given on the snapshot; no coupling between channels.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticRedundancy;

impl RedundancyEstimator for StaticRedundancy {
    fn redundancy(&self, snap: &SessionSnapshot) -> Vec<f64> {
        snap.rs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "kebab-case")]
pub enum Probe {
    /// Replace every metadata blob by a seeded scramble of itself.
    MetadataEmbedding { seed: u64 },
    /// Append a channel with `w = 0`.
    GhostZeroWeight,
    /// Append a channel with `R = 1`.
    GhostFullRedundancy,
    /// Shift `x` of one channel by `delta` (clamped to [0, 1]) at every step.
    ContentBump { channel: usize, delta: f64 },
}

impl Probe {
    fn id(&self) -> String {
        match self {
            Probe::MetadataEmbedding { .. } => "metadata-embedding".into(),
            Probe::GhostZeroWeight => "ghost-zero-weight".into(),
            Probe::GhostFullRedundancy => "ghost-full-redundancy".into(),
            Probe::ContentBump { channel, .. } => format!("content-bump-{channel}"),
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn scramble(blob: &str, seed: u64) -> String {
    let mut h = seed;
    for b in blob.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    format!("{:016x}{}", mix64(h), blob.chars().rev().collect::<String>())
}

fn ghost_probe(stream: &[SessionSnapshot], cfg: &KernelConfig, full_redundancy: bool) -> ProbeResult {
    let (id, desc) = if full_redundancy {
        ("ghost-full-redundancy", "ghost channel with R = 1 leaves scores unchanged")
    } else {
        ("ghost-zero-weight", "ghost channel with w = 0 leaves scores unchanged")
    };
    let mut probe = ProbeResult::new(id, desc);
    for snap in stream {
        let base = score_session(snap, cfg);
        let probed = if full_redundancy {
            // The ghost carries positive weight, so masses no longer come from a
            // normalised snapshot; score the raw masses directly.
            let ghost_weight = 1.0 / (snap.len() + 1) as f64;
            let mut alphas = snap.alphas();
            let mut xs = snap.xs();
            let ghost_r = 1.0;
            alphas.push(ghost_weight * (1.0 - ghost_r));
            xs.push(0.0);
            breakdown_from_mass(snap.t(), &alphas, &xs, cfg, &NormalizedEntropySpread)
        } else {
            let mut channels = snap.channels().to_vec();
            let mut weights = snap.weights().to_vec();
            let mut metadata = snap.metadata().to_vec();
            channels.push(ChannelState { x: 0.0, r: 0.0 });
            weights.push(0.0);
            metadata.push("ghost".into());
            match SessionSnapshot::new(snap.t(), channels, weights, metadata) {
                Ok(g) => score_session(&g, cfg),
                Err(e) => {
                    probe.fail(Some(snap.t()), None, f64::NAN, &format!("ghost rejected: {e}"));
                    continue;
                }
            }
        };
        let t = Some(snap.t());
        probe.observe(t, None, probed.total - base.total, 0.0, "total changed");
        let ghost = *probed.contributions.last().unwrap_or(&0.0);
        probe.observe(t, Some(snap.len()), ghost, 0.0, "ghost contributes");
        let same_shape = probed.contributions[..snap.len()] == base.contributions[..]
            && probed.peak_share == base.peak_share
            && probed.contrib_entropy == base.contrib_entropy
            && probed.apper_level == base.apper_level
            && probed.active_count == base.active_count;
        if !same_shape {
            probe.fail(t, None, 0.0, "breakdown changed");
        }
    }
    probe
}

fn contributions_with(
    snap: &SessionSnapshot,
    xs: &[f64],
    estimator: &dyn RedundancyEstimator,
    cfg: &KernelConfig,
) -> Vec<f64> {
    let rs = estimator.redundancy(snap);
    snap.weights()
        .iter()
        .zip(&rs)
        .zip(xs)
        .map(|((w, r), &x)| w * (1.0 - r) * cfg.phi(x))
        .collect()
}

/// Run the windowlessness probes over a stream.
///
/// Metadata embeddings and ghost channels must leave every breakdown
/// identical. A content bump on channel `j` may only move other channels'
/// contributions through the redundancy estimator; with [`StaticRedundancy`]
/// they must not move at all.
pub fn windowless_audit(
    stream: &[SessionSnapshot],
    probes: &[Probe],
    cfg: &KernelConfig,
    estimator: &dyn RedundancyEstimator,
) -> AuditReport {
    let results = probes
        .iter()
        .map(|probe| match *probe {
            Probe::MetadataEmbedding { seed } => {
                let mut res = ProbeResult::new(
                    probe.id(),
                    "metadata embedding leaves every breakdown identical",
                );
                for snap in stream {
                    let embedded: Vec<String> =
                        snap.metadata().iter().map(|m| scramble(m, seed)).collect();
                    let moved = snap.with_metadata(embedded).expect("arity preserved");
                    let (a, b) = (score_session(snap, cfg), score_session(&moved, cfg));
                    res.observe(Some(snap.t()), None, a.total - b.total, 0.0, "total changed");
                    if a != b {
                        res.fail(Some(snap.t()), None, 0.0, "breakdown changed");
                    }
                }
                res
            }
            Probe::GhostZeroWeight => ghost_probe(stream, cfg, false),
            Probe::GhostFullRedundancy => ghost_probe(stream, cfg, true),
            Probe::ContentBump { channel, delta } => {
                let mut res = ProbeResult::new(
                    probe.id(),
                    "bumping one channel leaves other contributions unchanged",
                );
                for snap in stream {
                    if channel >= snap.len() {
                        res.fail(Some(snap.t()), Some(channel), f64::NAN, "channel out of range");
                        continue;
                    }
                    let xs = snap.xs();
                    let mut bumped_xs = xs.clone();
                    bumped_xs[channel] = (xs[channel] + delta).clamp(0.0, 1.0);
                    let bumped = snap.with_xs(&bumped_xs).expect("clamped into range");
                    let before = contributions_with(snap, &xs, estimator, cfg);
                    let after = contributions_with(&bumped, &bumped_xs, estimator, cfg);
                    for (i, (a, b)) in before.iter().zip(&after).enumerate() {
                        if i != channel {
                            res.observe(Some(snap.t()), Some(i), b - a, 0.0, "cross-channel leak");
                        }
                    }
                }
                res
            }
        })
        .collect();
    AuditReport::new("windowless", results)
}

/// Per-step `(w_i, φ(x_{t,i}), ΔΦ_{t,i})` of one channel, with signed ΔΦ.
///
/// The first step has no predecessor and carries `ΔΦ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicSignature {
    pub weights: Vec<f64>,
    pub phi: Vec<f64>,
    pub delta_phi: Vec<f64>,
}

impl IntrinsicSignature {
    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    /// Positive-part one-step rises `[ΔΦ]⁺`.
    pub fn delta_phi_plus(&self) -> Vec<f64> {
        self.delta_phi.iter().map(|d| d.max(0.0)).collect()
    }
}

pub fn intrinsic_signature(
    stream: &[SessionSnapshot],
    channel: usize,
    cfg: &KernelConfig,
) -> Result<IntrinsicSignature> {
    let m = check_arity(stream)?;
    if !stream.is_empty() {
        check_index(channel, m)?;
    }
    let weights = stream.iter().map(|s| s.weights()[channel]).collect();
    let phi: Vec<f64> = stream
        .iter()
        .map(|s| cfg.phi(s.channels()[channel].x))
        .collect();
    let delta_phi = phi
        .iter()
        .enumerate()
        .map(|(t, p)| if t == 0 { 0.0 } else { p - phi[t - 1] })
        .collect();
    Ok(IntrinsicSignature {
        weights,
        phi,
        delta_phi,
    })
}

/// `sup_t (|Δw| + |Δφ| + |ΔΔΦ|)` between two signatures.
pub fn intrinsic_distance(a: &IntrinsicSignature, b: &IntrinsicSignature) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(AasError::Arity {
            expected: a.horizon(),
            found: b.horizon(),
        });
    }
    Ok((0..a.horizon())
        .map(|t| {
            (a.weights[t] - b.weights[t]).abs()
                + (a.phi[t] - b.phi[t]).abs()
                + (a.delta_phi[t] - b.delta_phi[t]).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    /// Lowest channel index of the group.
    pub representative: usize,
    /// All members in ascending order, representative included.
    pub members: Vec<usize>,
}

/// Group channels whose intrinsic signatures and activity masses coincide
/// within `tolerance`. Only groups with at least two members are returned.
pub fn dedup_plan(
    stream: &[SessionSnapshot],
    tolerance: f64,
    cfg: &KernelConfig,
) -> Result<Vec<MergeGroup>> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(AasError::domain(format!("tolerance {tolerance} must be >= 0")));
    }
    let m = check_arity(stream)?;
    let signatures = (0..m)
        .map(|i| intrinsic_signature(stream, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    let same = |i: usize, j: usize| -> Result<bool> {
        let d = intrinsic_distance(&signatures[i], &signatures[j])?;
        let alpha_match = stream
            .iter()
            .all(|s| (s.alpha(i) - s.alpha(j)).abs() <= tolerance);
        Ok(d <= tolerance && alpha_match)
    };

    let mut assigned = vec![false; m];
    let mut groups = Vec::new();
    for i in 0..m {
        if assigned[i] {
            continue;
        }
        let mut members = vec![i];
        for j in i + 1..m {
            if !assigned[j] && same(i, j)? {
                members.push(j);
                assigned[j] = true;
            }
        }
        if members.len() > 1 {
            groups.push(MergeGroup {
                representative: i,
                members,
            });
        }
    }
    Ok(groups)
}

/// Fold every group onto its representative, summing weights.
pub fn apply_merge(stream: &[SessionSnapshot], groups: &[MergeGroup]) -> Result<Vec<SessionSnapshot>> {
    let m = check_arity(stream)?;
    let mut owner: Vec<Option<usize>> = vec![None; m];
    for g in groups {
        for &i in &g.members {
            check_index(i, m)?;
            if owner[i].replace(g.representative).is_some() {
                return Err(AasError::domain(format!("channel {i} in more than one group")));
            }
        }
        if owner[g.representative] != Some(g.representative) {
            return Err(AasError::domain("representative must be a group member"));
        }
    }
    stream
        .iter()
        .map(|snap| {
            let mut channels = Vec::new();
            let mut weights = Vec::new();
            let mut metadata = Vec::new();
            for i in 0..m {
                match owner[i] {
                    Some(rep) if rep != i => continue,
                    _ => {}
                }
                let w = if owner[i] == Some(i) {
                    (0..m)
                        .filter(|&k| owner[k] == Some(i))
                        .map(|k| snap.weights()[k])
                        .sum()
                } else {
                    snap.weights()[i]
                };
                channels.push(snap.channels()[i]);
                weights.push(w);
                metadata.push(snap.metadata()[i].clone());
            }
            SessionSnapshot::new(snap.t(), channels, weights, metadata)
        })
        .collect()
}
