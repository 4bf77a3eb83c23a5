//! The ε-regularised surprisal kernel and per-session score breakdowns.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_unit, AasError, Result};
use crate::info::entropy_bits;

/// Tolerance on `Σ w = 1`.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelConfig {
    epsilon: f64,
}

impl KernelConfig {
    pub const DEFAULT_EPSILON: f64 = 0.01;

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self { epsilon })
        } else {
            Err(AasError::domain(format!("epsilon = {epsilon} must be > 0")))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `φ_ε(x) = log2((1+ε)/(x+ε))` without range checks.
    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        ((1.0 + self.epsilon) / (x + self.epsilon)).log2()
    }

    /// `φ_ε(0) = log2((1+ε)/ε)`, the largest value the kernel takes on [0, 1].
    #[inline]
    pub fn phi_max(&self) -> f64 {
        self.phi(0.0)
    }

    /// Lipschitz constant of the kernel on [0, 1]: `1/(ε ln 2)`.
    #[inline]
    pub fn slope_bound(&self) -> f64 {
        1.0 / (self.epsilon * std::f64::consts::LN_2)
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// Penalty in bits for recall `x`.
pub fn eval_kernel(x: f64, cfg: &KernelConfig) -> Result<f64> {
    check_unit("x", x)?;
    Ok(cfg.phi(x))
}

/// Recall score `x` and redundancy `R` of one channel at one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub x: f64,
    pub r: f64,
}

impl ChannelState {
    pub fn new(x: f64, r: f64) -> Result<Self> {
        check_unit("x", x)?;
        check_unit("R", r)?;
        Ok(Self { x, r })
    }
}

/// One session's channel states, weights and opaque per-channel metadata.
///
/// Metadata is carried along for embeddings and provenance but is never read
/// by any scoring routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    t: u64,
    channels: Vec<ChannelState>,
    weights: Vec<f64>,
    metadata: Vec<String>,
}

impl SessionSnapshot {
    pub fn new(
        t: u64,
        channels: Vec<ChannelState>,
        weights: Vec<f64>,
        metadata: Vec<String>,
    ) -> Result<Self> {
        let snap = Self {
            t,
            channels,
            weights,
            metadata,
        };
        snap.validate()?;
        Ok(snap)
    }

    /// Snapshot with empty metadata blobs.
    pub fn without_metadata(t: u64, channels: Vec<ChannelState>, weights: Vec<f64>) -> Result<Self> {
        let metadata = vec![String::new(); channels.len()];
        Self::new(t, channels, weights, metadata)
    }

    /// Convenience constructor from parallel `x` and `R` slices.
    pub fn from_xr(t: u64, xs: &[f64], rs: &[f64], weights: &[f64]) -> Result<Self> {
        if xs.len() != rs.len() {
            return Err(AasError::Arity {
                expected: xs.len(),
                found: rs.len(),
            });
        }
        let channels = xs
            .iter()
            .zip(rs)
            .map(|(&x, &r)| ChannelState::new(x, r))
            .collect::<Result<Vec<_>>>()?;
        Self::without_metadata(t, channels, weights.to_vec())
    }

    fn validate(&self) -> Result<()> {
        let m = self.channels.len();
        if self.weights.len() != m {
            return Err(AasError::Arity {
                expected: m,
                found: self.weights.len(),
            });
        }
        if self.metadata.len() != m {
            return Err(AasError::Arity {
                expected: m,
                found: self.metadata.len(),
            });
        }
        for c in &self.channels {
            check_unit("x", c.x)?;
            check_unit("R", c.r)?;
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(AasError::domain(format!("weight {w} must be nonnegative")));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(AasError::WeightSum { sum, expected: 1.0 });
        }
        Ok(())
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn metadata(&self) -> &[String] {
        &self.metadata
    }

    pub fn xs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.x).collect()
    }

    pub fn rs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.r).collect()
    }

    /// Activity mass `α_i = w_i (1 − R_i)`.
    pub fn alpha(&self, i: usize) -> f64 {
        self.weights[i] * (1.0 - self.channels[i].r)
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.alpha(i)).collect()
    }

    /// Total activity mass `A_t = Σ α_i`.
    pub fn total_alpha(&self) -> f64 {
        self.alphas().iter().sum()
    }

    pub fn with_t(&self, t: u64) -> Self {
        Self { t, ..self.clone() }
    }

    pub fn with_metadata(&self, metadata: Vec<String>) -> Result<Self> {
        Self::new(self.t, self.channels.clone(), self.weights.clone(), metadata)
    }

    pub fn with_channel(&self, i: usize, state: ChannelState) -> Result<Self> {
        check_index(i, self.len())?;
        let mut channels = self.channels.clone();
        channels[i] = ChannelState::new(state.x, state.r)?;
        Self::new(self.t, channels, self.weights.clone(), self.metadata.clone())
    }

    pub fn with_xs(&self, xs: &[f64]) -> Result<Self> {
        if xs.len() != self.len() {
            return Err(AasError::Arity {
                expected: self.len(),
                found: xs.len(),
            });
        }
        let channels = self
            .channels
            .iter()
            .zip(xs)
            .map(|(c, &x)| ChannelState::new(x, c.r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.t, channels, self.weights.clone(), self.metadata.clone())
    }

    /// Reorder channels so that position `k` of the result holds channel `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let m = self.len();
        let mut seen = vec![false; m];
        if order.len() != m {
            return Err(AasError::Arity {
                expected: m,
                found: order.len(),
            });
        }
        for &i in order {
            check_index(i, m)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(AasError::domain(format!("index {i} repeated in permutation")));
            }
        }
        Ok(Self {
            t: self.t,
            channels: order.iter().map(|&i| self.channels[i]).collect(),
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            metadata: order.iter().map(|&i| self.metadata[i].clone()).collect(),
        })
    }
}

/// Estimator for the normalised spread `κ_t ∈ [0, 1]` of the contribution shares.
pub trait SpreadEstimator {
    fn kappa(&self, shares: &[f64], entropy_bits: f64, active_count: usize) -> f64;
}

/// `κ = H / log2(m)` for `m ≥ 2`, else 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedEntropySpread;

impl SpreadEstimator for NormalizedEntropySpread {
    fn kappa(&self, _shares: &[f64], entropy_bits: f64, active_count: usize) -> f64 {
        if active_count >= 2 {
            (entropy_bits / (active_count as f64).log2()).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub t: u64,
    pub epsilon: f64,
    pub contributions: Vec<f64>,
    pub total: f64,
    pub shares: Vec<f64>,
    pub peak_share: f64,
    pub contrib_entropy: f64,
    pub kappa: f64,
    pub apper_level: f64,
    pub active_count: usize,
}

impl ScoreBreakdown {
    /// Bits of penalty carried by the largest single channel.
    pub fn max_contribution(&self) -> f64 {
        self.contributions.iter().copied().fold(0.0, f64::max)
    }
}

pub fn score_session(snap: &SessionSnapshot, cfg: &KernelConfig) -> ScoreBreakdown {
    score_session_with(snap, cfg, &NormalizedEntropySpread)
}

pub fn score_session_with(
    snap: &SessionSnapshot,
    cfg: &KernelConfig,
    spread: &dyn SpreadEstimator,
) -> ScoreBreakdown {
    breakdown_from_mass(snap.t, &snap.alphas(), &snap.xs(), cfg, spread)
}

/// Breakdown for arbitrary nonnegative masses and recall scores.
///
/// Used for sessions as well as for hierarchy levels and audit probes where the
/// masses need not come from normalised weights.
pub fn breakdown_from_mass(
    t: u64,
    alphas: &[f64],
    xs: &[f64],
    cfg: &KernelConfig,
    spread: &dyn SpreadEstimator,
) -> ScoreBreakdown {
    debug_assert_eq!(alphas.len(), xs.len());
    let contributions: Vec<f64> = alphas
        .iter()
        .zip(xs)
        .map(|(&a, &x)| a * cfg.phi(x))
        .collect();
    let total: f64 = contributions.iter().sum();
    let active_count = contributions.iter().filter(|&&c| c > 0.0).count();
    if total <= 0.0 {
        return ScoreBreakdown {
            t,
            epsilon: cfg.epsilon(),
            shares: vec![0.0; contributions.len()],
            contributions,
            total: 0.0,
            peak_share: 0.0,
            contrib_entropy: 0.0,
            kappa: 0.0,
            apper_level: 0.0,
            active_count: 0,
        };
    }
    let shares: Vec<f64> = contributions.iter().map(|c| c / total).collect();
    let peak_share = shares.iter().copied().fold(0.0, f64::max);
    let contrib_entropy = entropy_bits(&shares);
    let kappa = spread
        .kappa(&shares, contrib_entropy, active_count)
        .clamp(0.0, 1.0);
    ScoreBreakdown {
        t,
        epsilon: cfg.epsilon(),
        contributions,
        total,
        shares,
        peak_share,
        contrib_entropy,
        kappa,
        apper_level: (1.0 - kappa) * peak_share,
        active_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrajectory {
    pub mass: f64,
    /// α-weighted mean recall; `None` when the channel never carries mass.
    pub weighted_mean_x: Option<f64>,
    pub time_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub channels: Vec<ChannelTrajectory>,
}

pub(crate) fn check_arity(stream: &[SessionSnapshot]) -> Result<usize> {
    let m = stream.first().map_or(0, SessionSnapshot::len);
    for snap in stream {
        if snap.len() != m {
            return Err(AasError::Arity {
                expected: m,
                found: snap.len(),
            });
        }
    }
    Ok(m)
}

/// Per-channel activity mass, α-weighted mean recall and α-based time-spread entropy.
pub fn trajectory_summary(
    stream: &[SessionSnapshot],
    _cfg: &KernelConfig,
) -> Result<TrajectorySummary> {
    let m = check_arity(stream)?;
    let channels = (0..m)
        .map(|i| {
            let alphas: Vec<f64> = stream.iter().map(|s| s.alpha(i)).collect();
            let mass: f64 = alphas.iter().sum();
            let weighted_mean_x = (mass > 0.0).then(|| {
                let num: f64 = stream
                    .iter()
                    .zip(&alphas)
                    .map(|(s, a)| a * s.channels()[i].x)
                    .sum();
                (num / mass).clamp(0.0, 1.0)
            });
            ChannelTrajectory {
                mass,
                weighted_mean_x,
                time_entropy: crate::info::normalized_entropy_bits(&alphas),
            }
        })
        .collect();
    Ok(TrajectorySummary {
        steps: stream.len(),
        channels,
    })
}
