//! Additive penalty clauses: contradiction (PC), sufficient reason (PSR),
//! two-view harmony and goal–action alignment.
//!
//! Each penalty is computed independently of the others and is added on top of
//! the unchanged base score.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_unit, AasError, Result};
use crate::kernel::{score_session, KernelConfig, SessionSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContradictionPair {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionConfig {
    pub pairs: Vec<ContradictionPair>,
    pub zeta: f64,
}

impl ContradictionConfig {
    pub fn new(pairs: Vec<ContradictionPair>, zeta: f64) -> Result<Self> {
        let cfg = Self { pairs, zeta };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        check_unit("zeta", self.zeta)?;
        for p in &self.pairs {
            if p.i == p.j {
                return Err(AasError::domain(format!("pair ({}, {}) has equal endpoints", p.i, p.j)));
            }
            if !(p.gamma.is_finite() && p.gamma >= 0.0) {
                return Err(AasError::domain(format!("pair weight {} must be >= 0", p.gamma)));
            }
        }
        Ok(())
    }

    /// `Γ = Σ γ`.
    pub fn total_weight(&self) -> f64 {
        self.pairs.iter().map(|p| p.gamma).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyOutcome {
    pub penalty: f64,
    pub base_total: f64,
    pub adjusted_total: f64,
    /// Uniform upper bound on `penalty`.
    pub bound: f64,
}

/// Per-pair contradiction term `φ(1 − [min(x_i, x_j) − ζ]⁺)`.
pub fn pc_term(xi: f64, xj: f64, zeta: f64, k: &KernelConfig) -> f64 {
    let margin = (xi.min(xj) - zeta).max(0.0);
    k.phi(1.0 - margin)
}

pub fn pc_penalty(snap: &SessionSnapshot, cfg: &ContradictionConfig, k: &KernelConfig) -> Result<PenaltyOutcome> {
    cfg.validate()?;
    let xs = snap.xs();
    let mut penalty = 0.0;
    for p in &cfg.pairs {
        check_index(p.i, xs.len())?;
        check_index(p.j, xs.len())?;
        penalty += p.gamma * pc_term(xs[p.i], xs[p.j], cfg.zeta, k);
    }
    let base_total = score_session(snap, k).total;
    Ok(PenaltyOutcome {
        penalty,
        base_total,
        adjusted_total: base_total + penalty,
        bound: cfg.total_weight() * k.phi_max(),
    })
}

/// Directed support network: `influence[i][j]` is the weight of `j → i`,
/// `inertia[i]` the weight of channel `i`'s own previous recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalNetwork {
    influence: Vec<Vec<f64>>,
    inertia: Vec<f64>,
    delta: f64,
}

impl CausalNetwork {
    pub const DEFAULT_DELTA: f64 = 0.01;

    pub fn new(influence: Vec<Vec<f64>>, inertia: Vec<f64>, delta: f64) -> Result<Self> {
        let m = inertia.len();
        if influence.len() != m {
            return Err(AasError::Arity { expected: m, found: influence.len() });
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(AasError::domain(format!("delta = {delta} must be > 0")));
        }
        for (i, row) in influence.iter().enumerate() {
            if row.len() != m {
                return Err(AasError::Arity { expected: m, found: row.len() });
            }
            if row.iter().chain([&inertia[i]]).any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(AasError::domain(format!("row {i} has a negative weight")));
            }
            let budget: f64 = row.iter().sum::<f64>() + inertia[i];
            if budget > 1.0 + 1e-12 {
                return Err(AasError::domain(format!("row {i} budget {budget} exceeds 1")));
            }
        }
        Ok(Self { influence, inertia, delta })
    }

    /// Inertia only: each claim is supported by its own previous value.
    pub fn self_inertia(m: usize, inertia: f64, delta: f64) -> Result<Self> {
        Self::new(vec![vec![0.0; m]; m], vec![inertia; m], delta)
    }

    pub fn len(&self) -> usize {
        self.inertia.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inertia.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `r_i = a_{i0} x_{t−1,i} + Σ_j a_{ij} x_{t,j}`.
    pub fn causal_mass(&self, prev_x: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let cross: f64 = self.influence[i].iter().zip(x).map(|(a, xj)| a * xj).sum();
                self.inertia[i] * prev_x[i] + cross
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrOutcome {
    pub penalty: f64,
    pub causal_mass: Vec<f64>,
    pub sufficiency: Vec<f64>,
    pub base_total: f64,
    pub adjusted_total: f64,
    pub bound: f64,
}

/// `s = min(1, (r + δ)/(x + δ))`.
pub fn sufficiency_ratio(r: f64, x: f64, delta: f64) -> f64 {
    ((r + delta) / (x + delta)).min(1.0)
}

pub fn psr_penalty(
    snap: &SessionSnapshot,
    prev_x: &[f64],
    net: &CausalNetwork,
    k: &KernelConfig,
) -> Result<PsrOutcome> {
    let m = snap.len();
    for len in [prev_x.len(), net.len()] {
        if len != m {
            return Err(AasError::Arity { expected: m, found: len });
        }
    }
    for &x in prev_x {
        check_unit("previous x", x)?;
    }
    let xs = snap.xs();
    let causal_mass = net.causal_mass(prev_x, &xs);
    let sufficiency: Vec<f64> = causal_mass
        .iter()
        .zip(&xs)
        .map(|(&r, &x)| sufficiency_ratio(r, x, net.delta()))
        .collect();
    let alphas = snap.alphas();
    let penalty = alphas.iter().zip(&sufficiency).map(|(a, &s)| a * k.phi(s)).sum();
    let base_total = score_session(snap, k).total;
    Ok(PsrOutcome {
        penalty,
        causal_mass,
        sufficiency,
        base_total,
        adjusted_total: base_total + penalty,
        bound: alphas.iter().sum::<f64>() * k.phi_max(),
    })
}

/// Pairing `h` of body channels onto soul channels, in view-local indices:
/// body channel `j` is matched with soul channel `h[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPairing {
    pub h: Vec<usize>,
}

/// Two disjoint views carved out of one snapshot.
///
/// `pairing[k]` is the (global) soul channel paired with `body[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSplit {
    pub soul: Vec<usize>,
    pub body: Vec<usize>,
    pub pairing: Vec<usize>,
}

impl ViewSplit {
    /// Split into soul and body snapshots, each with weights renormalised over
    /// its own channels, plus the local pairing.
    pub fn split(&self, snap: &SessionSnapshot) -> Result<(SessionSnapshot, SessionSnapshot, ViewPairing)> {
        let m = snap.len();
        if self.pairing.len() != self.body.len() {
            return Err(AasError::Arity { expected: self.body.len(), found: self.pairing.len() });
        }
        let mut owner = vec![0u8; m];
        for (&i, tag) in self.soul.iter().map(|i| (i, 1u8)).chain(self.body.iter().map(|i| (i, 2u8))) {
            check_index(i, m)?;
            if owner[i] != 0 {
                return Err(AasError::domain(format!("channel {i} appears twice across views")));
            }
            owner[i] = tag;
        }
        let h = self
            .pairing
            .iter()
            .map(|g| {
                self.soul
                    .iter()
                    .position(|s| s == g)
                    .ok_or_else(|| AasError::domain(format!("pairing target {g} is not a soul channel")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((sub_view(snap, &self.soul)?, sub_view(snap, &self.body)?, ViewPairing { h }))
    }
}

fn sub_view(snap: &SessionSnapshot, idx: &[usize]) -> Result<SessionSnapshot> {
    let mass: f64 = idx.iter().map(|&i| snap.weights()[i]).sum();
    if mass <= 0.0 {
        return Err(AasError::domain("view carries no weight"));
    }
    SessionSnapshot::new(
        snap.t(),
        idx.iter().map(|&i| snap.channels()[i]).collect(),
        idx.iter().map(|&i| snap.weights()[i] / mass).collect(),
        idx.iter().map(|&i| snap.metadata()[i].clone()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonyOutcome {
    pub harm: f64,
    pub soul_total: f64,
    pub body_total: f64,
    /// `AAS^S + AAS^B + HARM`.
    pub total: f64,
    /// Per body channel agreement `1 − |x^S_{h(j)} − x^B_j|`.
    pub agreement: Vec<f64>,
    pub bound: f64,
}

pub fn harmony_penalty(
    soul: &SessionSnapshot,
    body: &SessionSnapshot,
    pairing: &ViewPairing,
    k: &KernelConfig,
) -> Result<HarmonyOutcome> {
    if pairing.h.len() != body.len() {
        return Err(AasError::Arity { expected: body.len(), found: pairing.h.len() });
    }
    let mut harm = 0.0;
    let mut beta_sum = 0.0;
    let mut agreement = Vec::with_capacity(body.len());
    for (j, &i) in pairing.h.iter().enumerate() {
        check_index(i, soul.len())?;
        let m = (1.0 - (soul.channels()[i].x - body.channels()[j].x).abs()).clamp(0.0, 1.0);
        let beta = soul.alpha(i).min(body.alpha(j));
        harm += beta * k.phi(m);
        beta_sum += beta;
        agreement.push(m);
    }
    let soul_total = score_session(soul, k).total;
    let body_total = score_session(body, k).total;
    Ok(HarmonyOutcome {
        harm,
        soul_total,
        body_total,
        total: soul_total + body_total + harm,
        agreement,
        bound: beta_sum * k.phi_max(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOutcome {
    pub harm: f64,
    pub base_total: f64,
    pub total: f64,
    pub goals: Vec<i8>,
    pub efforts: Vec<i8>,
    /// `1 − |g − e|/2 ∈ {0, ½, 1}`.
    pub alignments: Vec<f64>,
    pub bound: f64,
}

/// Sign with an optional dead band; with `band = 0` only an exact zero maps to 0.
pub fn banded_sign(v: f64, band: f64) -> i8 {
    if v == 0.0 || v.abs() < band {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Penalise channels whose realised movement disagrees with the direction of
/// their teleological target.
pub fn alignment_penalty(
    snap_t: &SessionSnapshot,
    snap_next: &SessionSnapshot,
    targets: &[f64],
    dead_band: f64,
    k: &KernelConfig,
) -> Result<AlignmentOutcome> {
    let m = snap_t.len();
    for len in [snap_next.len(), targets.len()] {
        if len != m {
            return Err(AasError::Arity { expected: m, found: len });
        }
    }
    if !(dead_band.is_finite() && dead_band >= 0.0) {
        return Err(AasError::domain(format!("dead band {dead_band} must be >= 0")));
    }
    if let Some(y) = targets.iter().find(|y| !(**y > 0.0 && **y <= 1.0)) {
        return Err(AasError::domain(format!("target {y} outside (0, 1]")));
    }
    let mut goals = Vec::with_capacity(m);
    let mut efforts = Vec::with_capacity(m);
    let mut alignments = Vec::with_capacity(m);
    let mut harm = 0.0;
    for i in 0..m {
        let x = snap_t.channels()[i].x;
        let g = banded_sign(targets[i] - x, dead_band);
        let e = banded_sign(snap_next.channels()[i].x - x, dead_band);
        let a = 1.0 - 0.5 * f64::from((g - e).abs());
        harm += snap_t.alpha(i) * k.phi(a);
        goals.push(g);
        efforts.push(e);
        alignments.push(a);
    }
    let base_total = score_session(snap_t, k).total;
    Ok(AlignmentOutcome {
        harm,
        base_total,
        total: base_total + harm,
        goals,
        efforts,
        alignments,
        bound: snap_t.total_alpha() * k.phi_max(),
    })
}
