//! Clause configuration, presets and resolution against a session's arity.

use std::fs;
use std::path::Path;

use aas_core::coherence::{CausalNetwork, ContradictionConfig, ContradictionPair, ViewSplit};
use aas_core::hierarchy::{GroupingView, HierarchyNode};
use aas_core::ontology::Probe;
use aas_core::representation::RationalPrior;
use aas_core::teleology::GovernancePolicy;
use aas_core::{KernelConfig, SessionSnapshot};
use serde::{Deserialize, Serialize};

use crate::error::{ClauseContext, CliError, Result};

pub const PRESETS: [&str; 2] = ["none", "all-clauses"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClauseConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub audit: AuditClause,
    pub dynamics: DynamicsClause,
    pub representation: RepresentationClause,
    pub contradiction: ContradictionClause,
    pub sufficient_reason: SufficientReasonClause,
    pub harmony: HarmonyClause,
    pub alignment: AlignmentClause,
    pub hierarchy: HierarchyClause,
    pub teleology: TeleologyClause,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditClause {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Probe>>,
    pub dedup_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsClause {
    pub enabled: bool,
    pub lx: f64,
    pub lr: f64,
    pub dt: f64,
}

impl Default for DynamicsClause {
    fn default() -> Self {
        Self { enabled: false, lx: 0.2, lr: 0.05, dt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationClause {
    pub enabled: bool,
    pub lambda: f64,
    pub tau: f64,
    pub delta: f64,
    pub eta_smoothing: f64,
    pub beta: f64,
    /// Channels held to the truth floor; by default those meeting it at each session.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rational_set: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

impl Default for RepresentationClause {
    fn default() -> Self {
        Self {
            enabled: false,
            lambda: 0.9,
            tau: 0.05,
            delta: 0.05,
            eta_smoothing: 1e-6,
            beta: 0.5,
            rational_set: None,
            prior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContradictionClause {
    pub enabled: bool,
    pub zeta: f64,
    /// Defaults to disjoint adjacent pairs `(0,1), (2,3), …` with unit weight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<ContradictionPair>>,
}

impl Default for ContradictionClause {
    fn default() -> Self {
        Self { enabled: false, zeta: 0.1, pairs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SufficientReasonClause {
    pub enabled: bool,
    pub delta: f64,
    /// Per-channel self support; defaults to 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia: Option<Vec<f64>>,
    /// `influence[i][j]` is the support of `j` for `i`; defaults to none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub influence: Option<Vec<Vec<f64>>>,
}

impl Default for SufficientReasonClause {
    fn default() -> Self {
        Self { enabled: false, delta: CausalNetwork::DEFAULT_DELTA, inertia: None, influence: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonyClause {
    pub enabled: bool,
    /// Defaults to the first half of the channels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soul: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Vec<usize>>,
    /// Soul channel paired with each body channel; defaults to position modulo the soul size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentClause {
    pub enabled: bool,
    pub dead_band: f64,
    /// Per-channel targets in (0, 1]; defaults to 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
}

/// Channel tree: a leaf is a channel index, a node is a list of subtrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeSpec {
    Leaf(usize),
    Node(Vec<TreeSpec>),
}

impl TreeSpec {
    /// Balanced binary tree over `lo..hi`.
    pub fn binary(lo: usize, hi: usize) -> Self {
        if hi - lo == 1 {
            Self::Leaf(lo)
        } else {
            let mid = lo + (hi - lo) / 2;
            Self::Node(vec![Self::binary(lo, mid), Self::binary(mid, hi)])
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        match self {
            Self::Leaf(i) => vec![*i],
            Self::Node(c) => c.iter().flat_map(TreeSpec::leaves).collect(),
        }
    }

    /// Leaf sets under each child of the root.
    pub fn top_groups(&self) -> Vec<Vec<usize>> {
        match self {
            Self::Leaf(i) => vec![vec![*i]],
            Self::Node(c) => c.iter().map(TreeSpec::leaves).collect(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if let Some(empty) = self.find_empty() {
            return Err(CliError::validation(format!("hierarchy.tree: {empty}")));
        }
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves != (0..m).collect::<Vec<_>>() {
            return Err(CliError::validation(format!("hierarchy.tree must cover channels 0..{m} exactly once")));
        }
        Ok(())
    }

    fn find_empty(&self) -> Option<&'static str> {
        match self {
            Self::Leaf(_) => None,
            Self::Node(c) if c.is_empty() => Some("empty node"),
            Self::Node(c) => c.iter().find_map(TreeSpec::find_empty),
        }
    }

    /// Tree over one session, with leaf mass `α_i` and score `x_i`.
    pub fn build(&self, snap: &SessionSnapshot) -> HierarchyNode {
        self.build_at(snap, &mut 0)
    }

    fn build_at(&self, snap: &SessionSnapshot, next_id: &mut usize) -> HierarchyNode {
        match self {
            Self::Leaf(i) => HierarchyNode::leaf(format!("c{i}"), snap.alpha(*i), snap.channels()[*i].x),
            Self::Node(c) => {
                let id = format!("n{next_id}");
                *next_id += 1;
                HierarchyNode::internal(id, c.iter().map(|s| s.build_at(snap, next_id)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyClause {
    pub enabled: bool,
    /// Defaults to a balanced binary tree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSpec>,
    /// Defaults to the leaf sets under the root's children.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
    pub window: usize,
    pub margin: f64,
    /// Within-group redundancy is this fraction of the session's `R`.
    pub group_redundancy_scale: f64,
}

impl Default for HierarchyClause {
    fn default() -> Self {
        Self { enabled: false, tree: None, groups: None, window: 3, margin: 0.05, group_redundancy_scale: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleologyClause {
    pub enabled: bool,
    pub gamma: f64,
    pub window: usize,
    pub eta: f64,
    pub stride: usize,
    pub promote_after: usize,
    pub rollback_after: usize,
}

impl Default for TeleologyClause {
    fn default() -> Self {
        let policy = GovernancePolicy::default();
        Self {
            enabled: false,
            gamma: aas_core::teleology::DEFAULT_GAMMA,
            window: 3,
            eta: 0.05,
            stride: 1,
            promote_after: policy.promote_after,
            rollback_after: policy.rollback_after,
        }
    }
}

impl ClauseConfig {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::default()),
            "all-clauses" => {
                let mut c = Self::default();
                c.audit.enabled = true;
                c.dynamics.enabled = true;
                c.representation.enabled = true;
                c.contradiction.enabled = true;
                c.sufficient_reason.enabled = true;
                c.harmony.enabled = true;
                c.alignment.enabled = true;
                c.hierarchy.enabled = true;
                c.teleology.enabled = true;
                Some(c)
            }
            _ => None,
        }
    }

    /// A file path (TOML, or JSON when the extension is `.json`) or a preset name.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.exists() {
            if let Some(c) = Self::preset(arg) {
                return Ok(c);
            }
            if path.extension().is_none() && path.components().count() == 1 {
                return Err(CliError::validation(format!(
                    "unknown config preset {arg:?} (expected none, all-clauses or a file path)"
                )));
            }
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path.extension().is_some_and(|e| e == "json"))
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, json: bool) -> std::result::Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Fill every derived default for `m` channels and build the typed clause
    /// parameters. The returned plan echoes the completed configuration.
    pub fn resolve(&self, m: usize, header_epsilon: f64, seed: u64) -> Result<Plan> {
        let epsilon = self.epsilon.unwrap_or(header_epsilon);
        let kernel = KernelConfig::new(epsilon).clause("epsilon")?;
        let mut echo = self.clone();
        echo.epsilon = Some(epsilon);
        let check_indices = |name: &str, idx: &[usize]| -> Result<()> {
            match idx.iter().find(|&&i| i >= m) {
                Some(i) => Err(CliError::validation(format!("{name}: channel {i} out of range for {m} channels"))),
                None => Ok(()),
            }
        };

        let audit = if self.audit.enabled {
            let probes = self.audit.probes.clone().unwrap_or_else(|| {
                let mut p = vec![Probe::MetadataEmbedding { seed }, Probe::GhostZeroWeight, Probe::GhostFullRedundancy];
                p.extend((0..m).map(|channel| Probe::ContentBump { channel, delta: 0.1 }));
                p
            });
            if !(self.audit.dedup_tolerance.is_finite() && self.audit.dedup_tolerance >= 0.0) {
                return Err(CliError::validation("audit.dedup_tolerance must be >= 0"));
            }
            echo.audit.probes = Some(probes.clone());
            Some(AuditPlan { probes, dedup_tolerance: self.audit.dedup_tolerance })
        } else {
            None
        };

        let dynamics = if self.dynamics.enabled {
            let d = &self.dynamics;
            let cap = aas_core::dynamics::rate_cap(&kernel, d.lx, d.lr).clause("dynamics")?;
            if !(d.dt.is_finite() && d.dt > 0.0) {
                return Err(CliError::validation("dynamics.dt must be > 0"));
            }
            Some(DynamicsPlan { cap, dt: d.dt })
        } else {
            None
        };

        let representation = if self.representation.enabled {
            let r = &self.representation;
            aas_core::representation::MemoryTrace::new(r.lambda, m).clause("representation")?;
            for (name, v) in [("tau", r.tau), ("delta", r.delta)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::validation(format!("representation.{name} must be > 0")));
                }
            }
            if !(0.0..=1.0).contains(&r.beta) {
                return Err(CliError::validation("representation.beta must lie in [0, 1]"));
            }
            if let Some(set) = &r.rational_set {
                check_indices("representation.rational_set", set)?;
            }
            let prior_r = r.prior.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]);
            if prior_r.len() != m {
                return Err(CliError::validation(format!("representation.prior needs {m} entries")));
            }
            let prior = RationalPrior::new(prior_r.clone(), r.eta_smoothing).clause("representation")?;
            echo.representation.prior = Some(prior_r);
            Some(RepresentationPlan { clause: r.clone(), prior })
        } else {
            None
        };

        let contradiction = if self.contradiction.enabled {
            let pairs = self.contradiction.pairs.clone().unwrap_or_else(|| {
                (0..m / 2).map(|k| ContradictionPair { i: 2 * k, j: 2 * k + 1, gamma: 1.0 }).collect()
            });
            for p in &pairs {
                check_indices("contradiction.pairs", &[p.i, p.j])?;
            }
            echo.contradiction.pairs = Some(pairs.clone());
            Some(ContradictionConfig::new(pairs, self.contradiction.zeta).clause("contradiction")?)
        } else {
            None
        };

        let sufficient_reason = if self.sufficient_reason.enabled {
            let s = &self.sufficient_reason;
            let inertia = s.inertia.clone().unwrap_or_else(|| vec![1.0; m]);
            let influence = s.influence.clone().unwrap_or_else(|| vec![vec![0.0; m]; m]);
            echo.sufficient_reason.inertia = Some(inertia.clone());
            echo.sufficient_reason.influence = Some(influence.clone());
            Some(CausalNetwork::new(influence, inertia, s.delta).clause("sufficient_reason")?)
        } else {
            None
        };

        let harmony = if self.harmony.enabled {
            let h = &self.harmony;
            let half = m / 2;
            let soul = h.soul.clone().unwrap_or_else(|| (0..half).collect());
            let body = h.body.clone().unwrap_or_else(|| (half..m).collect());
            if soul.is_empty() || body.is_empty() {
                return Err(CliError::validation("harmony needs nonempty soul and body views (at least 2 channels)"));
            }
            let pairing = h
                .pairing
                .clone()
                .unwrap_or_else(|| (0..body.len()).map(|k| soul[k % soul.len()]).collect());
            check_indices("harmony", &soul)?;
            check_indices("harmony", &body)?;
            echo.harmony = HarmonyClause { enabled: true, soul: Some(soul.clone()), body: Some(body.clone()), pairing: Some(pairing.clone()) };
            Some(ViewSplit { soul, body, pairing })
        } else {
            None
        };

        let alignment = if self.alignment.enabled {
            let a = &self.alignment;
            let targets = a.targets.clone().unwrap_or_else(|| vec![1.0; m]);
            if targets.len() != m {
                return Err(CliError::validation(format!("alignment.targets needs {m} entries")));
            }
            if targets.iter().any(|y| !(*y > 0.0 && *y <= 1.0)) {
                return Err(CliError::validation("alignment.targets must lie in (0, 1]"));
            }
            if !(a.dead_band.is_finite() && a.dead_band >= 0.0) {
                return Err(CliError::validation("alignment.dead_band must be >= 0"));
            }
            echo.alignment.targets = Some(targets.clone());
            Some(AlignmentPlan { targets, dead_band: a.dead_band })
        } else {
            None
        };

        let hierarchy = if self.hierarchy.enabled {
            let h = &self.hierarchy;
            let tree = h.tree.clone().unwrap_or_else(|| TreeSpec::binary(0, m));
            tree.validate(m)?;
            let groups = h.groups.clone().unwrap_or_else(|| tree.top_groups());
            let view = GroupingView::new(groups.clone(), h.window, h.margin).clause("hierarchy")?;
            view.check_cover(m).clause("hierarchy")?;
            if !(0.0..=1.0).contains(&h.group_redundancy_scale) {
                return Err(CliError::validation("hierarchy.group_redundancy_scale must lie in [0, 1]"));
            }
            echo.hierarchy.tree = Some(tree.clone());
            echo.hierarchy.groups = Some(groups);
            Some(HierarchyPlan { tree, view, group_redundancy_scale: h.group_redundancy_scale })
        } else {
            None
        };

        let teleology = if self.teleology.enabled {
            let t = &self.teleology;
            if !(t.gamma > 0.0 && t.gamma < 1.0) {
                return Err(CliError::validation("teleology.gamma must lie in (0, 1)"));
            }
            if t.window == 0 || t.stride == 0 || t.promote_after == 0 || t.rollback_after == 0 {
                return Err(CliError::validation("teleology window, stride and run lengths must be >= 1"));
            }
            if !(t.eta.is_finite() && t.eta > 0.0) {
                return Err(CliError::validation("teleology.eta must be > 0"));
            }
            Some(t.clone())
        } else {
            None
        };

        Ok(Plan {
            echo,
            kernel,
            audit,
            dynamics,
            representation,
            contradiction,
            sufficient_reason,
            harmony,
            alignment,
            hierarchy,
            teleology,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AuditPlan {
    pub probes: Vec<Probe>,
    pub dedup_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicsPlan {
    pub cap: aas_core::dynamics::RateCap,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct RepresentationPlan {
    pub clause: RepresentationClause,
    pub prior: RationalPrior,
}

#[derive(Debug, Clone)]
pub struct AlignmentPlan {
    pub targets: Vec<f64>,
    pub dead_band: f64,
}

#[derive(Debug, Clone)]
pub struct HierarchyPlan {
    pub tree: TreeSpec,
    pub view: GroupingView,
    pub group_redundancy_scale: f64,
}

/// Typed parameters for every enabled clause.
#[derive(Debug, Clone)]
pub struct Plan {
    pub echo: ClauseConfig,
    pub kernel: KernelConfig,
    pub audit: Option<AuditPlan>,
    pub dynamics: Option<DynamicsPlan>,
    pub representation: Option<RepresentationPlan>,
    pub contradiction: Option<ContradictionConfig>,
    pub sufficient_reason: Option<CausalNetwork>,
    pub harmony: Option<ViewSplit>,
    pub alignment: Option<AlignmentPlan>,
    pub hierarchy: Option<HierarchyPlan>,
    pub teleology: Option<TeleologyClause>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_matches_preset() {
        let text = include_str!("../configs/all-clauses.toml");
        assert_eq!(ClauseConfig::parse(text, false).unwrap(), ClauseConfig::preset("all-clauses").unwrap());
    }

    #[test]
    fn resolved_echo_round_trips() {
        let plan = ClauseConfig::preset("all-clauses").unwrap().resolve(5, 0.01, 7).unwrap();
        let toml = plan.echo.to_toml();
        assert_eq!(ClauseConfig::parse(&toml, false).unwrap(), plan.echo);
        let json = serde_json::to_string(&plan.echo).unwrap();
        assert_eq!(ClauseConfig::parse(&json, true).unwrap(), plan.echo);
        // Resolving an already complete config is a fixed point.
        assert_eq!(plan.echo.resolve(5, 0.5, 7).unwrap().echo, plan.echo);
    }

    #[test]
    fn derived_defaults() {
        let plan = ClauseConfig::preset("all-clauses").unwrap().resolve(5, 0.01, 0).unwrap();
        assert_eq!(plan.contradiction.unwrap().pairs.len(), 2);
        let split = plan.harmony.unwrap();
        assert_eq!((split.soul, split.body, split.pairing), (vec![0, 1], vec![2, 3, 4], vec![0, 1, 0]));
        let h = plan.hierarchy.unwrap();
        assert_eq!(h.view.groups, vec![vec![0, 1], vec![2, 3, 4]]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut c = ClauseConfig::preset("all-clauses").unwrap();
        c.contradiction.pairs = Some(vec![ContradictionPair { i: 0, j: 9, gamma: 1.0 }]);
        assert_eq!(c.resolve(3, 0.01, 0).unwrap_err().exit_code(), 1);
        let mut c = ClauseConfig::default();
        c.hierarchy.enabled = true;
        c.hierarchy.tree = Some(TreeSpec::Node(vec![TreeSpec::Leaf(0), TreeSpec::Leaf(0)]));
        assert!(c.resolve(2, 0.01, 0).is_err());
        assert!(ClauseConfig::parse("[audit]\nenabled = true\nbogus = 1\n", false).is_err());
    }

    #[test]
    fn tree_spec_shapes() {
        let t: TreeSpec = serde_json::from_str("[[0, 1], 2]").unwrap();
        assert_eq!(t.top_groups(), vec![vec![0, 1], vec![2]]);
        assert_eq!(TreeSpec::binary(0, 3).leaves(), vec![0, 1, 2]);
    }
}
