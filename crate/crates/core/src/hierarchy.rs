//! Multi-scale rollups over channel trees and group dominance over streams.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_unit, AasError, Result};
use crate::info::{entropy_bits, normalized_entropy_bits};
use crate::kernel::{check_arity, score_session, KernelConfig, SessionSnapshot};

/// Tree node. Leaves carry `x`; internal nodes must not, their score is the
/// α-weighted mean of their children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: String,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn leaf(id: impl Into<String>, alpha: f64, x: f64) -> Self {
        Self { id: id.into(), alpha, x: Some(x), children: Vec::new() }
    }

    /// Internal node whose mass is the sum of its children's.
    pub fn internal(id: impl Into<String>, children: Vec<HierarchyNode>) -> Self {
        let alpha = children.iter().map(|c| c.alpha).sum();
        Self { id: id.into(), alpha, x: None, children }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(HierarchyNode::leaf_count).sum()
        }
    }

    /// Derived score, validating the subtree on the way.
    pub fn score(&self) -> Result<f64> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(AasError::domain(format!("node {}: alpha = {} must be >= 0", self.id, self.alpha)));
        }
        if self.is_leaf() {
            let x = self
                .x
                .ok_or_else(|| AasError::domain(format!("leaf {} has no score", self.id)))?;
            check_unit("x", x)?;
            return Ok(x);
        }
        if self.x.is_some() {
            return Err(AasError::domain(format!("internal node {} must not store a score", self.id)));
        }
        let mass: f64 = self.children.iter().map(|c| c.alpha).sum();
        if (mass - self.alpha).abs() > 1e-12 * self.alpha.max(1.0) {
            return Err(AasError::WeightSum { sum: mass, expected: self.alpha });
        }
        let xs = self.children.iter().map(HierarchyNode::score).collect::<Result<Vec<_>>>()?;
        if mass > 0.0 {
            Ok(self.children.iter().zip(&xs).map(|(c, x)| c.alpha * x).sum::<f64>() / mass)
        } else {
            Ok(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub depth: usize,
    pub nodes: usize,
    pub mass: f64,
    pub total: f64,
    pub active_count: usize,
    pub contrib_entropy: f64,
    pub organic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementGain {
    pub depth: usize,
    pub id: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollupReport {
    pub alpha_star: f64,
    pub cap: f64,
    pub levels: Vec<LevelStats>,
    pub gains: Vec<RefinementGain>,
    /// Deepest `d` such that every level `s ≤ d` is organic; `None` if the root is dead.
    pub organic_up_to: Option<usize>,
}

struct Flat<'a> {
    node: &'a HierarchyNode,
    x: f64,
    children: Vec<usize>,
}

fn flatten<'a>(node: &'a HierarchyNode, out: &mut Vec<Flat<'a>>) -> Result<usize> {
    let x = node.score()?;
    let idx = out.len();
    out.push(Flat { node, x, children: Vec::new() });
    let children = node.children.iter().map(|c| flatten(c, out)).collect::<Result<Vec<_>>>()?;
    out[idx].children = children;
    Ok(idx)
}

/// Level totals, per-parent refinement gains and organicity statistics.
///
/// Leaves shallower than the tree depth are carried unchanged to every deeper
/// level. Level 0 is a single node, so it is exempt from the entropy condition.
pub fn level_rollup(root: &HierarchyNode, cfg: &KernelConfig) -> Result<RollupReport> {
    let mut flat = Vec::new();
    flatten(root, &mut flat)?;
    let depth = root.depth();
    let mut level = vec![0usize];
    let mut levels = Vec::with_capacity(depth + 1);
    let mut gains = Vec::new();
    for s in 0..=depth {
        let contributions: Vec<f64> = level
            .iter()
            .map(|&i| flat[i].node.alpha * cfg.phi(flat[i].x))
            .collect();
        let total: f64 = contributions.iter().sum();
        let active_count = contributions.iter().filter(|&&c| c > 0.0).count();
        let contrib_entropy = normalized_entropy_bits(&contributions);
        levels.push(LevelStats {
            depth: s,
            nodes: level.len(),
            mass: level.iter().map(|&i| flat[i].node.alpha).sum(),
            total,
            active_count,
            contrib_entropy,
            organic: active_count >= 1 && (s == 0 || contrib_entropy > 0.0),
        });
        if s == depth {
            break;
        }
        let mut next = Vec::new();
        for &i in &level {
            let f = &flat[i];
            if f.children.is_empty() {
                next.push(i);
                continue;
            }
            let parent_phi = cfg.phi(f.x);
            let gain = f
                .children
                .iter()
                .map(|&c| flat[c].node.alpha * (cfg.phi(flat[c].x) - parent_phi))
                .sum();
            gains.push(RefinementGain { depth: s, id: f.node.id.clone(), gain });
            next.extend_from_slice(&f.children);
        }
        level = next;
    }
    let organic_up_to = levels.iter().take_while(|l| l.organic).count().checked_sub(1);
    Ok(RollupReport {
        alpha_star: root.alpha,
        cap: root.alpha * cfg.phi_max(),
        levels,
        gains,
        organic_up_to,
    })
}

/// First-level groups over leaf channels plus the dominance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingView {
    pub groups: Vec<Vec<usize>>,
    pub window: usize,
    pub margin: f64,
}

impl GroupingView {
    pub fn new(groups: Vec<Vec<usize>>, window: usize, margin: f64) -> Result<Self> {
        let view = Self { groups, window, margin };
        if view.window == 0 {
            return Err(AasError::domain("window must be >= 1"));
        }
        if !(view.margin.is_finite() && view.margin >= 0.0) {
            return Err(AasError::domain(format!("margin {} must be >= 0", view.margin)));
        }
        Ok(view)
    }

    /// Groups must be nonempty, disjoint and cover `0..m`.
    pub fn check_cover(&self, m: usize) -> Result<()> {
        let mut seen = vec![false; m];
        for g in &self.groups {
            if g.is_empty() {
                return Err(AasError::domain("empty group"));
            }
            for &i in g {
                check_index(i, m)?;
                if seen[i] {
                    return Err(AasError::domain(format!("channel {i} is in two groups")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(AasError::domain(format!("channel {i} is in no group")));
        }
        Ok(())
    }

    fn sums(&self, values: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| g.iter().map(|&i| values[i]).sum()).collect()
    }
}

/// Shares closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceStep {
    pub t: u64,
    pub shares: Vec<f64>,
    pub dominant: Option<usize>,
    pub unique: bool,
    pub group_entropy: f64,
    pub within_entropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceWindow {
    pub start_t: u64,
    pub end_t: u64,
    pub mean_shares: Vec<f64>,
    pub min_shares: Vec<f64>,
    pub leader: Option<usize>,
    pub stable_dominant: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub steps: Vec<DominanceStep>,
    pub windows: Vec<DominanceWindow>,
    /// Stable dominant group on the last complete window.
    pub stable_dominant: Option<usize>,
}

/// Argmax with lowest-index tie break; returns `(index, unique)`.
fn leader(values: &[f64]) -> Option<(usize, bool)> {
    let (best, &top) = values
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
            Some((_, b)) if *v <= *b => acc,
            _ => Some((i, v)),
        })?;
    let unique = values
        .iter()
        .enumerate()
        .all(|(i, v)| i == best || top - v > TIE_TOLERANCE);
    Some((best, unique))
}

fn runner_up(values: &[f64], best: usize) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max)
}

pub fn dominance_scan(stream: &[SessionSnapshot], view: &GroupingView, cfg: &KernelConfig) -> Result<DominanceReport> {
    let m = check_arity(stream)?;
    view.check_cover(m)?;
    let mut steps = Vec::with_capacity(stream.len());
    for snap in stream {
        let bd = score_session(snap, cfg);
        let mass = view.sums(&bd.contributions);
        let shares: Vec<f64> = if bd.total > 0.0 {
            mass.iter().map(|s| s / bd.total).collect()
        } else {
            vec![0.0; mass.len()]
        };
        let (dominant, unique) = match leader(&shares) {
            Some((g, u)) if bd.total > 0.0 => (Some(g), u),
            _ => (None, false),
        };
        let within_entropy = view
            .groups
            .iter()
            .map(|g| normalized_entropy_bits(&g.iter().map(|&i| bd.contributions[i]).collect::<Vec<_>>()))
            .collect();
        steps.push(DominanceStep {
            t: snap.t(),
            group_entropy: entropy_bits(&shares),
            shares,
            dominant,
            unique,
            within_entropy,
        });
    }
    let w = view.window;
    let k = view.groups.len();
    let mut windows = Vec::new();
    for end in (w - 1)..steps.len() {
        let span = &steps[end + 1 - w..=end];
        let mean_shares: Vec<f64> = (0..k)
            .map(|g| span.iter().map(|s| s.shares[g]).sum::<f64>() / w as f64)
            .collect();
        let min_shares: Vec<f64> = (0..k)
            .map(|g| span.iter().map(|s| s.shares[g]).fold(f64::INFINITY, f64::min))
            .collect();
        let lead = leader(&mean_shares).filter(|_| mean_shares.iter().any(|&p| p > 0.0));
        let stable_dominant = lead.and_then(|(g, _)| {
            let gap = mean_shares[g] - runner_up(&mean_shares, g);
            (gap > 0.0 && gap >= view.margin).then_some(g)
        });
        windows.push(DominanceWindow {
            start_t: span[0].t,
            end_t: span[w - 1].t,
            mean_shares,
            min_shares,
            leader: lead.map(|(g, _)| g),
            stable_dominant,
        });
    }
    let stable_dominant = windows.last().and_then(|w| w.stable_dominant);
    Ok(DominanceReport { steps, windows, stable_dominant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholePartStep {
    pub t: u64,
    pub global: f64,
    pub parts: Vec<f64>,
    pub sum_of_parts: f64,
}

/// Lower bounds on the windowed mean global score from the window's leading group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceBound {
    pub end_t: u64,
    pub group: usize,
    pub mean_global: f64,
    pub min_share_bound: f64,
    pub mean_share_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholePartReport {
    pub steps: Vec<WholePartStep>,
    pub bounds: Vec<DominanceBound>,
}

impl WholePartReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.steps.iter().all(|s| s.global <= s.sum_of_parts + tol)
            && self
                .bounds
                .iter()
                .all(|b| b.min_share_bound <= b.mean_global + tol && b.mean_share_bound <= b.mean_global + tol)
    }
}

/// Compare the global score (stream redundancies) against the sum of group
/// scores computed with within-group redundancies `group_r[t][leaf]`.
///
/// Group scores keep the global weights. The dominance bounds are computed from
/// each group's share of the global contributions.
pub fn whole_part_check(
    stream: &[SessionSnapshot],
    view: &GroupingView,
    group_r: &[Vec<f64>],
    cfg: &KernelConfig,
) -> Result<WholePartReport> {
    let m = check_arity(stream)?;
    view.check_cover(m)?;
    if group_r.len() != stream.len() {
        return Err(AasError::Arity { expected: stream.len(), found: group_r.len() });
    }
    let mut steps = Vec::with_capacity(stream.len());
    let mut group_mass = Vec::with_capacity(stream.len());
    let mut shares = Vec::with_capacity(stream.len());
    for (snap, rg) in stream.iter().zip(group_r) {
        if rg.len() != m {
            return Err(AasError::Arity { expected: m, found: rg.len() });
        }
        let phis: Vec<f64> = snap.channels().iter().map(|c| cfg.phi(c.x)).collect();
        for (i, &r) in rg.iter().enumerate() {
            check_unit("group redundancy", r)?;
            let global_r = snap.channels()[i].r;
            if r > global_r + 1e-12 {
                return Err(AasError::precondition(format!(
                    "t = {}, leaf {i}: group redundancy {r} exceeds global {global_r}",
                    snap.t()
                )));
            }
        }
        let global_c: Vec<f64> = (0..m).map(|i| snap.alpha(i) * phis[i]).collect();
        let global: f64 = global_c.iter().sum();
        let part_c: Vec<f64> = (0..m).map(|i| snap.weights()[i] * (1.0 - rg[i]) * phis[i]).collect();
        let parts = view.sums(&part_c);
        let mass = view.sums(&global_c);
        shares.push(if global > 0.0 {
            mass.iter().map(|s| s / global).collect()
        } else {
            vec![0.0; mass.len()]
        });
        group_mass.push(mass);
        steps.push(WholePartStep { t: snap.t(), global, sum_of_parts: parts.iter().sum(), parts });
    }
    let w = view.window;
    let mut bounds = Vec::new();
    for end in (w - 1)..steps.len() {
        let range = end + 1 - w..=end;
        let mean = |v: &dyn Fn(usize) -> f64| range.clone().map(v).sum::<f64>() / w as f64;
        let mean_shares: Vec<f64> = (0..view.groups.len()).map(|g| mean(&|t| shares[t][g])).collect();
        let Some((g, _)) = leader(&mean_shares) else { continue };
        let p_min = range.clone().map(|t| shares[t][g]).fold(f64::INFINITY, f64::min);
        let mass_min = range.clone().map(|t| group_mass[t][g]).fold(f64::INFINITY, f64::min);
        bounds.push(DominanceBound {
            end_t: steps[end].t,
            group: g,
            mean_global: mean(&|t| steps[t].global),
            min_share_bound: p_min * mean(&|t| group_mass[t][g]),
            mean_share_bound: mean_shares[g] * mass_min,
        });
    }
    Ok(WholePartReport { steps, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_0: f64 = 6.658_211_482_751_794_7;

    fn k() -> KernelConfig {
        KernelConfig::default()
    }

    #[test]
    fn uniform_children_have_zero_gain() {
        let root = HierarchyNode::internal("r", vec![HierarchyNode::leaf("a", 0.5, 0.3), HierarchyNode::leaf("b", 0.5, 0.3)]);
        let rep = level_rollup(&root, &k()).unwrap();
        assert_eq!(rep.gains[0].gain, 0.0);
        assert!((rep.levels[0].total - rep.levels[1].total).abs() < 1e-15);
        // Identical contributions still have positive spread.
        assert_eq!(rep.organic_up_to, Some(1));
    }

    #[test]
    fn reference_refinement_gain() {
        let root = HierarchyNode::internal("r", vec![HierarchyNode::leaf("a", 0.5, 0.2), HierarchyNode::leaf("b", 0.5, 0.8)]);
        assert!((root.score().unwrap() - 0.5).abs() < 1e-15);
        let rep = level_rollup(&root, &k()).unwrap();
        assert!((rep.levels[0].total - 0.985_786_140_780_299_1).abs() < 1e-12);
        assert!((rep.levels[1].total - 1.292_127_769_920_102_2).abs() < 1e-12);
        assert!((rep.gains[0].gain - 0.306_341_629_139_803_05).abs() < 1e-12);
    }

    #[test]
    fn depth_three_chain() {
        let leaves = [0.05, 0.9, 0.4, 0.7, 0.1, 0.95, 0.6, 0.3];
        let pair = |a: usize| {
            HierarchyNode::internal(
                format!("n{a}"),
                vec![HierarchyNode::leaf(format!("l{a}"), 0.125, leaves[a]), HierarchyNode::leaf(format!("l{}", a + 1), 0.125, leaves[a + 1])],
            )
        };
        let quad = |a: usize| HierarchyNode::internal(format!("q{a}"), vec![pair(a), pair(a + 2)]);
        let root = HierarchyNode::internal("root", vec![quad(0), quad(4)]);
        let rep = level_rollup(&root, &k()).unwrap();
        assert_eq!(rep.levels.len(), 4);
        for w in rep.levels.windows(2) {
            assert!(w[1].total >= w[0].total);
            let gain: f64 = rep.gains.iter().filter(|g| g.depth == w[0].depth).map(|g| g.gain).sum();
            assert!((w[1].total - w[0].total - gain).abs() < 1e-12);
        }
        assert!(rep.levels.iter().all(|l| l.total <= PHI_0 && (l.mass - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ragged_tree_carries_leaves() {
        let root = HierarchyNode::internal(
            "r",
            vec![
                HierarchyNode::leaf("a", 0.5, 0.3),
                HierarchyNode::internal("b", vec![HierarchyNode::leaf("b1", 0.25, 0.1), HierarchyNode::leaf("b2", 0.25, 0.9)]),
            ],
        );
        let rep = level_rollup(&root, &k()).unwrap();
        assert_eq!(rep.levels.iter().map(|l| l.nodes).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(rep.gains.len(), 2);
    }

    #[test]
    fn dead_subtree_is_not_organic() {
        let root = HierarchyNode::internal("r", vec![HierarchyNode::leaf("a", 0.5, 1.0), HierarchyNode::leaf("b", 0.5, 1.0)]);
        let rep = level_rollup(&root, &k()).unwrap();
        assert_eq!(rep.organic_up_to, None);
    }

    #[test]
    fn tree_validation() {
        let mut bad = HierarchyNode::internal("r", vec![HierarchyNode::leaf("a", 0.5, 0.3)]);
        bad.alpha = 0.6;
        assert!(matches!(level_rollup(&bad, &k()), Err(AasError::WeightSum { .. })));
        let mut stored = HierarchyNode::internal("r", vec![HierarchyNode::leaf("a", 0.5, 0.3)]);
        stored.x = Some(0.3);
        assert!(level_rollup(&stored, &k()).is_err());
        let mut missing = HierarchyNode::leaf("a", 1.0, 0.3);
        missing.x = None;
        assert!(level_rollup(&missing, &k()).is_err());
    }

    fn stream_with(contribution_xs: &[&[f64]], weights: &[f64]) -> Vec<SessionSnapshot> {
        contribution_xs
            .iter()
            .enumerate()
            .map(|(t, xs)| SessionSnapshot::from_xr(t as u64, xs, &vec![0.0; xs.len()], weights).unwrap())
            .collect()
    }

    #[test]
    fn group_entropy_reference() {
        assert!((entropy_bits(&[0.6, 0.3, 0.1]) - 1.295_461_844_238_321_8).abs() < 1e-12);
    }

    #[test]
    fn single_group_dominates_trivially() {
        let s = stream_with(&[&[0.2, 0.5], &[0.3, 0.6]], &[0.5, 0.5]);
        let view = GroupingView::new(vec![vec![0, 1]], 2, 0.1).unwrap();
        let rep = dominance_scan(&s, &view, &k()).unwrap();
        assert!(rep.steps.iter().all(|st| st.group_entropy == 0.0 && st.dominant == Some(0)));
        assert_eq!(rep.stable_dominant, Some(0));
    }

    #[test]
    fn exact_tie_is_flagged() {
        let s = stream_with(&[&[0.4, 0.4]], &[0.5, 0.5]);
        let view = GroupingView::new(vec![vec![0], vec![1]], 1, 0.0).unwrap();
        let rep = dominance_scan(&s, &view, &k()).unwrap();
        assert_eq!(rep.steps[0].dominant, Some(0));
        assert!(!rep.steps[0].unique);
        assert_eq!(rep.stable_dominant, None);
        assert!((rep.steps[0].group_entropy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_total_has_no_dominant() {
        let s = stream_with(&[&[1.0, 1.0]], &[0.5, 0.5]);
        let view = GroupingView::new(vec![vec![0], vec![1]], 1, 0.0).unwrap();
        let rep = dominance_scan(&s, &view, &k()).unwrap();
        assert_eq!(rep.steps[0].dominant, None);
        assert_eq!(rep.steps[0].group_entropy, 0.0);
    }

    #[test]
    fn cover_errors() {
        let s = stream_with(&[&[0.4, 0.4, 0.4]], &[0.2, 0.3, 0.5]);
        for groups in [vec![vec![0], vec![1]], vec![vec![0, 1], vec![1, 2]], vec![vec![0, 1, 2], vec![]]] {
            let view = GroupingView::new(groups, 1, 0.0).unwrap();
            assert!(dominance_scan(&s, &view, &k()).is_err());
        }
        assert!(GroupingView::new(vec![vec![0]], 0, 0.0).is_err());
    }

    fn redundant_stream(r: f64) -> Vec<SessionSnapshot> {
        (0..3)
            .map(|t| SessionSnapshot::from_xr(t, &[0.2, 0.5, 0.7], &[r, r, 0.0], &[0.3, 0.3, 0.4]).unwrap())
            .collect()
    }

    #[test]
    fn whole_part_equality_cases() {
        let view = GroupingView::new(vec![vec![0, 1], vec![2]], 2, 0.0).unwrap();
        for r in [0.0, 0.4] {
            let s = redundant_stream(r);
            let gr: Vec<Vec<f64>> = s.iter().map(SessionSnapshot::rs).collect();
            let rep = whole_part_check(&s, &view, &gr, &k()).unwrap();
            assert!(rep.steps.iter().all(|st| (st.global - st.sum_of_parts).abs() < 1e-15));
            assert!(rep.holds(1e-12));
        }
    }

    #[test]
    fn whole_part_strict_with_overlap() {
        let view = GroupingView::new(vec![vec![0, 1], vec![2]], 2, 0.0).unwrap();
        let s = redundant_stream(0.5);
        let gr = vec![vec![0.0, 0.5, 0.0]; 3];
        let rep = whole_part_check(&s, &view, &gr, &k()).unwrap();
        assert!(rep.steps.iter().all(|st| st.global < st.sum_of_parts));
        assert_eq!(rep.bounds.len(), 2);
        assert!(rep.holds(1e-12));
        let too_high = vec![vec![0.6, 0.5, 0.0]; 3];
        assert!(matches!(whole_part_check(&s, &view, &too_high, &k()), Err(AasError::Precondition(_))));
    }
}
