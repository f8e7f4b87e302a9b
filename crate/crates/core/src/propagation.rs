//! Contextual configuration identification and membership propagation.
//!
//! Every non-seed region looks at its local context (its HCD and MCD
//! neighbors), decides which of four contextual configurations applies, and
//! moves membership mass toward the classes that configuration favors. The
//! amount moved shrinks as the region's membership distribution drifts
//! away from its context's.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::fuzzy_classification::{predominant_class, MembershipVector, Tier};
use crate::knowledge_base::{KnowledgeBase, MatchPolicy};
use crate::region_graph::{GraphError, RegionGraph};

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("membership vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("region {0} has no HCD or MCD neighbor")]
    EmptyContext(usize),
    #[error("target class set must be a non-empty proper subset of the classes")]
    InvalidTargetSet,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type PropagationResult<T> = Result<T, PropagationError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    /// Maximum normalized intensity difference for a region to count as
    /// similar to a homogeneous context.
    pub similarity_threshold: f64,
    pub convergence_eps: f64,
    pub max_inner_iterations: usize,
    pub match_policy: MatchPolicy,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams {
            similarity_threshold: 0.1,
            convergence_eps: 1e-4,
            max_inner_iterations: 500,
            match_policy: MatchPolicy::Subset,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return Err(format!(
                "similarity threshold must lie in (0, 1), got {}",
                self.similarity_threshold
            ));
        }
        if self.convergence_eps.is_nan() || self.convergence_eps <= 0.0 {
            return Err(format!(
                "convergence epsilon must be positive, got {}",
                self.convergence_eps
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextKind {
    /// Homogeneous context, similar intensity: reinforce the context class.
    HomSimilar,
    /// Homogeneous HCD context, dissimilar intensity: favor classes that may
    /// lie inside the context class.
    HomDissimilarAllHcd,
    /// Homogeneous context with MCD members, dissimilar intensity: favor
    /// classes that may neighbor the context class.
    HomDissimilarMixed,
    /// Several predominant classes around: favor classes forming a valid
    /// configuration with them.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextCase {
    pub kind: ContextKind,
    /// Predominant classes present in the local context.
    pub lc_classes: BTreeSet<usize>,
    /// Classes whose degrees increase.
    pub targets: BTreeSet<usize>,
}

/// `sqrt(1 - BC(p, q))` where `BC` is the Bhattacharyya coefficient.
///
/// Evaluated as `sqrt(0.5 * sum (sqrt(p_k) - sqrt(q_k))^2)`, which equals
/// `sqrt(1 - BC)` for normalized inputs and is exactly zero for `p == q`.
pub fn bhattacharyya_distance(
    p: &MembershipVector,
    q: &MembershipVector,
) -> PropagationResult<f64> {
    if p.len() != q.len() {
        return Err(PropagationError::LengthMismatch(p.len(), q.len()));
    }
    let half_sq: f64 = p
        .degrees()
        .iter()
        .zip(q.degrees())
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum::<f64>()
        * 0.5;
    Ok(half_sq.clamp(0.0, 1.0).sqrt())
}

/// Mean Bhattacharyya distance between a region and its local context.
pub fn context_distance(g: &RegionGraph, i: usize) -> PropagationResult<f64> {
    let lc = g.local_context(i)?;
    context_distance_over(g, i, &lc)
}

fn context_distance_over(g: &RegionGraph, i: usize, lc: &[usize]) -> PropagationResult<f64> {
    if lc.is_empty() {
        return Err(PropagationError::EmptyContext(i));
    }
    let own = &g.region(i)?.membership;
    let mut total = 0.0;
    for &v in lc {
        total += bhattacharyya_distance(own, &g.region(v)?.membership)?;
    }
    Ok(total / lc.len() as f64)
}

/// Classifies a region's local context into one of the four configurations
/// and derives the classes to reinforce.
pub fn identify_configuration(
    g: &RegionGraph,
    i: usize,
    kb: &KnowledgeBase,
    params: &UpdateParams,
) -> PropagationResult<ContextCase> {
    let lc = g.local_context(i)?;
    identify_over(g, i, &lc, kb, params)
}

fn identify_over(
    g: &RegionGraph,
    i: usize,
    lc: &[usize],
    kb: &KnowledgeBase,
    params: &UpdateParams,
) -> PropagationResult<ContextCase> {
    if lc.is_empty() {
        return Err(PropagationError::EmptyContext(i));
    }
    let region = g.region(i)?;
    let mut lc_classes = BTreeSet::new();
    let mut all_hcd = true;
    let (mut lc_area, mut lc_sum) = (0usize, 0.0f64);
    for &v in lc {
        let r = g.region(v)?;
        lc_classes.insert(predominant_class(&r.membership));
        all_hcd &= r.tier == Tier::Hcd;
        lc_area += r.area;
        lc_sum += r.intensity_sum;
    }

    if lc_classes.len() > 1 {
        let targets = kb.subjects_for_context(&lc_classes, params.match_policy);
        return Ok(ContextCase {
            kind: ContextKind::Heterogeneous,
            lc_classes,
            targets,
        });
    }

    let c = *lc_classes.first().expect("non-empty context");
    let lc_mean = lc_sum / (255.0 * lc_area as f64);
    let (kind, targets) = if (region.mean_intensity - lc_mean).abs() <= params.similarity_threshold
    {
        (ContextKind::HomSimilar, BTreeSet::from([c]))
    } else if all_hcd {
        (ContextKind::HomDissimilarAllHcd, kb.included_in(c))
    } else {
        (ContextKind::HomDissimilarMixed, kb.neighbors_of(c))
    };
    Ok(ContextCase {
        kind,
        lc_classes,
        targets,
    })
}

/// Moves membership mass toward `targets`.
///
/// Each target `j` gains `a_j (1 - d) / K`; that gain is taken in equal
/// shares from the non-target classes. With one target this is exactly
/// `a_k - a_j (1 - d) / (K (K - 1))` for every other class. Negative results
/// are clamped to zero and the vector renormalized.
pub fn update_membership(
    v: &MembershipVector,
    targets: &BTreeSet<usize>,
    context_distance: f64,
) -> PropagationResult<MembershipVector> {
    let k = v.len();
    if targets.is_empty() || targets.len() >= k || targets.iter().any(|&t| t >= k) {
        return Err(PropagationError::InvalidTargetSet);
    }
    let strength = 1.0 - context_distance.clamp(0.0, 1.0);
    let total_gain: f64 = targets.iter().map(|&j| v[j] * strength / k as f64).sum();
    if total_gain == 0.0 {
        return Ok(v.clone());
    }
    let share = total_gain / (k - targets.len()) as f64;
    let degrees: Vec<f64> = v
        .degrees()
        .iter()
        .enumerate()
        .map(|(c, &a)| {
            let next = if targets.contains(&c) {
                a + a * strength / k as f64
            } else {
                a - share
            };
            next.max(0.0)
        })
        .collect();
    Ok(MembershipVector::normalized(degrees))
}

/// Result of one synchronous propagation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOutcome {
    /// Largest absolute change of any degree.
    pub max_change: f64,
    /// Regions whose membership was rewritten.
    pub updated: usize,
}

/// Computes the new membership of one non-seed region against the current
/// graph, or `None` when the region is skipped.
fn proposed_update(
    g: &RegionGraph,
    id: usize,
    kb: &KnowledgeBase,
    params: &UpdateParams,
) -> Option<MembershipVector> {
    let lc = g.local_context(id).ok()?;
    if lc.is_empty() {
        return None;
    }
    let case = identify_over(g, id, &lc, kb, params).ok()?;
    let d = context_distance_over(g, id, &lc).ok()?;
    update_membership(&g.region(id).ok()?.membership, &case.targets, d).ok()
}

/// One synchronous sweep: every MCD/LCD region with a non-empty local
/// context is updated against the pre-sweep state, then all updates are
/// written back together and tiers recomputed. HCD regions are untouched.
pub fn propagate_sweep(
    g: &mut RegionGraph,
    kb: &KnowledgeBase,
    params: &UpdateParams,
) -> SweepOutcome {
    let candidates: Vec<usize> = g
        .live_regions()
        .filter(|r| r.tier != Tier::Hcd)
        .map(|r| r.id)
        .collect();
    let snapshot: &RegionGraph = g;
    let updates: Vec<(usize, MembershipVector)> = candidates
        .par_iter()
        .filter_map(|&id| proposed_update(snapshot, id, kb, params).map(|v| (id, v)))
        .collect();

    let mut outcome = SweepOutcome::default();
    for (id, next) in updates {
        let prev = &g.region(id).expect("candidate is live").membership;
        let change = prev
            .degrees()
            .iter()
            .zip(next.degrees())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        outcome.max_change = outcome.max_change.max(change);
        outcome.updated += 1;
        g.set_membership(id, next).expect("candidate is live");
    }
    log::trace!(
        "sweep updated {} regions, max change {:.3e}",
        outcome.updated,
        outcome.max_change
    );
    outcome
}

pub fn has_converged(max_change: f64, params: &UpdateParams) -> bool {
    max_change < params.convergence_eps
}
