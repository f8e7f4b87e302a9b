//! The full segmentation pipeline.
//!
//! ```text
//! over-segment
//! repeat (outer)
//!     classify regions (seeds keep their vectors)
//!     repeat (inner)
//!         focusing -> propagation sweep -> conditional merge
//!     until the sweep is stable or the inner cap is hit
//! until an inner loop ends stable without merging, or the outer cap is hit
//! defuzzify
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::fuzzy_classification::{
    classify_region, focusing, predominant_class, PartitionMatrix, Tier,
};
use crate::knowledge_base::KnowledgeBase;
use crate::oversegmentation::{slic_oversegment, GrayImage, ImageError, LabelMap, SlicParams};
use crate::propagation::{bhattacharyya_distance, has_converged, propagate_sweep, UpdateParams};
use crate::region_graph::{build_graph, GraphError, MembershipMerge, RegionGraph};

/// Class-map value of pixels left unlabeled by defuzzification.
pub const UNLABELED: u8 = 255;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Which tiers receive a class label in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefuzzMode {
    HcdOnly,
    #[default]
    HcdAndMcd,
}

impl DefuzzMode {
    pub fn accepts(self, tier: Tier) -> bool {
        match self {
            DefuzzMode::HcdOnly => tier == Tier::Hcd,
            DefuzzMode::HcdAndMcd => tier != Tier::Lcd,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DefuzzMode::HcdOnly => "hcd-only",
            DefuzzMode::HcdAndMcd => "hcd-and-mcd",
        }
    }
}

impl std::str::FromStr for DefuzzMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hcd-only" => Ok(DefuzzMode::HcdOnly),
            "hcd-and-mcd" => Ok(DefuzzMode::HcdAndMcd),
            other => Err(format!(
                "unknown mode `{other}` (expected hcd-only|hcd-and-mcd)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterParams {
    pub update: UpdateParams,
    /// Bhattacharyya distance below which same-class neighbors merge.
    pub merge_distance_threshold: f64,
    pub max_outer_iterations: usize,
    pub defuzz_mode: DefuzzMode,
    pub merge_weighting: MembershipMerge,
    pub slic: SlicParams,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        SegmenterParams {
            update: UpdateParams::default(),
            merge_distance_threshold: 0.1,
            max_outer_iterations: 20,
            defuzz_mode: DefuzzMode::default(),
            merge_weighting: MembershipMerge::default(),
            slic: SlicParams::default(),
        }
    }
}

impl SegmenterParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        self.update
            .validate()
            .map_err(SegmentError::InvalidParameter)?;
        let tau = self.merge_distance_threshold;
        if !(tau > 0.0 && tau < 1.0) {
            return Err(SegmentError::InvalidParameter(format!(
                "merge distance threshold must lie in (0, 1), got {tau}"
            )));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub iteration: usize,
    pub n_hcd: usize,
    pub n_mcd: usize,
    pub n_lcd: usize,
    pub max_change: f64,
    pub n_merges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// Focusing found no HCD region; nothing could be propagated.
    NoSeeds { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Class id per pixel, or [`UNLABELED`].
    pub label_map: GrayImage,
    /// 255 / 128 / 0 for HCD / MCD / LCD.
    pub tier_map: GrayImage,
    pub iteration_log: Vec<SweepRecord>,
    pub final_graph: RegionGraph,
    pub converged: bool,
    pub warnings: Vec<Warning>,
    pub mode: DefuzzMode,
    pub initial_regions: usize,
    /// Initial regions lying in an HCD region right after the first
    /// classification.
    pub initial_hcd_regions: usize,
}

impl SegmentationResult {
    /// Initial regions currently lying in an HCD region.
    pub fn hcd_region_count(&self) -> usize {
        hcd_initial_regions(&self.final_graph)
    }

    pub fn iteration_log_csv(&self) -> String {
        let mut out = String::from("iteration,n_HCD,n_MCD,n_LCD,max_change,n_merges\n");
        for r in &self.iteration_log {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.n_hcd, r.n_mcd, r.n_lcd, r.max_change, r.n_merges
            );
        }
        out
    }
}

fn hcd_initial_regions(g: &RegionGraph) -> usize {
    (0..g.capacity())
        .filter(|&i| g.region(g.resolve(i)).is_ok_and(|r| r.tier == Tier::Hcd))
        .count()
}

/// Recomputes memberships from mean intensities. With `keep_seeds`, HCD
/// regions keep their current vectors.
pub fn classify_regions(g: &mut RegionGraph, kb: &KnowledgeBase, keep_seeds: bool) {
    let updates: Vec<_> = g
        .live_regions()
        .filter(|r| !(keep_seeds && r.tier == Tier::Hcd))
        .map(|r| (r.id, classify_region(r.mean_intensity, kb)))
        .collect();
    for (id, m) in updates {
        g.set_membership(id, m).expect("live region");
    }
}

/// Merges adjacent regions sharing a predominant class whose membership
/// distance is below `threshold`. Pairs are visited in ascending `(i, j)`
/// order; a survivor keeps scanning its (grown) neighbor list past the
/// last partner it examined. Returns the number of merges.
pub fn conditional_merge(g: &mut RegionGraph, threshold: f64) -> usize {
    let mut merges = 0;
    for i in 0..g.capacity() {
        let mut last = i;
        loop {
            if !g.is_live(i) {
                break;
            }
            let next = g
                .neighbors(i)
                .expect("live region")
                .range(last + 1..)
                .next()
                .copied();
            let Some(j) = next else { break };
            last = j;
            let (a, b) = (
                &g.region(i).unwrap().membership,
                &g.region(j).unwrap().membership,
            );
            let similar = predominant_class(a) == predominant_class(b)
                && bhattacharyya_distance(a, b).is_ok_and(|d| d < threshold);
            if similar {
                g.merge(i, j).expect("adjacent live pair");
                merges += 1;
            }
        }
    }
    merges
}

/// Crisp class map: accepted tiers get their predominant class, the rest
/// [`UNLABELED`].
pub fn defuzzify(g: &RegionGraph, mode: DefuzzMode) -> Option<GrayImage> {
    g.paint(|r| {
        if mode.accepts(r.tier) {
            predominant_class(&r.membership) as u8
        } else {
            UNLABELED
        }
    })
}

/// Per-pixel tier image (HCD 255, MCD 128, LCD 0).
pub fn quality_map(g: &RegionGraph) -> Option<GrayImage> {
    g.paint(|r| r.tier.gray_level())
}

/// Over-segments with SLIC and runs the pipeline.
pub fn segment(
    img: &GrayImage,
    kb: &KnowledgeBase,
    params: &SegmenterParams,
) -> Result<SegmentationResult, SegmentError> {
    params.validate()?;
    let labels = slic_oversegment(img, params.slic.n_target, params.slic.compactness)?;
    segment_with_labels(img, &labels, kb, params)
}

/// Runs the pipeline on a precomputed over-segmentation.
pub fn segment_with_labels(
    img: &GrayImage,
    labels: &LabelMap,
    kb: &KnowledgeBase,
    params: &SegmenterParams,
) -> Result<SegmentationResult, SegmentError> {
    params.validate()?;
    let mut g = build_graph(img, labels, kb.num_classes())?;
    g.set_merge_weighting(params.merge_weighting);
    let initial_regions = g.num_live();

    classify_regions(&mut g, kb, false);
    let initial_hcd_regions = hcd_initial_regions(&g);

    let mut log = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iteration = 0;

    'outer: for outer in 0..params.max_outer_iterations {
        if outer > 0 {
            classify_regions(&mut g, kb, true);
        }
        let mut merges_this_loop = 0;
        let mut stable = false;
        for _ in 0..params.update.max_inner_iterations {
            iteration += 1;
            g.set_iteration(iteration);
            let pm = PartitionMatrix::from_graph(&g);
            if focusing(&pm).is_empty() {
                log::warn!("no seed regions at iteration {iteration}; nothing to propagate");
                warnings.push(Warning::NoSeeds { iteration });
                converged = true;
                break 'outer;
            }
            let sweep = propagate_sweep(&mut g, kb, &params.update);
            let merges = conditional_merge(&mut g, params.merge_distance_threshold);
            merges_this_loop += merges;

            let (n_hcd, n_mcd, n_lcd) = PartitionMatrix::from_graph(&g).tier_counts();
            let record = SweepRecord {
                iteration,
                n_hcd,
                n_mcd,
                n_lcd,
                max_change: sweep.max_change,
                n_merges: merges,
            };
            log::debug!("{record:?}");
            log.push(record);

            if has_converged(sweep.max_change, &params.update) {
                stable = true;
                break;
            }
        }
        if stable && merges_this_loop == 0 {
            converged = true;
            break;
        }
    }

    let label_map = defuzzify(&g, params.defuzz_mode).expect("graph built from an image");
    let tier_map = quality_map(&g).expect("graph built from an image");
    log::info!(
        "{} -> {} regions after {} sweeps (converged: {converged})",
        initial_regions,
        g.num_live(),
        log.len()
    );
    Ok(SegmentationResult {
        label_map,
        tier_map,
        iteration_log: log,
        final_graph: g,
        converged,
        warnings,
        mode: params.defuzz_mode,
        initial_regions,
        initial_hcd_regions,
    })
}
