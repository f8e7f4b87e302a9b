//! Knowledge-driven image segmentation by fuzzy region classification and
//! contextual region growing.
//!
//! The pipeline over-segments a grayscale image, classifies every region
//! against the thematic classes of a [`KnowledgeBase`], then alternates
//! seed selection, contextual membership propagation and conditional
//! merging until the region memberships settle.
//!
//! ```no_run
//! use ctxseg_core::{read_pgm, segment, KnowledgeBase, SegmenterParams};
//!
//! let img = read_pgm("mammogram.pgm").unwrap();
//! let kb = KnowledgeBase::mammogram();
//! let result = segment(&img, &kb, &SegmenterParams::default()).unwrap();
//! println!("{} regions left", result.final_graph.num_live());
//! ```

pub mod fuzzy_classification;
pub mod knowledge_base;
pub mod oversegmentation;
pub mod phantom;
pub mod propagation;
pub mod region_graph;
pub mod segmenter;

pub use fuzzy_classification::{
    classify_region, distribution_gaps, focusing, max_degree, predominant_class,
    separation_coefficient, sorted_degrees, tier_from_sc, tier_of, MembershipVector,
    PartitionMatrix, Tier,
};
pub use knowledge_base::{load_kb, write_kb, KbError, KnowledgeBase, MatchPolicy};
pub use oversegmentation::{
    ingest_label_map, read_pgm, slic_oversegment, write_label_map, write_pgm, GrayImage,
    ImageError, LabelMap, SlicParams,
};
pub use phantom::{generate_phantom, pixel_accuracy, write_phantom, Layout, Phantom, PhantomSpec};
pub use propagation::{
    bhattacharyya_distance, context_distance, has_converged, identify_configuration,
    propagate_sweep, update_membership, ContextCase, ContextKind, UpdateParams,
};
pub use region_graph::{build_graph, GraphError, MembershipMerge, Region, RegionGraph};
pub use segmenter::{
    conditional_merge, defuzzify, quality_map, segment, segment_with_labels, DefuzzMode,
    SegmentError, SegmentationResult, SegmenterParams, UNLABELED,
};
