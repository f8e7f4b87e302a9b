//! Fuzzy region classification and the classification-degree tiers.
//!
//! Each region carries a membership vector over the `K` thematic classes.
//! Sorting the degrees and looking at the gaps between consecutive values
//! gives a separation coefficient in `[0, 1]`, which in turn sorts regions
//! into high, medium and low classification degree tiers. High-degree
//! regions are the seeds of the propagation phase.

use std::fmt;
use std::fmt::Write as _;

use crate::knowledge_base::KnowledgeBase;
use crate::region_graph::RegionGraph;

/// Tolerance on `sum(degrees) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Lower bound applied to Gaussian log-likelihoods relative to the best
/// class, so no degree underflows to zero.
const MIN_LOG_RATIO: f64 = -700.0;

/// Fuzzy degrees of belonging to each thematic class.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVector(Vec<f64>);

impl MembershipVector {
    /// Accepts degrees that already sum to one and lie in `[0, 1]`.
    pub fn new(degrees: Vec<f64>) -> Option<Self> {
        let ok = degrees.len() >= 2
            && degrees.iter().all(|d| (0.0..=1.0).contains(d))
            && (degrees.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL;
        ok.then_some(MembershipVector(degrees))
    }

    /// Scales non-negative weights to sum one. A zero-sum input stays zero.
    pub fn normalized(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if w.is_nan() || *w <= 0.0 {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        MembershipVector(weights)
    }

    /// The all-zero placeholder used before a region is classified.
    pub fn zeros(k: usize) -> Self {
        MembershipVector(vec![0.0; k])
    }

    pub fn uniform(k: usize) -> Self {
        MembershipVector(vec![1.0 / k as f64; k])
    }

    pub fn degrees(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= NORMALIZATION_TOL
    }
}

impl std::ops::Index<usize> for MembershipVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Classification-degree tier of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    /// High classification degree: a seed, never updated.
    Hcd,
    /// Medium classification degree: updated, and informs its neighbors.
    Mcd,
    /// Low classification degree: updated, but informs nobody.
    Lcd,
}

impl Tier {
    /// Gray level of the tier in a quality map.
    pub fn gray_level(self) -> u8 {
        match self {
            Tier::Hcd => 255,
            Tier::Mcd => 128,
            Tier::Lcd => 0,
        }
    }

    pub fn carries_information(self) -> bool {
        matches!(self, Tier::Hcd | Tier::Mcd)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Hcd => "HCD",
            Tier::Mcd => "MCD",
            Tier::Lcd => "LCD",
        })
    }
}

/// Membership of a normalized intensity `x` against the class prototypes:
/// normalized Gaussian likelihoods.
pub fn classify_region(mean_intensity: f64, kb: &KnowledgeBase) -> MembershipVector {
    // evaluated on the 0..255 scale the prototypes are stored in
    let x = mean_intensity * 255.0;
    let log_lik: Vec<f64> = kb
        .classes()
        .iter()
        .map(|c| {
            let z = (x - c.prototype_mean) / c.prototype_std;
            -0.5 * z * z
        })
        .collect();
    let best = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = log_lik
        .iter()
        .map(|&l| (l - best).max(MIN_LOG_RATIO).exp())
        .collect();
    MembershipVector::normalized(weights)
}

/// Degrees in ascending order.
pub fn sorted_degrees(v: &MembershipVector) -> Vec<f64> {
    let mut s = v.degrees().to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Index of the maximum degree; ties go to the lowest class id.
pub fn predominant_class(v: &MembershipVector) -> usize {
    let mut best = 0;
    for (k, &d) in v.degrees().iter().enumerate().skip(1) {
        if d > v.degrees()[best] {
            best = k;
        }
    }
    best
}

/// Maximum membership degree.
pub fn max_degree(v: &MembershipVector) -> f64 {
    v.degrees()[predominant_class(v)]
}

/// Consecutive differences of the ascending degrees (`K - 1` values, all
/// non-negative).
pub fn distribution_gaps(v: &MembershipVector) -> Vec<f64> {
    sorted_degrees(v).windows(2).map(|p| p[1] - p[0]).collect()
}

/// Gap below the top degree divided by the largest gap. Zero when every gap
/// is zero.
pub fn separation_coefficient(v: &MembershipVector) -> f64 {
    let gaps = distribution_gaps(v);
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    if max_gap <= 0.0 {
        return 0.0;
    }
    let top_gap = *gaps.last().expect("K >= 2");
    (top_gap / max_gap).clamp(0.0, 1.0)
}

pub fn tier_from_sc(sc: f64) -> Tier {
    if sc > 0.6 {
        Tier::Hcd
    } else if (0.3..=0.6).contains(&sc) {
        Tier::Mcd
    } else {
        Tier::Lcd
    }
}

pub fn tier_of(v: &MembershipVector) -> Tier {
    tier_from_sc(separation_coefficient(v))
}

/// The regions partition matrix: one membership row and tier per live
/// region, in ascending region id order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatrix {
    pub region_ids: Vec<usize>,
    pub rows: Vec<MembershipVector>,
    pub tiers: Vec<Tier>,
}

impl PartitionMatrix {
    pub fn from_graph(g: &RegionGraph) -> Self {
        let mut pm = PartitionMatrix {
            region_ids: Vec::new(),
            rows: Vec::new(),
            tiers: Vec::new(),
        };
        for r in g.live_regions() {
            pm.region_ids.push(r.id);
            pm.rows.push(r.membership.clone());
            pm.tiers.push(r.tier);
        }
        pm
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tier_counts(&self) -> (usize, usize, usize) {
        self.tiers.iter().fold((0, 0, 0), |(h, m, l), t| match t {
            Tier::Hcd => (h + 1, m, l),
            Tier::Mcd => (h, m + 1, l),
            Tier::Lcd => (h, m, l + 1),
        })
    }

    /// CSV with header `region_id,degree_0..degree_{K-1},SC,tier`.
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, MembershipVector::len);
        let mut out = String::from("region_id");
        for j in 0..k {
            let _ = write!(out, ",degree_{j}");
        }
        out.push_str(",SC,tier\n");
        for ((id, row), tier) in self.region_ids.iter().zip(&self.rows).zip(&self.tiers) {
            let _ = write!(out, "{id}");
            for d in row.degrees() {
                let _ = write!(out, ",{d}");
            }
            let _ = writeln!(out, ",{},{tier}", separation_coefficient(row));
        }
        out
    }
}

/// Seed regions: the ids whose tier is HCD.
pub fn focusing(pm: &PartitionMatrix) -> Vec<usize> {
    pm.region_ids
        .iter()
        .zip(&pm.tiers)
        .filter(|(_, &t)| t == Tier::Hcd)
        .map(|(&id, _)| id)
        .collect()
}
