//! Region statistics, the region adjacency graph and region merging.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::fuzzy_classification::{tier_of, MembershipVector, Tier};
use crate::oversegmentation::{GrayImage, LabelMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("label map is {found:?} but image is {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("regions {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("region {0} does not exist or was merged away")]
    DeadRegion(usize),
    #[error("cannot merge region {0} with itself")]
    SelfMerge(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
}

pub type GraphResult<T> = Result<T, GraphError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub area: usize,
    /// Sum of pixel intensities on the 0..255 scale.
    pub intensity_sum: f64,
    /// Mean intensity in `[0, 1]`.
    pub mean_intensity: f64,
    pub membership: MembershipVector,
    pub tier: Tier,
}

impl Region {
    /// A region with the given statistics and an all-zero membership.
    pub fn new(id: usize, area: usize, mean_intensity: f64, num_classes: usize) -> Self {
        Region {
            id,
            area,
            intensity_sum: mean_intensity * 255.0 * area as f64,
            mean_intensity,
            membership: MembershipVector::zeros(num_classes),
            tier: Tier::Lcd,
        }
    }

    pub fn with_membership(mut self, membership: MembershipVector) -> Self {
        self.tier = tier_of(&membership);
        self.membership = membership;
        self
    }
}

/// How the memberships of two merged regions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MembershipMerge {
    /// Plain average of the two vectors.
    #[default]
    Unweighted,
    /// Average weighted by region area.
    AreaWeighted,
}

impl std::str::FromStr for MembershipMerge {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(MembershipMerge::Unweighted),
            "area" => Ok(MembershipMerge::AreaWeighted),
            other => Err(format!(
                "unknown merge weighting `{other}` (expected unweighted|area)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeRecord {
    pub survivor: usize,
    pub absorbed: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    regions: Vec<Option<Region>>,
    adjacency: Vec<BTreeSet<usize>>,
    merge_log: Vec<MergeRecord>,
    /// Initial over-segmentation, when the graph was built from an image.
    base_labels: Option<LabelMap>,
    /// Region each initial id was folded into (follow until fixed point).
    forward: Vec<usize>,
    iteration: usize,
    merge_weighting: MembershipMerge,
}

/// Collects 4-adjacent label pairs by scanning right and down neighbors.
pub fn adjacency_from_labels(map: &LabelMap, num_regions: usize) -> Vec<BTreeSet<usize>> {
    let (w, h) = map.dims();
    let labels = map.labels();
    let mut adj = vec![BTreeSet::new(); num_regions];
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x] as usize;
            if x + 1 < w {
                let b = labels[y * w + x + 1] as usize;
                if a != b {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = labels[(y + 1) * w + x] as usize;
                if a != b {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
    }
    adj
}

/// Builds the region graph of a label map over an image. Memberships start
/// at zero until the regions are classified.
pub fn build_graph(
    img: &GrayImage,
    map: &LabelMap,
    num_classes: usize,
) -> GraphResult<RegionGraph> {
    if img.dims() != map.dims() {
        return Err(GraphError::DimensionMismatch {
            expected: img.dims(),
            found: map.dims(),
        });
    }
    let n = map.num_regions();
    let mut area = vec![0usize; n];
    let mut sum = vec![0u64; n];
    for (&l, &v) in map.labels().iter().zip(img.data()) {
        area[l as usize] += 1;
        sum[l as usize] += u64::from(v);
    }
    if let Some(empty) = area.iter().position(|&a| a == 0) {
        return Err(GraphError::Invalid(format!("label {empty} has no pixels")));
    }
    let regions = (0..n)
        .map(|id| {
            let intensity_sum = sum[id] as f64;
            Some(Region {
                id,
                area: area[id],
                intensity_sum,
                mean_intensity: intensity_sum / (255.0 * area[id] as f64),
                membership: MembershipVector::zeros(num_classes),
                tier: Tier::Lcd,
            })
        })
        .collect();
    Ok(RegionGraph {
        regions,
        adjacency: adjacency_from_labels(map, n),
        merge_log: Vec::new(),
        base_labels: Some(map.clone()),
        forward: (0..n).collect(),
        iteration: 0,
        merge_weighting: MembershipMerge::default(),
    })
}

impl RegionGraph {
    /// Builds a graph without a pixel lattice. Region ids must be `0..N` in
    /// order; edges are undirected.
    pub fn from_parts(regions: Vec<Region>, edges: &[(usize, usize)]) -> GraphResult<Self> {
        let n = regions.len();
        for (i, r) in regions.iter().enumerate() {
            if r.id != i {
                return Err(GraphError::Invalid(format!(
                    "region at index {i} has id {}",
                    r.id
                )));
            }
            if r.area == 0 {
                return Err(GraphError::Invalid(format!("region {i} has zero area")));
            }
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::DeadRegion(a.max(b)));
            }
            if a == b {
                return Err(GraphError::Invalid(format!("self-loop on region {a}")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        Ok(RegionGraph {
            regions: regions.into_iter().map(Some).collect(),
            adjacency,
            merge_log: Vec::new(),
            base_labels: None,
            forward: (0..n).collect(),
            iteration: 0,
            merge_weighting: MembershipMerge::default(),
        })
    }

    pub fn set_merge_weighting(&mut self, weighting: MembershipMerge) {
        self.merge_weighting = weighting;
    }

    /// Iteration number stamped on subsequent merge records.
    pub fn set_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
    }

    pub fn region(&self, id: usize) -> GraphResult<&Region> {
        self.regions
            .get(id)
            .and_then(Option::as_ref)
            .ok_or(GraphError::DeadRegion(id))
    }

    fn region_mut(&mut self, id: usize) -> GraphResult<&mut Region> {
        self.regions
            .get_mut(id)
            .and_then(Option::as_mut)
            .ok_or(GraphError::DeadRegion(id))
    }

    pub fn is_live(&self, id: usize) -> bool {
        matches!(self.regions.get(id), Some(Some(_)))
    }

    /// Live regions in ascending id order.
    pub fn live_regions(&self) -> impl Iterator<Item = &Region> + '_ {
        self.regions.iter().filter_map(Option::as_ref)
    }

    pub fn live_ids(&self) -> Vec<usize> {
        self.live_regions().map(|r| r.id).collect()
    }

    pub fn num_live(&self) -> usize {
        self.live_regions().count()
    }

    /// Size of the id space (live and merged-away ids).
    pub fn capacity(&self) -> usize {
        self.regions.len()
    }

    pub fn neighbors(&self, id: usize) -> GraphResult<&BTreeSet<usize>> {
        self.region(id)?;
        Ok(&self.adjacency[id])
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a).is_some_and(|s| s.contains(&b))
    }

    /// Undirected live edges `(a, b)` with `a < b`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.live_regions()
            .flat_map(|r| {
                self.adjacency[r.id]
                    .range(r.id + 1..)
                    .map(move |&b| (r.id, b))
            })
            .collect()
    }

    pub fn merge_log(&self) -> &[MergeRecord] {
        &self.merge_log
    }

    pub fn total_area(&self) -> usize {
        self.live_regions().map(|r| r.area).sum()
    }

    /// Replaces a region's membership and recomputes its tier.
    pub fn set_membership(&mut self, id: usize, membership: MembershipVector) -> GraphResult<()> {
        let r = self.region_mut(id)?;
        r.tier = tier_of(&membership);
        r.membership = membership;
        Ok(())
    }

    /// Information-bearing (HCD or MCD) neighbors of `id`, ascending.
    pub fn local_context(&self, id: usize) -> GraphResult<Vec<usize>> {
        Ok(self
            .neighbors(id)?
            .iter()
            .copied()
            .filter(|&n| self.region(n).is_ok_and(|r| r.tier.carries_information()))
            .collect())
    }

    /// Merges two adjacent regions into the one with the smaller id and
    /// returns the survivor.
    pub fn merge(&mut self, i: usize, j: usize) -> GraphResult<usize> {
        if i == j {
            return Err(GraphError::SelfMerge(i));
        }
        self.region(i)?;
        self.region(j)?;
        if !self.are_adjacent(i, j) {
            return Err(GraphError::NotAdjacent(i, j));
        }
        let (survivor, absorbed) = (i.min(j), i.max(j));
        let gone = self.regions[absorbed].take().expect("checked live");
        let weighting = self.merge_weighting;
        let keep = self.regions[survivor].as_mut().expect("checked live");

        let (wa, wb) = match weighting {
            MembershipMerge::Unweighted => (0.5, 0.5),
            MembershipMerge::AreaWeighted => {
                let total = (keep.area + gone.area) as f64;
                (keep.area as f64 / total, gone.area as f64 / total)
            }
        };
        let mixed = keep
            .membership
            .degrees()
            .iter()
            .zip(gone.membership.degrees())
            .map(|(a, b)| wa * a + wb * b)
            .collect();
        keep.membership = MembershipVector::normalized(mixed);
        keep.tier = tier_of(&keep.membership);
        keep.area += gone.area;
        keep.intensity_sum += gone.intensity_sum;
        keep.mean_intensity = keep.intensity_sum / (255.0 * keep.area as f64);

        let moved = std::mem::take(&mut self.adjacency[absorbed]);
        for n in moved {
            self.adjacency[n].remove(&absorbed);
            if n != survivor {
                self.adjacency[n].insert(survivor);
                self.adjacency[survivor].insert(n);
            }
        }
        self.adjacency[survivor].remove(&absorbed);

        self.forward[absorbed] = survivor;
        self.merge_log.push(MergeRecord {
            survivor,
            absorbed,
            iteration: self.iteration,
        });
        Ok(survivor)
    }

    /// Live region currently holding initial region `id`.
    pub fn resolve(&self, mut id: usize) -> usize {
        while self.forward[id] != id {
            id = self.forward[id];
        }
        id
    }

    /// Per-pixel live region id; `None` for graphs built without an image.
    pub fn current_labels(&self) -> Option<LabelMap> {
        let base = self.base_labels.as_ref()?;
        let cache: Vec<usize> = (0..self.forward.len()).map(|i| self.resolve(i)).collect();
        let labels = base
            .labels()
            .iter()
            .map(|&l| cache[l as usize] as u32)
            .collect();
        LabelMap::new(base.width(), base.height(), labels).ok()
    }

    /// Per-pixel map of a region attribute; `None` without an image.
    pub fn paint<F: Fn(&Region) -> u8>(&self, f: F) -> Option<GrayImage> {
        let base = self.base_labels.as_ref()?;
        let value: Vec<u8> = (0..self.forward.len())
            .map(|i| f(self.region(self.resolve(i)).expect("resolved id is live")))
            .collect();
        let data = base.labels().iter().map(|&l| value[l as usize]).collect();
        GrayImage::new(base.width(), base.height(), data).ok()
    }

    /// Adjacency of the live regions as sets, for comparison with a rebuild.
    pub fn adjacency_sets(&self) -> Vec<(usize, BTreeSet<usize>)> {
        self.live_regions()
            .map(|r| (r.id, self.adjacency[r.id].clone()))
            .collect()
    }

    /// CSV `survivor,absorbed,iteration`.
    pub fn merge_log_csv(&self) -> String {
        let mut out = String::from("survivor,absorbed,iteration\n");
        for m in &self.merge_log {
            let _ = writeln!(out, "{},{},{}", m.survivor, m.absorbed, m.iteration);
        }
        out
    }
}
