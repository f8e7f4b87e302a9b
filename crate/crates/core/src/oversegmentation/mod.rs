//! Images, label maps and the initial over-segmentation.

use std::path::Path;

use thiserror::Error;

mod pgm;
mod slic;

pub use pgm::{
    decode_pgm, decode_raw_labels, encode_label_map, encode_pgm, read_pgm, write_label_map,
    write_pgm,
};
pub use slic::{slic_oversegment, SlicParams, SLIC_ITERATIONS};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported or malformed image: {0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

pub type ImageResult<T> = Result<T, ImageError>;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> ImageResult<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(ImageError::InvalidParameter(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> ImageResult<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel region ids. Ids are contiguous `0..N` and every region is a
/// single 4-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    /// Wraps raw labels, checking only the dimensions.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> ImageResult<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(ImageError::InvalidParameter(format!(
                "label map of {} entries does not fit {width}x{height}",
                labels.len()
            )));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    /// Normalizes arbitrary ids: disconnected pieces of one id are split and
    /// the result is renumbered `0..N` ordered by original id, then by first
    /// pixel in raster order.
    pub fn from_raw(width: usize, height: usize, raw: Vec<u32>) -> ImageResult<Self> {
        let raw = LabelMap::new(width, height, raw)?;
        let (components, count) = connected_components(&raw);
        let mut keys: Vec<(u32, usize, u32)> = Vec::with_capacity(count);
        let mut seen = vec![false; count];
        for (p, &c) in components.iter().enumerate() {
            if !seen[c as usize] {
                seen[c as usize] = true;
                keys.push((raw.labels[p], p, c));
            }
        }
        keys.sort_unstable();
        let mut remap = vec![0u32; count];
        for (new_id, &(_, _, c)) in keys.iter().enumerate() {
            remap[c as usize] = new_id as u32;
        }
        let labels = components.iter().map(|&c| remap[c as usize]).collect();
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// `max id + 1`; equals the region count for normalized maps.
    pub fn num_regions(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Pixel count per id.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.num_regions()];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// True when ids are contiguous and each id is one 4-connected piece.
    pub fn is_normalized(&self) -> bool {
        let n = self.num_regions();
        let (_, count) = connected_components(self);
        let areas = self.areas();
        count == n && areas.iter().all(|&a| a > 0)
    }
}

/// 4-connected components of equal labels. Components are numbered in
/// raster order of their first pixel.
pub fn connected_components(map: &LabelMap) -> (Vec<u32>, usize) {
    let (w, h) = map.dims();
    const UNSET: u32 = u32::MAX;
    let mut comp = vec![UNSET; w * h];
    let mut stack = Vec::new();
    let mut next = 0u32;
    for start in 0..w * h {
        if comp[start] != UNSET {
            continue;
        }
        let label = map.labels[start];
        comp[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == UNSET && map.labels[q] == label {
                    comp[q] = next;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        next += 1;
    }
    (comp, next as usize)
}

/// Loads a precomputed over-segmentation from a 16-bit PGM of region ids.
pub fn ingest_label_map(path: impl AsRef<Path>) -> ImageResult<LabelMap> {
    let (w, h, raw) = decode_raw_labels(std::fs::File::open(path)?)?;
    LabelMap::from_raw(w, h, raw)
}
