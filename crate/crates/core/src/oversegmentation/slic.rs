//! Grayscale SLIC superpixels.
//!
//! Features are (intensity, x, y) with intensity scaled to `[0, 1]`. The
//! assignment distance is `sqrt(dc^2 + (ds / S)^2 * m^2)` where `S` is the
//! grid step and `m` the compactness.

use std::collections::BTreeSet;

use super::{connected_components, GrayImage, ImageError, ImageResult, LabelMap};

/// Number of assignment/update rounds.
pub const SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub n_target: usize,
    pub compactness: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_target: 400,
            compactness: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    intensity: f64,
}

/// Grid layout closest to `n` cells with the image's aspect ratio.
fn grid_shape(width: usize, height: usize, n: usize) -> (usize, usize) {
    let ny = ((n as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, height);
    let nx = ((n as f64 / ny as f64).round() as usize).clamp(1, width);
    (nx, ny)
}

pub fn slic_oversegment(
    img: &GrayImage,
    n_target: usize,
    compactness: f64,
) -> ImageResult<LabelMap> {
    let (w, h) = img.dims();
    if n_target < 1 || n_target > w * h {
        return Err(ImageError::InvalidParameter(format!(
            "n_target must lie in [1, {}], got {n_target}",
            w * h
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(ImageError::InvalidParameter(format!(
            "compactness must be positive, got {compactness}"
        )));
    }

    let intensity: Vec<f64> = img.data().iter().map(|&v| f64::from(v) / 255.0).collect();
    let (nx, ny) = grid_shape(w, h, n_target);
    let step_x = w as f64 / nx as f64;
    let step_y = h as f64 / ny as f64;
    let step = ((w * h) as f64 / (nx * ny) as f64).sqrt();

    let mut centers = Vec::with_capacity(nx * ny);
    let mut labels = vec![0u32; w * h];
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * step_x;
            let y = (j as f64 + 0.5) * step_y;
            let px = (x as usize).min(w - 1);
            let py = (y as usize).min(h - 1);
            centers.push(Center {
                x,
                y,
                intensity: intensity[py * w + px],
            });
        }
    }
    // grid-cell assignment covers pixels no window reaches
    for y in 0..h {
        let j = ((y as f64 / step_y) as usize).min(ny - 1);
        for x in 0..w {
            let i = ((x as f64 / step_x) as usize).min(nx - 1);
            labels[y * w + x] = (j * nx + i) as u32;
        }
    }

    let spatial_weight = (compactness / step).powi(2);
    let radius = 2.0 * step;
    let mut best = vec![f64::INFINITY; w * h];
    for _ in 0..SLIC_ITERATIONS {
        best.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x - radius).floor().max(0.0) as usize;
            let x1 = ((c.x + radius).ceil() as usize).min(w);
            let y0 = (c.y - radius).floor().max(0.0) as usize;
            let y1 = ((c.y + radius).ceil() as usize).min(h);
            for y in y0..y1 {
                let dy = y as f64 + 0.5 - c.y;
                for x in x0..x1 {
                    let p = y * w + x;
                    let dx = x as f64 + 0.5 - c.x;
                    let dc = intensity[p] - c.intensity;
                    let d = dc * dc + (dx * dx + dy * dy) * spatial_weight;
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }

        let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); centers.len()];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let s = &mut sums[labels[p] as usize];
                s.0 += x as f64 + 0.5;
                s.1 += y as f64 + 0.5;
                s.2 += intensity[p];
                s.3 += 1;
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                *c = Center {
                    x: s.0 / n,
                    y: s.1 / n,
                    intensity: s.2 / n,
                };
            }
        }
    }

    enforce_connectivity(w, h, labels)
}

/// Keeps the largest piece of every cluster and folds each remaining piece
/// into its largest adjacent piece.
fn enforce_connectivity(w: usize, h: usize, labels: Vec<u32>) -> ImageResult<LabelMap> {
    let clusters = LabelMap::new(w, h, labels)?;
    let (comp, count) = connected_components(&clusters);

    let mut area = vec![0usize; count];
    let mut owner = vec![0u32; count];
    for (p, &c) in comp.iter().enumerate() {
        area[c as usize] += 1;
        owner[c as usize] = clusters.labels()[p];
    }

    let n_clusters = clusters.num_regions();
    let mut keeper: Vec<Option<usize>> = vec![None; n_clusters];
    for c in 0..count {
        let k = &mut keeper[owner[c] as usize];
        match *k {
            Some(best) if area[best] >= area[c] => {}
            _ => *k = Some(c),
        }
    }

    let mut adjacency = vec![BTreeSet::new(); count];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x] as usize;
            if x + 1 < w {
                let b = comp[y * w + x + 1] as usize;
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x] as usize;
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
        }
    }

    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for c in 0..count {
        if keeper[owner[c] as usize] == Some(c) {
            continue;
        }
        // ties resolve to the lowest component index
        let target = adjacency[c]
            .iter()
            .copied()
            .max_by(|&a, &b| area[a].cmp(&area[b]).then(b.cmp(&a)));
        if let Some(t) = target {
            let (ra, rb) = (find(&mut parent, c), find(&mut parent, t));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let raw: Vec<u32> = comp
        .iter()
        .map(|&c| find(&mut parent, c as usize) as u32)
        .collect();
    LabelMap::from_raw(w, h, raw)
}
