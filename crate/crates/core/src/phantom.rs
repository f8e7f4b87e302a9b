//! Synthetic test images with known ground truth.
//!
//! `Mammo4` mimics a mediolateral mammogram: a breast outline against the
//! background, a pectoral muscle wedge in the top-left corner and a dense
//! tissue blob inside the fatty tissue. Each layout also produces a
//! matching knowledge base whose prototypes are the class means.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::knowledge_base::{KbError, KnowledgeBase};
use crate::oversegmentation::{write_pgm, GrayImage, ImageError, LabelMap};
use crate::segmenter::UNLABELED;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Background, muscle, fatty tissue, dense tissue.
    Mammo4,
    /// `n` vertical stripes, one class each.
    Stripes(usize),
    /// Three concentric rectangles.
    Nested,
}

impl Layout {
    pub fn num_classes(self) -> usize {
        match self {
            Layout::Mammo4 => 4,
            Layout::Stripes(n) => n,
            Layout::Nested => 3,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Layout::Mammo4 => ["Background", "Muscle", "Fatty_tissue", "Dense_tissue"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Layout::Stripes(n) => (0..n).map(|i| format!("Stripe{i}")).collect(),
            Layout::Nested => ["Outer", "Middle", "Core"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// Default class intensities (0..255).
    pub fn default_means(self) -> Vec<f64> {
        match self {
            Layout::Mammo4 => vec![20.0, 200.0, 100.0, 160.0],
            Layout::Stripes(n) if n >= 2 => (0..n)
                .map(|i| 30.0 + 195.0 * i as f64 / (n - 1) as f64)
                .collect(),
            Layout::Stripes(n) => vec![128.0; n],
            Layout::Nested => vec![40.0, 130.0, 220.0],
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = String;

    /// `mammo4`, `nested` or `stripesN` (e.g. `stripes3`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mammo4" => Ok(Layout::Mammo4),
            "nested" => Ok(Layout::Nested),
            _ => s
                .strip_prefix("stripes")
                .and_then(|n| n.parse().ok())
                .map(Layout::Stripes)
                .ok_or_else(|| format!("unknown layout `{s}` (expected mammo4|nested|stripesN)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Class intensities on the 0..255 scale, one per layout class.
    pub class_means: Vec<f64>,
    /// Gaussian noise standard deviation per class.
    pub noise_std: Vec<f64>,
    pub seed: u64,
    pub layout: Layout,
}

impl PhantomSpec {
    /// A phantom with the layout's default intensities and the same noise
    /// level for every class.
    pub fn new(layout: Layout, width: usize, height: usize, noise_std: f64, seed: u64) -> Self {
        PhantomSpec {
            width,
            height,
            class_means: layout.default_means(),
            noise_std: vec![noise_std; layout.num_classes()],
            seed,
            layout,
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let k = self.layout.num_classes();
        let bad = |msg: String| Err(PhantomError::InvalidSpec(msg));
        if k < 2 {
            return bad(format!("layout needs at least 2 classes, has {k}"));
        }
        if self.width < 4 || self.height < 4 {
            return bad(format!("image {}x{} is too small", self.width, self.height));
        }
        if let Layout::Stripes(n) = self.layout {
            if n > self.width {
                return bad(format!("{n} stripes do not fit {} columns", self.width));
            }
        }
        if self.class_means.len() != k || self.noise_std.len() != k {
            return bad(format!(
                "layout has {k} classes but {} means and {} noise levels were given",
                self.class_means.len(),
                self.noise_std.len()
            ));
        }
        if self.class_means.iter().any(|m| !(0.0..=255.0).contains(m)) {
            return bad("class means must lie in [0, 255]".into());
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise std must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: GrayImage,
    /// Class id per pixel.
    pub truth: LabelMap,
    pub kb: KnowledgeBase,
}

impl Phantom {
    /// Ground truth as an 8-bit class map.
    pub fn truth_image(&self) -> GrayImage {
        let data = self.truth.labels().iter().map(|&l| l as u8).collect();
        GrayImage::new(self.truth.width(), self.truth.height(), data).expect("same dimensions")
    }
}

/// Prototype spread written into phantom knowledge bases.
const PROTOTYPE_STD: f64 = 20.0;

struct MammoGeometry {
    breast_a: f64,
    breast_b: f64,
    breast_cy: f64,
    muscle_u: f64,
    muscle_v: f64,
    dense_cu: f64,
    dense_cv: f64,
    dense_ru: f64,
    dense_rv: f64,
}

impl MammoGeometry {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        let mut jitter = |base: f64| base + rng.random_range(-0.02..=0.02);
        MammoGeometry {
            breast_a: jitter(0.78),
            breast_b: jitter(0.46),
            breast_cy: jitter(0.5),
            muscle_u: jitter(0.35),
            muscle_v: jitter(0.5),
            dense_cu: jitter(0.42),
            dense_cv: jitter(0.6),
            dense_ru: jitter(0.14),
            dense_rv: jitter(0.12),
        }
    }

    fn class_at(&self, u: f64, v: f64) -> u32 {
        let in_breast =
            (u / self.breast_a).powi(2) + ((v - self.breast_cy) / self.breast_b).powi(2) <= 1.0;
        if !in_breast {
            return 0;
        }
        if u / self.muscle_u + v / self.muscle_v <= 1.0 {
            return 1;
        }
        let in_dense = ((u - self.dense_cu) / self.dense_ru).powi(2)
            + ((v - self.dense_cv) / self.dense_rv).powi(2)
            <= 1.0;
        if in_dense {
            3
        } else {
            2
        }
    }
}

fn layout_truth(spec: &PhantomSpec, geometry_rng: &mut ChaCha8Rng) -> Vec<u32> {
    let (w, h) = (spec.width, spec.height);
    match spec.layout {
        Layout::Mammo4 => {
            let geo = MammoGeometry::sample(geometry_rng);
            (0..w * h)
                .map(|p| {
                    let u = ((p % w) as f64 + 0.5) / w as f64;
                    let v = ((p / w) as f64 + 0.5) / h as f64;
                    geo.class_at(u, v)
                })
                .collect()
        }
        Layout::Stripes(n) => (0..w * h).map(|p| ((p % w) * n / w) as u32).collect(),
        Layout::Nested => {
            let ring = |x: usize, y: usize| -> u32 {
                let fx = (x as f64 + 0.5) / w as f64;
                let fy = (y as f64 + 0.5) / h as f64;
                let inset = fx.min(1.0 - fx).min(fy).min(1.0 - fy);
                if inset >= 0.35 {
                    2
                } else if inset >= 0.18 {
                    1
                } else {
                    0
                }
            };
            (0..w * h).map(|p| ring(p % w, p / w)).collect()
        }
    }
}

fn layout_kb(spec: &PhantomSpec) -> Result<KnowledgeBase, KbError> {
    let names = spec.layout.class_names();
    let classes: Vec<(String, f64, f64)> = names
        .iter()
        .zip(&spec.class_means)
        .zip(&spec.noise_std)
        .map(|((n, &m), &s)| (n.clone(), m, PROTOTYPE_STD.max(s)))
        .collect();
    match spec.layout {
        Layout::Mammo4 => {
            // same relations as the bundled mammogram KB, new prototypes
            let kb = KnowledgeBase::mammogram();
            let pair = |a: usize, b: usize| (names[a].clone(), names[b].clone());
            let neighbors = kb
                .relations()
                .neighbor_pairs
                .iter()
                .map(|&(a, b)| pair(a, b))
                .collect();
            let inclusions = kb
                .relations()
                .inclusion_pairs
                .iter()
                .map(|&(a, b)| pair(a, b))
                .collect();
            let configurations = kb
                .configurations()
                .iter()
                .map(|c| {
                    (
                        names[c.subject].clone(),
                        c.context.iter().map(|&x| names[x].clone()).collect(),
                    )
                })
                .collect();
            KnowledgeBase::new(classes, neighbors, inclusions, configurations)
        }
        Layout::Stripes(n) => {
            let neighbors = (1..n)
                .map(|i| (names[i - 1].clone(), names[i].clone()))
                .collect();
            let configurations = (0..n)
                .map(|i| {
                    let mut ctx = Vec::new();
                    if i > 0 {
                        ctx.push(names[i - 1].clone());
                    }
                    if i + 1 < n {
                        ctx.push(names[i + 1].clone());
                    }
                    (names[i].clone(), ctx)
                })
                .collect();
            KnowledgeBase::new(classes, neighbors, vec![], configurations)
        }
        Layout::Nested => {
            let n = |i: usize| names[i].clone();
            KnowledgeBase::new(
                classes,
                vec![(n(0), n(1)), (n(1), n(2))],
                vec![(n(1), n(0)), (n(2), n(1))],
                vec![
                    (n(0), vec![n(1)]),
                    (n(1), vec![n(0), n(2)]),
                    (n(2), vec![n(1)]),
                ],
            )
        }
    }
}

/// Renders the phantom image, its class ground truth and knowledge base.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let mut geometry_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);

    let truth = layout_truth(spec, &mut geometry_rng);
    let noise: Vec<Option<Normal<f64>>> = spec
        .noise_std
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite std")))
        .collect();
    let data = truth
        .iter()
        .map(|&c| {
            let c = c as usize;
            let mut v = spec.class_means[c];
            if let Some(n) = &noise[c] {
                v += n.sample(&mut noise_rng);
            }
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();

    let image = GrayImage::new(spec.width, spec.height, data)
        .map_err(|e| PhantomError::InvalidSpec(e.to_string()))?;
    let truth = LabelMap::new(spec.width, spec.height, truth)
        .map_err(|e| PhantomError::InvalidSpec(e.to_string()))?;
    Ok(Phantom {
        image,
        truth,
        kb: layout_kb(spec)?,
    })
}

/// Writes `image.pgm`, `truth.pgm` and `phantom.kb` into `dir`.
pub fn write_phantom(phantom: &Phantom, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_pgm(&phantom.image, dir.join("image.pgm"))?;
    write_pgm(&phantom.truth_image(), dir.join("truth.pgm"))?;
    std::fs::write(dir.join("phantom.kb"), phantom.kb.to_text())
}

/// Fraction of pixels whose predicted class equals the truth.
///
/// With `ignore_unlabeled`, [`UNLABELED`] predictions are left out of the
/// denominator (an empty denominator counts as 1.0); otherwise they count
/// as errors.
pub fn pixel_accuracy(
    pred: &GrayImage,
    truth: &GrayImage,
    ignore_unlabeled: bool,
) -> Result<f64, ImageError> {
    if pred.dims() != truth.dims() {
        return Err(ImageError::DimensionMismatch {
            expected: truth.dims(),
            found: pred.dims(),
        });
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        if ignore_unlabeled && p == UNLABELED {
            continue;
        }
        total += 1;
        hits += usize::from(p == t);
    }
    Ok(if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    })
}
