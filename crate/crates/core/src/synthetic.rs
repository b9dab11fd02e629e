//! Synthetic scenes whose correct OoD region is known by construction.
//!
//! The low-resolution grid is split into vertical in-distribution bands,
//! each with its own feature center, plus axis-aligned OoD rectangles with a
//! distinct center. Logits are generated at `scale` times the feature
//! resolution; every full-resolution pixel inside the nearest-neighbour
//! footprint of an OoD rectangle gets max logit `ood_logit`, every other
//! pixel `id_logit` (optionally jittered, with a fraction of in-distribution
//! pixels made uncertain).

use crate::error::Result;
use crate::rng::CounterRng;
use crate::tensor_io::{FeatureMap, GroundTruthMask, LogitMap};

/// Half-open rectangle in low-resolution pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub lr_height: usize,
    pub lr_width: usize,
    pub dim: usize,
    pub scale: usize,
    pub classes: usize,
    pub id_bands: usize,
    pub ood_rects: Vec<Rect>,
    /// Distance between neighbouring blob centers.
    pub separation: f32,
    pub noise: f32,
    pub id_logit: f32,
    pub ood_logit: f32,
    /// Uniform jitter half-width applied to every max logit.
    pub logit_jitter: f32,
    /// Fraction of in-distribution pixels given max logit `ood_logit`.
    pub id_uncertain_fraction: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// 16x16x8 features with one in-distribution blob and one OoD blob,
    /// logits at 4x resolution with max 5.0 (ID) and 0.5 (OoD).
    pub fn two_blob() -> Self {
        Self {
            lr_height: 16,
            lr_width: 16,
            dim: 8,
            scale: 4,
            classes: 19,
            id_bands: 1,
            ood_rects: vec![Rect {
                row0: 5,
                row1: 11,
                col0: 4,
                col1: 10,
            }],
            separation: 6.0,
            noise: 0.5,
            id_logit: 5.0,
            ood_logit: 0.5,
            logit_jitter: 0.0,
            id_uncertain_fraction: 0.0,
            seed: 1,
        }
    }

    pub fn height(&self) -> usize {
        self.lr_height * self.scale
    }

    pub fn width(&self) -> usize {
        self.lr_width * self.scale
    }

    /// Index of the generating blob for a low-resolution pixel: OoD
    /// rectangles are `id_bands + i`, background bands `0..id_bands`.
    pub fn blob_of(&self, row: usize, col: usize) -> usize {
        match self.ood_rects.iter().position(|r| r.contains(row, col)) {
            Some(i) => self.id_bands + i,
            None => (col * self.id_bands / self.lr_width).min(self.id_bands - 1),
        }
    }

    pub fn is_ood_lr(&self, row: usize, col: usize) -> bool {
        self.ood_rects.iter().any(|r| r.contains(row, col))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub features: FeatureMap,
    pub logits: LogitMap,
    pub gt: GroundTruthMask,
    /// Constructed OoD region at logit resolution.
    pub ood_region: Vec<bool>,
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticSample> {
    let mut rng = CounterRng::new(spec.seed);
    let n_blobs = spec.id_bands + spec.ood_rects.len();
    // blob b sits at separation * (one-hot of b, cycling over dims) scaled by its round
    let center = |b: usize, d: usize| -> f32 {
        let axis = b % spec.dim;
        let round = 1 + b / spec.dim;
        if d == axis {
            spec.separation * round as f32
        } else {
            0.0
        }
    };
    debug_assert!(n_blobs >= 1);

    let mut feats = Vec::with_capacity(spec.lr_height * spec.lr_width * spec.dim);
    for r in 0..spec.lr_height {
        for c in 0..spec.lr_width {
            let b = spec.blob_of(r, c);
            for d in 0..spec.dim {
                feats.push(center(b, d) + spec.noise * rng.next_gaussian() as f32);
            }
        }
    }
    let features = FeatureMap::new(spec.lr_height, spec.lr_width, spec.dim, feats)?;

    let (h, w) = (spec.height(), spec.width());
    let mut ood_region = Vec::with_capacity(h * w);
    let mut logits = Vec::with_capacity(h * w * spec.classes);
    for i in 0..h {
        for j in 0..w {
            let ood = spec.is_ood_lr(i / spec.scale, j / spec.scale);
            ood_region.push(ood);
            let uncertain_id = !ood && rng.next_f64() < spec.id_uncertain_fraction;
            let base = if ood || uncertain_id {
                spec.ood_logit
            } else {
                spec.id_logit
            };
            let jitter = spec.logit_jitter * (2.0 * rng.next_f64() as f32 - 1.0);
            let max = base + jitter;
            let top = rng.next_index(spec.classes);
            for cls in 0..spec.classes {
                logits.push(if cls == top {
                    max
                } else {
                    max - 0.5 - 2.0 * rng.next_f64() as f32
                });
            }
        }
    }
    let logits = LogitMap::new(h, w, spec.classes, logits)?;
    let gt = GroundTruthMask::from_binary(h, w, &ood_region)?;
    Ok(SyntheticSample {
        features,
        logits,
        gt,
        ood_region,
    })
}

/// Pixels whose 3x3 neighbourhood straddles the boundary of `region`.
pub fn border_band(region: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut band = vec![false; region.len()];
    for i in 0..height {
        for j in 0..width {
            let v = region[i * width + j];
            'n: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (y, x) = (i as i64 + di, j as i64 + dj);
                    if y < 0 || x < 0 || y >= height as i64 || x >= width as i64 {
                        continue;
                    }
                    if region[y as usize * width + x as usize] != v {
                        band[i * width + j] = true;
                        break 'n;
                    }
                }
            }
        }
    }
    band
}
