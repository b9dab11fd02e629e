//! Lifts low-resolution cluster labels to logit resolution.
//!
//! Both modes sample the source grid at half-pixel centers without corner
//! alignment: output pixel `i` of `dst` maps to source coordinate
//! `(i + 0.5) * src / dst - 0.5`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kmeans::ClusterAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpsampleMode {
    /// Label of the source pixel containing the output pixel center.
    #[default]
    Nearest,
    /// Per-cluster one-hot channels, bilinearly interpolated, then argmax.
    OnehotBilinear,
}

impl UpsampleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UpsampleMode::Nearest => "nearest",
            UpsampleMode::OnehotBilinear => "onehot-bilinear",
        }
    }
}

impl fmt::Display for UpsampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(UpsampleMode::Nearest),
            "onehot-bilinear" => Ok(UpsampleMode::OnehotBilinear),
            _ => Err(Error::InvalidConfig(format!(
                "unknown upsample mode {s:?} (expected nearest or onehot-bilinear)"
            ))),
        }
    }
}

/// Cluster labels at logit resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpsampledAssignment {
    height: usize,
    width: usize,
    k: usize,
    labels: Vec<u32>,
}

impl UpsampledAssignment {
    pub fn new(height: usize, width: usize, k: usize, labels: Vec<u32>) -> Result<Self> {
        ClusterAssignment::new(height, width, k, labels).map(|a| Self {
            height: a.height(),
            width: a.width(),
            k: a.k(),
            labels: a.labels().to_vec(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
}

/// Source index whose cell contains the center of output pixel `i`.
#[inline]
fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    ((2 * i + 1) * src) / (2 * dst)
}

/// Two neighbouring source indices and the weight of the second.
#[inline]
fn linear_taps(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, s - i0 as f64)
}

fn upsample_row(
    assign: &ClusterAssignment,
    row: usize,
    target_h: usize,
    target_w: usize,
    mode: UpsampleMode,
    out: &mut [u32],
) {
    let (sh, sw) = (assign.height(), assign.width());
    match mode {
        UpsampleMode::Nearest => {
            let r = nearest_index(row, sh, target_h);
            for (j, o) in out.iter_mut().enumerate() {
                *o = assign.get(r, nearest_index(j, sw, target_w));
            }
        }
        UpsampleMode::OnehotBilinear => {
            let (y0, y1, ly) = linear_taps(row, sh, target_h);
            let mut weights = vec![0.0f64; assign.k()];
            for (j, o) in out.iter_mut().enumerate() {
                let (x0, x1, lx) = linear_taps(j, sw, target_w);
                weights.fill(0.0);
                weights[assign.get(y0, x0) as usize] += (1.0 - ly) * (1.0 - lx);
                weights[assign.get(y0, x1) as usize] += (1.0 - ly) * lx;
                weights[assign.get(y1, x0) as usize] += ly * (1.0 - lx);
                weights[assign.get(y1, x1) as usize] += ly * lx;
                let mut best = 0;
                for (c, &w) in weights.iter().enumerate().skip(1) {
                    if w > weights[best] {
                        best = c;
                    }
                }
                *o = best as u32;
            }
        }
    }
}

pub fn upsample_labels(
    assign: &ClusterAssignment,
    target_h: usize,
    target_w: usize,
    mode: UpsampleMode,
) -> Result<UpsampledAssignment> {
    if target_h < assign.height() || target_w < assign.width() {
        return Err(Error::BadTarget {
            source_h: assign.height(),
            source_w: assign.width(),
            target_h,
            target_w,
        });
    }
    let mut labels = vec![0u32; target_h * target_w];

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        labels
            .par_chunks_mut(target_w)
            .enumerate()
            .for_each(|(r, row)| upsample_row(assign, r, target_h, target_w, mode, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (r, row) in labels.chunks_mut(target_w).enumerate() {
        upsample_row(assign, r, target_h, target_w, mode, row);
    }

    Ok(UpsampledAssignment {
        height: target_h,
        width: target_w,
        k: assign.k(),
        labels,
    })
}
