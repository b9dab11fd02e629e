//! Per-cluster low-confidence ratios, the cluster OoD decision and the
//! per-pixel anomaly score.

use std::fmt;
use std::str::FromStr;

use crate::confidence::{ConfidenceMap, Tau};
use crate::error::{Error, Result};
use crate::upsample::UpsampledAssignment;

/// Fraction of uncertain pixels above which a cluster is OoD.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RatioThreshold(f64);

impl RatioThreshold {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidConfig(format!(
                "ratio threshold must lie in [0, 1], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStat {
    pub pixel_count: usize,
    pub below_count: usize,
    /// `below_count / pixel_count`, or 0 for an empty cluster.
    pub ratio: f64,
    pub is_ood: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Every pixel scores its cluster's ratio.
    #[default]
    Ratio,
    /// Cluster ratio plus a bounded confidence-deficit term that orders
    /// pixels within a cluster.
    RatioLogitBlend,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Ratio => "ratio",
            ScoreMode::RatioLogitBlend => "ratio-logit-blend",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(ScoreMode::Ratio),
            "ratio-logit-blend" => Ok(ScoreMode::RatioLogitBlend),
            _ => Err(Error::InvalidConfig(format!(
                "unknown score mode {s:?} (expected ratio or ratio-logit-blend)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub mode: ScoreMode,
    pub tau: Tau,
    /// Steepness of the confidence-deficit term in blend mode.
    pub blend_lambda: f64,
}

/// Per-image output.
#[derive(Debug, Clone, PartialEq)]
pub struct OodResult {
    pub height: usize,
    pub width: usize,
    /// Higher is more anomalous.
    pub score_map: Vec<f32>,
    pub mask: Vec<bool>,
    pub stats: Vec<ClusterStat>,
}

impl OodResult {
    pub fn mask_area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Counts, for every cluster, its pixels and how many of them are uncertain.
pub fn cluster_stats(
    upsampled: &UpsampledAssignment,
    uncertain: &[bool],
    threshold: RatioThreshold,
) -> Result<Vec<ClusterStat>> {
    if uncertain.len() != upsampled.labels().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} uncertainty flags for a {}x{} label map",
            uncertain.len(),
            upsampled.height(),
            upsampled.width()
        )));
    }
    let mut counts = vec![(0usize, 0usize); upsampled.k()];
    for (&l, &u) in upsampled.labels().iter().zip(uncertain) {
        let c = &mut counts[l as usize];
        c.0 += 1;
        c.1 += u as usize;
    }
    Ok(counts
        .into_iter()
        .map(|(pixel_count, below_count)| {
            let ratio = if pixel_count == 0 {
                0.0
            } else {
                below_count as f64 / pixel_count as f64
            };
            ClusterStat {
                pixel_count,
                below_count,
                ratio,
                is_ood: ratio > threshold.value(),
            }
        })
        .collect())
}

/// Width of the band above each cluster ratio that blend scores occupy:
/// `1 / (10 K)`, narrowed to the smallest gap between distinct ratios of
/// populated clusters so that bands never overlap.
fn blend_band(stats: &[ClusterStat]) -> f64 {
    let mut ratios: Vec<f64> = stats
        .iter()
        .filter(|s| s.pixel_count > 0)
        .map(|s| s.ratio)
        .collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let min_gap = ratios
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    (1.0 / (10.0 * stats.len() as f64)).min(min_gap)
}

pub fn score_and_mask(
    upsampled: &UpsampledAssignment,
    stats: &[ClusterStat],
    conf: &ConfidenceMap,
    params: &ScoreParams,
) -> Result<OodResult> {
    if stats.len() != upsampled.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} cluster stats for k = {}",
            stats.len(),
            upsampled.k()
        )));
    }
    if (conf.height(), conf.width()) != (upsampled.height(), upsampled.width()) {
        return Err(Error::DimensionMismatch(format!(
            "confidence map {}x{} vs label map {}x{}",
            conf.height(),
            conf.width(),
            upsampled.height(),
            upsampled.width()
        )));
    }
    let labels = upsampled.labels();
    let mask = labels.iter().map(|&l| stats[l as usize].is_ood).collect();
    let score_map = match params.mode {
        ScoreMode::Ratio => labels
            .iter()
            .map(|&l| stats[l as usize].ratio as f32)
            .collect(),
        ScoreMode::RatioLogitBlend => {
            let band = blend_band(stats);
            let tau = params.tau.value() as f64;
            let lambda = params.blend_lambda;
            labels
                .iter()
                .zip(conf.values())
                .map(|(&l, &m)| {
                    let deficit = lambda * (tau - m as f64).max(0.0);
                    let squashed = deficit / (1.0 + deficit);
                    (stats[l as usize].ratio + band * squashed) as f32
                })
                .collect()
        }
    };
    Ok(OodResult {
        height: upsampled.height(),
        width: upsampled.width(),
        score_map,
        mask,
        stats: stats.to_vec(),
    })
}

/// Plain max-logit anomaly score `-m(x)`, independent of clustering.
pub fn max_logit_baseline(conf: &ConfidenceMap) -> Vec<f32> {
    conf.values().iter().map(|&m| -m).collect()
}
