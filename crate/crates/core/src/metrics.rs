//! Pixel-level Average Precision and FPR at a target TPR, with OoD as the
//! positive class and ignore pixels excluded.
//!
//! Scores are pooled across images and reduced to one run per distinct score
//! value, sorted descending. Tied scores therefore form a single threshold,
//! and the reduction is independent of pixel and image order.

use crate::error::{Error, Result};
use crate::tensor_io::{GroundTruthMask, LABEL_IGNORE, LABEL_OOD};

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

/// Positive and negative pixel counts sharing one score value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRun {
    pub score: f64,
    pub pos: u64,
    pub neg: u64,
}

/// Pooled (score, label) statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalAccumulator {
    runs: Vec<ScoreRun>,
    n_pos: u64,
    n_neg: u64,
    n_images: usize,
}

/// Borrowed score map with its dimensions.
#[derive(Debug, Clone, Copy)]
pub struct ScoreView<'a> {
    pub height: usize,
    pub width: usize,
    pub values: &'a [f32],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ap: f64,
    pub fpr_at_95_tpr: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

/// Sorts descending and collapses equal scores.
fn compress(mut pairs: Vec<(f64, bool)>) -> Vec<ScoreRun> {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut runs: Vec<ScoreRun> = Vec::new();
    for (score, positive) in pairs {
        match runs.last_mut() {
            Some(r) if r.score == score => {
                if positive {
                    r.pos += 1
                } else {
                    r.neg += 1
                }
            }
            _ => runs.push(ScoreRun {
                score,
                pos: positive as u64,
                neg: !positive as u64,
            }),
        }
    }
    runs
}

fn merge_runs(a: &[ScoreRun], b: &[ScoreRun]) -> Vec<ScoreRun> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if x.score == y.score {
            out.push(ScoreRun {
                score: x.score,
                pos: x.pos + y.pos,
                neg: x.neg + y.neg,
            });
            i += 1;
            j += 1;
        } else if x.score > y.score {
            out.push(x);
            i += 1;
        } else {
            out.push(y);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn checked_score(v: f64) -> Result<f64> {
    if v.is_finite() {
        // folds -0.0 into +0.0 so both share a threshold
        Ok(v + 0.0)
    } else {
        Err(Error::InvalidTensor(format!("non-finite score {v}")))
    }
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates raw `(score, is_positive)` pairs.
    pub fn from_pairs(scores: &[f64], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let pairs = scores
            .iter()
            .zip(labels)
            .map(|(&s, &l)| checked_score(s).map(|s| (s, l)))
            .collect::<Result<Vec<_>>>()?;
        let n_pos = labels.iter().filter(|&&l| l).count() as u64;
        Ok(Self {
            runs: compress(pairs),
            n_pos,
            n_neg: labels.len() as u64 - n_pos,
            n_images: 1,
        })
    }

    /// Accumulator for one image; ignore pixels are dropped.
    pub fn from_image(scores: ScoreView<'_>, gt: &GroundTruthMask) -> Result<Self> {
        if (scores.height, scores.width) != (gt.height(), gt.width())
            || scores.values.len() != gt.labels().len()
        {
            return Err(Error::DimensionMismatch(format!(
                "score map {}x{} vs ground truth {}x{}",
                scores.height,
                scores.width,
                gt.height(),
                gt.width()
            )));
        }
        let mut pairs = Vec::with_capacity(scores.values.len());
        for (&s, &l) in scores.values.iter().zip(gt.labels()) {
            if l != LABEL_IGNORE {
                pairs.push((checked_score(s as f64)?, l == LABEL_OOD));
            }
        }
        let n_pos = pairs.iter().filter(|p| p.1).count() as u64;
        Ok(Self {
            n_neg: pairs.len() as u64 - n_pos,
            n_pos,
            runs: compress(pairs),
            n_images: 1,
        })
    }

    /// Folds `other` into `self`. Associative and commutative.
    pub fn merge(&mut self, other: &EvalAccumulator) {
        self.runs = merge_runs(&self.runs, &other.runs);
        self.n_pos += other.n_pos;
        self.n_neg += other.n_neg;
        self.n_images += other.n_images;
    }

    pub fn runs(&self) -> &[ScoreRun] {
        &self.runs
    }

    pub fn n_pos(&self) -> u64 {
        self.n_pos
    }

    pub fn n_neg(&self) -> u64 {
        self.n_neg
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    fn check_classes(&self) -> Result<()> {
        if self.n_pos == 0 {
            return Err(Error::NoPositives);
        }
        if self.n_neg == 0 {
            return Err(Error::NoNegatives);
        }
        Ok(())
    }

    /// Step-wise area under the precision-recall curve:
    /// `sum_n (R_n - R_{n-1}) * P_n` over distinct descending thresholds.
    pub fn average_precision(&self) -> Result<f64> {
        self.check_classes()?;
        let total_pos = self.n_pos as f64;
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for run in &self.runs {
            tp += run.pos;
            fp += run.neg;
            let recall = tp as f64 / total_pos;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        Ok(ap)
    }

    /// FPR at the largest threshold whose TPR reaches `tpr_target`.
    pub fn fpr_at_tpr(&self, tpr_target: f64) -> Result<f64> {
        self.check_classes()?;
        if !(tpr_target > 0.0 && tpr_target <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tpr target must lie in (0, 1], got {tpr_target}"
            )));
        }
        let (mut tp, mut fp) = (0u64, 0u64);
        for run in &self.runs {
            tp += run.pos;
            fp += run.neg;
            if tp as f64 / self.n_pos as f64 >= tpr_target {
                return Ok(fp as f64 / self.n_neg as f64);
            }
        }
        unreachable!("the lowest threshold admits every positive")
    }

    pub fn report(&self) -> Result<EvalReport> {
        Ok(EvalReport {
            ap: self.average_precision()?,
            fpr_at_95_tpr: self.fpr_at_tpr(DEFAULT_TPR_TARGET)?,
            n_pos: self.n_pos,
            n_neg: self.n_neg,
        })
    }

    /// `(recall, precision)` at every distinct threshold, descending score.
    pub fn pr_curve(&self) -> Vec<(f64, f64)> {
        let (mut tp, mut fp) = (0u64, 0u64);
        self.runs
            .iter()
            .map(|run| {
                tp += run.pos;
                fp += run.neg;
                (
                    tp as f64 / self.n_pos.max(1) as f64,
                    tp as f64 / (tp + fp) as f64,
                )
            })
            .collect()
    }

    /// `(fpr, tpr)` at every distinct threshold, descending score.
    pub fn roc_curve(&self) -> Vec<(f64, f64)> {
        let (mut tp, mut fp) = (0u64, 0u64);
        self.runs
            .iter()
            .map(|run| {
                tp += run.pos;
                fp += run.neg;
                (
                    fp as f64 / self.n_neg.max(1) as f64,
                    tp as f64 / self.n_pos.max(1) as f64,
                )
            })
            .collect()
    }
}

pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    EvalAccumulator::from_pairs(scores, labels)?.average_precision()
}

pub fn fpr_at_tpr(scores: &[f64], labels: &[bool], tpr_target: f64) -> Result<f64> {
    EvalAccumulator::from_pairs(scores, labels)?.fpr_at_tpr(tpr_target)
}

/// Pools every non-ignored pixel of every image into one evaluation.
pub fn evaluate_dataset<'a>(
    pairs: impl IntoIterator<Item = (ScoreView<'a>, &'a GroundTruthMask)>,
) -> Result<EvalReport> {
    let mut acc: Option<EvalAccumulator> = None;
    for (scores, gt) in pairs {
        let img = EvalAccumulator::from_image(scores, gt)?;
        match acc.as_mut() {
            Some(a) => a.merge(&img),
            None => acc = Some(img),
        }
    }
    acc.ok_or(Error::EmptyDataset)?.report()
}
