//! Per-pixel max-logit confidence and the uncertainty indicator.

use crate::error::{Error, Result};
use crate::tensor_io::LogitMap;

/// Max-logit confidence threshold. Pixels strictly below it are uncertain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Tau(f32);

impl Tau {
    pub fn new(value: f32) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidConfig(format!(
                "tau must be finite, got {value}"
            )))
        }
    }

    pub fn value(self) -> f32 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    argmax: Vec<u32>,
}

impl ConfidenceMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `m(x)`, row-major.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Closed-set prediction: class attaining the max, lowest index on ties.
    pub fn argmax_class(&self) -> &[u32] {
        &self.argmax
    }
}

pub fn max_logits(logits: &LogitMap) -> ConfidenceMap {
    let (values, argmax) = logits
        .tensor()
        .pixels()
        .map(|z| {
            z.iter()
                .enumerate()
                .skip(1)
                .fold(
                    (z[0], 0u32),
                    |best, (c, &v)| {
                        if v > best.0 {
                            (v, c as u32)
                        } else {
                            best
                        }
                    },
                )
        })
        .unzip();
    ConfidenceMap {
        height: logits.height(),
        width: logits.width(),
        values,
        argmax,
    }
}

/// Indicator `m(x) < tau`, row-major.
pub fn below_threshold(conf: &ConfidenceMap, tau: Tau) -> Vec<bool> {
    conf.values.iter().map(|&m| m < tau.0).collect()
}
