//! Pipeline hyperparameters, benchmark profiles and the flat `key = value`
//! config file format.

use std::fmt;
use std::str::FromStr;

use crate::confidence::Tau;
use crate::error::{Error, Result};
use crate::kmeans::{KMeansParams, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::ood_classifier::{RatioThreshold, ScoreMode, ScoreParams};
use crate::upsample::UpsampleMode;

/// Hyperparameter triples `(K, tau, T)` tuned per benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Driving scenes with a 19-class Cityscapes head: K = 5, tau = 1.5, T = 0.30.
    Cityscapes,
    /// ADE20k-based scenes: K = 6, tau = 1.1, T = 0.40.
    AdeOod,
}

impl Profile {
    pub fn k(self) -> usize {
        match self {
            Profile::Cityscapes => 5,
            Profile::AdeOod => 6,
        }
    }

    pub fn tau(self) -> f32 {
        match self {
            Profile::Cityscapes => 1.5,
            Profile::AdeOod => 1.1,
        }
    }

    pub fn ratio_threshold(self) -> f64 {
        match self {
            Profile::Cityscapes => 0.30,
            Profile::AdeOod => 0.40,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Cityscapes => "cityscapes",
            Profile::AdeOod => "ade-ood",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cityscapes" => Ok(Profile::Cityscapes),
            "ade-ood" => Ok(Profile::AdeOod),
            _ => Err(Error::InvalidConfig(format!(
                "unknown profile {s:?} (expected cityscapes or ade-ood)"
            ))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub tau: f32,
    pub ratio_threshold: f64,
    pub seed: u64,
    pub upsample: UpsampleMode,
    pub score: ScoreMode,
    pub blend_lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_profile(Profile::Cityscapes)
    }
}

impl PipelineConfig {
    pub fn from_profile(profile: Profile) -> Self {
        Self {
            k: profile.k(),
            tau: profile.tau(),
            ratio_threshold: profile.ratio_threshold(),
            seed: 0,
            upsample: UpsampleMode::default(),
            score: ScoreMode::default(),
            blend_lambda: 1.0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        self.k = profile.k();
        self.tau = profile.tau();
        self.ratio_threshold = profile.ratio_threshold();
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Tau::new(self.tau)?;
        RatioThreshold::new(self.ratio_threshold)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max-iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        if !(self.blend_lambda.is_finite() && self.blend_lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "blend-lambda must be finite and >= 0, got {}",
                self.blend_lambda
            )));
        }
        Ok(())
    }

    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn tau(&self) -> Result<Tau> {
        Tau::new(self.tau)
    }

    pub fn ratio_threshold(&self) -> Result<RatioThreshold> {
        RatioThreshold::new(self.ratio_threshold)
    }

    pub fn score_params(&self) -> Result<ScoreParams> {
        Ok(ScoreParams {
            mode: self.score,
            tau: self.tau()?,
            blend_lambda: self.blend_lambda,
        })
    }

    /// Sets one option by its command-line flag name (without dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        match key {
            "k" => self.k = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "ratio-threshold" => self.ratio_threshold = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "upsample" => self.upsample = value.parse()?,
            "score" => self.score = value.parse()?,
            "blend-lambda" => self.blend_lambda = parse(key, value)?,
            "max-iter" => self.max_iter = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "profile" => self.apply_profile(value.parse()?),
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat config file: one `key = value` per line, `#` starts a
    /// comment. A `profile` line is applied before the other keys.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().trim_start_matches("--");
            entries.push((key.to_owned(), value.trim().to_owned()));
        }
        entries.sort_by_key(|(k, _)| k != "profile");
        for (k, v) in entries {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str =
        "k,tau,ratio_threshold,seed,upsample,score,blend_lambda,max_iter,tol";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.k,
            self.tau,
            self.ratio_threshold,
            self.seed,
            self.upsample,
            self.score,
            self.blend_lambda,
            self.max_iter,
            self.tol
        )
    }
}
