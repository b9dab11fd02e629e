//! Training-free out-of-distribution segmentation.
//!
//! Given backbone features and decoder logits for an image, the engine
//! clusters the features with k-means, upsamples the cluster map to logit
//! resolution, measures in each cluster the share of pixels whose max logit
//! falls below `tau`, and flags clusters whose share exceeds `T`. Scores are
//! evaluated with pixel-level Average Precision and FPR at 95% TPR.

pub mod confidence;
pub mod config;
pub mod error;
pub mod kmeans;
pub mod metrics;
pub mod ood_classifier;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod tensor_io;
pub mod upsample;

pub use config::{PipelineConfig, Profile};
pub use error::{Error, Result};
