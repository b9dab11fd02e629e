//! Browser bindings for the oodseg engine.
//!
//! A [`Scene`] holds one synthetic image with a known OoD rectangle. The page
//! drives three operations on it: segmenting with chosen parameters,
//! comparing the two label upsampling modes, and plotting precision/recall
//! against the max-logit baseline.

use oodseg::kmeans;
use oodseg::metrics::{EvalAccumulator, ScoreView};
use oodseg::ood_classifier::{max_logit_baseline, ScoreMode};
use oodseg::pipeline::run_sample;
use oodseg::synthetic::{generate, Rect, SceneSpec, SyntheticSample};
use oodseg::upsample::{upsample_labels, UpsampleMode};
use oodseg::{PipelineConfig, Result};
use wasm_bindgen::prelude::*;

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

fn to_js(e: oodseg::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(pixels: impl Iterator<Item = [u8; 3]>) -> Vec<u8> {
    pixels.flat_map(|[r, g, b]| [r, g, b, 255]).collect()
}

fn gray(v: f32, lo: f32, hi: f32) -> [u8; 3] {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let g = (t * 255.0).round() as u8;
    [g, g, g]
}

/// Black to red to yellow.
fn heat(v: f32, lo: f32, hi: f32) -> [u8; 3] {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let r = (t * 2.0).min(1.0);
    let g = (t * 2.0 - 1.0).max(0.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

fn range(values: &[f32]) -> (f32, f32) {
    values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Synthetic scene parameters; the OoD rectangle is fixed at the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub seed: u64,
    pub id_bands: usize,
    pub separation: f32,
    pub noise: f32,
    pub logit_jitter: f32,
    pub id_uncertain_fraction: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        let s = SceneSpec::two_blob();
        Self {
            seed: s.seed,
            id_bands: 3,
            separation: s.separation,
            noise: s.noise,
            logit_jitter: 0.5,
            id_uncertain_fraction: 0.05,
        }
    }
}

impl SceneParams {
    fn spec(&self) -> SceneSpec {
        SceneSpec {
            lr_height: 24,
            lr_width: 32,
            scale: 4,
            id_bands: self.id_bands.max(1),
            ood_rects: vec![Rect {
                row0: 8,
                row1: 16,
                col0: 12,
                col1: 20,
            }],
            separation: self.separation,
            noise: self.noise,
            logit_jitter: self.logit_jitter,
            id_uncertain_fraction: self.id_uncertain_fraction,
            seed: self.seed,
            ..SceneSpec::two_blob()
        }
    }
}

/// Parameters for one segmentation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub k: usize,
    pub tau: f32,
    pub ratio_threshold: f64,
    pub upsample: UpsampleMode,
    pub score: ScoreMode,
    pub seed: u64,
}

impl SegmentParams {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            tau: self.tau,
            ratio_threshold: self.ratio_threshold,
            upsample: self.upsample,
            score: self.score,
            seed: self.seed,
            ..PipelineConfig::default()
        }
    }
}

#[wasm_bindgen]
pub struct Scene {
    spec: SceneSpec,
    sample: SyntheticSample,
}

#[wasm_bindgen]
pub struct Segmentation {
    width: usize,
    height: usize,
    clusters: Vec<u8>,
    score: Vec<u8>,
    mask: Vec<u8>,
    stats_csv: String,
    ap: f64,
    fpr95: f64,
    iou: f64,
    inertia: f64,
    iterations: usize,
}

#[wasm_bindgen]
pub struct UpsampleComparison {
    nearest: Vec<u8>,
    bilinear: Vec<u8>,
    diff: Vec<u8>,
    differing: usize,
}

#[wasm_bindgen]
pub struct Curves {
    ours: Vec<f64>,
    baseline: Vec<f64>,
    ours_ap: f64,
    baseline_ap: f64,
    ours_fpr95: f64,
    baseline_fpr95: f64,
}

impl Scene {
    pub fn build(params: &SceneParams) -> Result<Self> {
        let spec = params.spec();
        let sample = generate(&spec)?;
        Ok(Self { spec, sample })
    }

    pub fn segment_with(&self, params: &SegmentParams) -> Result<Segmentation> {
        let s = &self.sample;
        let res = run_sample(&s.features, &s.logits, &params.config())?;
        let ood = &res.ood;
        let (lo, hi) = range(&ood.score_map);
        let (_, assignment) = kmeans::fit(&s.features, &params.config().kmeans_params())?;
        let upsampled = upsample_labels(&assignment, ood.height, ood.width, params.upsample)?;
        let clusters = rgba(
            upsampled
                .labels()
                .iter()
                .map(|&l| PALETTE[l as usize % PALETTE.len()]),
        );
        let score = rgba(ood.score_map.iter().map(|&v| heat(v, lo, hi)));
        let mask = rgba(
            ood.mask
                .iter()
                .zip(&s.ood_region)
                .map(|(&m, &t)| match (m, t) {
                    (true, true) => [255, 255, 255],
                    (true, false) => [230, 60, 60],
                    (false, true) => [60, 90, 230],
                    (false, false) => [0, 0, 0],
                }),
        );
        let acc = EvalAccumulator::from_image(
            ScoreView {
                height: ood.height,
                width: ood.width,
                values: &ood.score_map,
            },
            &s.gt,
        )?;
        let report = acc.report()?;
        Ok(Segmentation {
            width: ood.width,
            height: ood.height,
            clusters,
            score,
            mask,
            stats_csv: oodseg::pipeline::cluster_csv(ood),
            ap: report.ap,
            fpr95: report.fpr_at_95_tpr,
            iou: iou(&ood.mask, &s.ood_region),
            inertia: res.model.inertia(),
            iterations: res.model.iterations_run(),
        })
    }

    pub fn compare_upsampling_with(&self, k: usize, seed: u64) -> Result<UpsampleComparison> {
        let s = &self.sample;
        let (_, assignment) = kmeans::fit(&s.features, &kmeans::KMeansParams::new(k, seed))?;
        let (h, w) = (s.logits.height(), s.logits.width());
        let near = upsample_labels(&assignment, h, w, UpsampleMode::Nearest)?;
        let bil = upsample_labels(&assignment, h, w, UpsampleMode::OnehotBilinear)?;
        let paint =
            |labels: &[u32]| rgba(labels.iter().map(|&l| PALETTE[l as usize % PALETTE.len()]));
        let mut differing = 0;
        let diff = rgba(near.labels().iter().zip(bil.labels()).map(|(a, b)| {
            if a == b {
                [0, 0, 0]
            } else {
                differing += 1;
                [255, 255, 255]
            }
        }));
        Ok(UpsampleComparison {
            nearest: paint(near.labels()),
            bilinear: paint(bil.labels()),
            diff,
            differing,
        })
    }

    pub fn curves_with(&self, params: &SegmentParams) -> Result<Curves> {
        let s = &self.sample;
        let res = run_sample(&s.features, &s.logits, &params.config())?;
        let base = max_logit_baseline(&res.confidence);
        let acc = |values: &[f32]| {
            EvalAccumulator::from_image(
                ScoreView {
                    height: s.gt.height(),
                    width: s.gt.width(),
                    values,
                },
                &s.gt,
            )
        };
        let ours = acc(&res.ood.score_map)?;
        let theirs = acc(&base)?;
        let flat =
            |a: &EvalAccumulator| a.pr_curve().into_iter().flat_map(|(r, p)| [r, p]).collect();
        let (ro, rb) = (ours.report()?, theirs.report()?);
        Ok(Curves {
            ours: flat(&ours),
            baseline: flat(&theirs),
            ours_ap: ro.ap,
            baseline_ap: rb.ap,
            ours_fpr95: ro.fpr_at_95_tpr,
            baseline_fpr95: rb.fpr_at_95_tpr,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }
}

fn segment_params(
    k: usize,
    tau: f32,
    ratio_threshold: f64,
    upsample: &str,
    score: &str,
    seed: u32,
) -> std::result::Result<SegmentParams, JsError> {
    Ok(SegmentParams {
        k,
        tau,
        ratio_threshold,
        upsample: upsample.parse().map_err(to_js)?,
        score: score.parse().map_err(to_js)?,
        seed: seed as u64,
    })
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u32,
        id_bands: usize,
        separation: f32,
        noise: f32,
        logit_jitter: f32,
        id_uncertain_fraction: f64,
    ) -> std::result::Result<Scene, JsError> {
        Scene::build(&SceneParams {
            seed: seed as u64,
            id_bands,
            separation,
            noise,
            logit_jitter,
            id_uncertain_fraction,
        })
        .map_err(to_js)
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.sample.logits.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.sample.logits.height()
    }

    /// Max-logit confidence as grayscale RGBA.
    pub fn confidence_rgba(&self) -> Vec<u8> {
        let conf = oodseg::confidence::max_logits(&self.sample.logits);
        let (lo, hi) = range(conf.values());
        rgba(conf.values().iter().map(|&v| gray(v, lo, hi)))
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        rgba(
            self.sample
                .ood_region
                .iter()
                .map(|&t| if t { [255, 255, 255] } else { [0, 0, 0] }),
        )
    }

    pub fn segment(
        &self,
        k: usize,
        tau: f32,
        ratio_threshold: f64,
        upsample: &str,
        score: &str,
        seed: u32,
    ) -> std::result::Result<Segmentation, JsError> {
        let p = segment_params(k, tau, ratio_threshold, upsample, score, seed)?;
        self.segment_with(&p).map_err(to_js)
    }

    pub fn compare_upsampling(
        &self,
        k: usize,
        seed: u32,
    ) -> std::result::Result<UpsampleComparison, JsError> {
        self.compare_upsampling_with(k, seed as u64).map_err(to_js)
    }

    pub fn curves(
        &self,
        k: usize,
        tau: f32,
        ratio_threshold: f64,
        upsample: &str,
        score: &str,
        seed: u32,
    ) -> std::result::Result<Curves, JsError> {
        let p = segment_params(k, tau, ratio_threshold, upsample, score, seed)?;
        self.curves_with(&p).map_err(to_js)
    }
}

#[wasm_bindgen]
impl Segmentation {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn clusters_rgba(&self) -> Vec<u8> {
        self.clusters.clone()
    }
    pub fn score_rgba(&self) -> Vec<u8> {
        self.score.clone()
    }
    /// White: hit, red: false alarm, blue: miss.
    pub fn mask_rgba(&self) -> Vec<u8> {
        self.mask.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn stats_csv(&self) -> String {
        self.stats_csv.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn ap(&self) -> f64 {
        self.ap
    }
    #[wasm_bindgen(getter)]
    pub fn fpr95(&self) -> f64 {
        self.fpr95
    }
    #[wasm_bindgen(getter)]
    pub fn iou(&self) -> f64 {
        self.iou
    }
    #[wasm_bindgen(getter)]
    pub fn inertia(&self) -> f64 {
        self.inertia
    }
    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

#[wasm_bindgen]
impl UpsampleComparison {
    pub fn nearest_rgba(&self) -> Vec<u8> {
        self.nearest.clone()
    }
    pub fn bilinear_rgba(&self) -> Vec<u8> {
        self.bilinear.clone()
    }
    pub fn diff_rgba(&self) -> Vec<u8> {
        self.diff.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn differing(&self) -> usize {
        self.differing
    }
}

#[wasm_bindgen]
impl Curves {
    /// Interleaved (recall, precision) pairs.
    pub fn ours(&self) -> Vec<f64> {
        self.ours.clone()
    }
    pub fn baseline(&self) -> Vec<f64> {
        self.baseline.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn ours_ap(&self) -> f64 {
        self.ours_ap
    }
    #[wasm_bindgen(getter)]
    pub fn baseline_ap(&self) -> f64 {
        self.baseline_ap
    }
    #[wasm_bindgen(getter)]
    pub fn ours_fpr95(&self) -> f64 {
        self.ours_fpr95
    }
    #[wasm_bindgen(getter)]
    pub fn baseline_fpr95(&self) -> f64 {
        self.baseline_fpr95
    }
}
