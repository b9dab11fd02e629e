//! Composition of the stages for single samples, dataset directories and
//! hyperparameter sweeps.
//!
//! A dataset directory holds, per sample `<name>`, the files
//! `<name>.features.npy`, `<name>.logits.npy` and `<name>.gt.pgm`. Outputs
//! are `<name>.score.npy` (shape `[H, W, 1]`), `<name>.mask.pgm` and a pooled
//! `metrics.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::confidence::{below_threshold, max_logits, ConfidenceMap, Tau};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::kmeans::{self, ClusterModel};
use crate::metrics::{EvalAccumulator, EvalReport, ScoreView};
use crate::ood_classifier::{
    cluster_stats, max_logit_baseline, score_and_mask, OodResult, RatioThreshold, ScoreParams,
};
use crate::tensor_io::{
    load_features, load_logits, load_mask, save_mask, save_tensor, FeatureMap, GroundTruthMask,
    LogitMap, Tensor3,
};
use crate::upsample::{upsample_labels, UpsampledAssignment};

pub const FEATURES_SUFFIX: &str = ".features.npy";
pub const LOGITS_SUFFIX: &str = ".logits.npy";
pub const GT_SUFFIX: &str = ".gt.pgm";
pub const SCORE_SUFFIX: &str = ".score.npy";
pub const MASK_SUFFIX: &str = ".mask.pgm";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone)]
pub struct SampleResult {
    pub ood: OodResult,
    pub model: ClusterModel,
    pub confidence: ConfidenceMap,
    pub config: PipelineConfig,
}

/// Clusters one image's features and scores its pixels.
pub fn run_sample(
    features: &FeatureMap,
    logits: &LogitMap,
    config: &PipelineConfig,
) -> Result<SampleResult> {
    config.validate()?;
    let (model, assignment) = kmeans::fit(features, &config.kmeans_params())?;
    let confidence = max_logits(logits);
    let upsampled = upsample_labels(
        &assignment,
        logits.height(),
        logits.width(),
        config.upsample,
    )?;
    let ood = classify(
        &upsampled,
        &confidence,
        config.tau()?,
        config.ratio_threshold()?,
        &config.score_params()?,
    )?;
    Ok(SampleResult {
        ood,
        model,
        confidence,
        config: *config,
    })
}

fn classify(
    upsampled: &UpsampledAssignment,
    confidence: &ConfidenceMap,
    tau: Tau,
    threshold: RatioThreshold,
    score: &ScoreParams,
) -> Result<OodResult> {
    let uncertain = below_threshold(confidence, tau);
    let stats = cluster_stats(upsampled, &uncertain, threshold)?;
    score_and_mask(upsampled, &stats, confidence, score)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFiles {
    pub name: String,
    pub features: PathBuf,
    pub logits: PathBuf,
    pub gt: PathBuf,
}

impl SampleFiles {
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        Self {
            name: name.to_owned(),
            features: dir.join(format!("{name}{FEATURES_SUFFIX}")),
            logits: dir.join(format!("{name}{LOGITS_SUFFIX}")),
            gt: dir.join(format!("{name}{GT_SUFFIX}")),
        }
    }

    fn missing(&self) -> Option<&Path> {
        [&self.features, &self.logits, &self.gt]
            .into_iter()
            .find(|p| !p.is_file())
            .map(PathBuf::as_path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Process samples concurrently.
    pub parallel: bool,
    /// Log and skip failing samples instead of aborting.
    pub skip_bad: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            skip_bad: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub dataset: String,
    pub n_images: usize,
    pub report: EvalReport,
    pub skipped: Vec<String>,
}

/// Lists the samples of a dataset directory in name order.
///
/// A name is a sample as soon as any of its three files exists; samples
/// missing a file are errors, or are skipped (and returned in the second
/// list) under `skip_bad`.
pub fn discover(dir: &Path, skip_bad: bool) -> Result<(Vec<SampleFiles>, Vec<String>)> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(dir.to_owned()),
        _ => Error::io(dir, e),
    })?;
    let mut names = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file_name = entry.file_name();
        let Some(file_name) = file_name.to_str() else {
            continue;
        };
        for suffix in [FEATURES_SUFFIX, LOGITS_SUFFIX, GT_SUFFIX] {
            if let Some(name) = file_name.strip_suffix(suffix) {
                if !name.is_empty() {
                    names.insert(name.to_owned(), ());
                }
            }
        }
    }
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for name in names.into_keys() {
        let files = SampleFiles::in_dir(dir, &name);
        if let Some(missing) = files.missing() {
            let err = Error::IncompleteSample {
                name: name.clone(),
                missing: missing.to_owned(),
            };
            if skip_bad {
                warn!("skipping: {err}");
                skipped.push(name);
                continue;
            }
            return Err(err);
        }
        samples.push(files);
    }
    Ok((samples, skipped))
}

/// Applies `f` to every sample and folds the results in sample order.
///
/// Samples are processed in batches so that at most one batch of results is
/// held at a time; the fold order, and therefore the output, does not depend
/// on `opts.parallel`.
fn for_each_sample<T, F, G>(
    samples: &[SampleFiles],
    opts: RunOptions,
    skipped: &mut Vec<String>,
    f: F,
    mut fold: G,
) -> Result<usize>
where
    T: Send,
    F: Fn(&SampleFiles) -> Result<T> + Sync,
    G: FnMut(T),
{
    let run_one = |s: &SampleFiles| f(s).map_err(|e| e.in_sample(&s.name));
    let batch = batch_size(opts.parallel);
    let mut done = 0;
    for chunk in samples.chunks(batch) {
        let results: Vec<Result<T>> = map_chunk(chunk, opts.parallel, &run_one);
        for (s, r) in chunk.iter().zip(results) {
            match r {
                Ok(v) => {
                    fold(v);
                    done += 1;
                }
                Err(e) if opts.skip_bad => {
                    warn!("skipping: {e}");
                    skipped.push(s.name.clone());
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(done)
}

#[cfg(feature = "parallel")]
fn batch_size(parallel: bool) -> usize {
    if parallel {
        2 * rayon::current_num_threads()
    } else {
        1
    }
}

#[cfg(not(feature = "parallel"))]
fn batch_size(_parallel: bool) -> usize {
    1
}

fn map_chunk<T: Send>(
    chunk: &[SampleFiles],
    parallel: bool,
    f: &(dyn Fn(&SampleFiles) -> Result<T> + Sync),
) -> Vec<Result<T>> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return chunk.par_iter().map(f).collect();
    }
    let _ = parallel;
    chunk.iter().map(f).collect()
}

fn dataset_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn score_tensor(height: usize, width: usize, scores: &[f32]) -> Result<Tensor3> {
    Tensor3::new([height, width, 1], scores.to_vec())
}

fn write_outputs(out_dir: &Path, name: &str, ood: &OodResult) -> Result<()> {
    save_tensor(
        &score_tensor(ood.height, ood.width, &ood.score_map)?,
        out_dir.join(format!("{name}{SCORE_SUFFIX}")),
    )?;
    save_mask(
        &GroundTruthMask::from_binary(ood.height, ood.width, &ood.mask)?,
        out_dir.join(format!("{name}{MASK_SUFFIX}")),
    )
}

pub const METRICS_HEADER: &str = "dataset,n_images,n_pos,n_neg,ap,fpr95";

fn metrics_row(r: &DatasetReport, config: Option<&PipelineConfig>) -> String {
    let cfg = match config {
        Some(c) => c.csv_fields(),
        // baseline: no clustering parameters apply
        None => ",,,,,max-logit-baseline,,,".to_owned(),
    };
    format!(
        "{},{},{},{},{},{},{}",
        r.dataset,
        r.n_images,
        r.report.n_pos,
        r.report.n_neg,
        r.report.ap,
        r.report.fpr_at_95_tpr,
        cfg
    )
}

fn metrics_csv<'a>(
    rows: impl IntoIterator<Item = (&'a DatasetReport, Option<&'a PipelineConfig>)>,
) -> String {
    let mut out = format!("{METRICS_HEADER},{}\n", PipelineConfig::CSV_HEADER);
    for (r, c) in rows {
        let _ = writeln!(out, "{}", metrics_row(r, c));
    }
    out
}

fn finish(
    dataset: String,
    acc: Option<EvalAccumulator>,
    n_images: usize,
    skipped: Vec<String>,
) -> Result<DatasetReport> {
    let acc = acc.ok_or(Error::EmptyDataset)?;
    Ok(DatasetReport {
        dataset,
        n_images,
        report: acc.report()?,
        skipped,
    })
}

fn merge_into(acc: &mut Option<EvalAccumulator>, img: EvalAccumulator) {
    match acc {
        Some(a) => a.merge(&img),
        None => *acc = Some(img),
    }
}

/// Runs every sample of `dir`, writes per-sample outputs and `metrics.csv`
/// into `out_dir`, and returns the pooled evaluation.
pub fn run_dataset(
    dir: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<DatasetReport> {
    config.validate()?;
    let (samples, mut skipped) = discover(dir, opts.skip_bad)?;
    create_dir(out_dir)?;
    let mut acc = None;
    let n = for_each_sample(
        &samples,
        opts,
        &mut skipped,
        |s| {
            let features = load_features(&s.features)?;
            let logits = load_logits(&s.logits)?;
            let gt = load_mask(&s.gt)?;
            let r = run_sample(&features, &logits, config)?;
            if r.model.degenerate() {
                warn!(
                    "{}: fewer distinct feature vectors than k = {}",
                    s.name, config.k
                );
            }
            write_outputs(out_dir, &s.name, &r.ood)?;
            EvalAccumulator::from_image(
                ScoreView {
                    height: r.ood.height,
                    width: r.ood.width,
                    values: &r.ood.score_map,
                },
                &gt,
            )
        },
        |img| merge_into(&mut acc, img),
    )?;
    let report = finish(dataset_name(dir), acc, n, skipped)?;
    write_text(
        &out_dir.join(METRICS_FILE),
        &metrics_csv([(&report, Some(config))]),
    )?;
    info!(
        "{}: {} images, AP {:.4}, FPR@95 {:.4}",
        report.dataset, report.n_images, report.report.ap, report.report.fpr_at_95_tpr
    );
    Ok(report)
}

/// Plain max-logit reference: score `-m(x)`, no clustering.
pub fn run_baseline(dir: &Path, out_dir: &Path, opts: RunOptions) -> Result<DatasetReport> {
    let (samples, mut skipped) = discover(dir, opts.skip_bad)?;
    create_dir(out_dir)?;
    let mut acc = None;
    let n = for_each_sample(
        &samples,
        opts,
        &mut skipped,
        |s| {
            let logits = load_logits(&s.logits)?;
            let gt = load_mask(&s.gt)?;
            let conf = max_logits(&logits);
            let scores = max_logit_baseline(&conf);
            save_tensor(
                &score_tensor(conf.height(), conf.width(), &scores)?,
                out_dir.join(format!("{}{SCORE_SUFFIX}", s.name)),
            )?;
            EvalAccumulator::from_image(
                ScoreView {
                    height: conf.height(),
                    width: conf.width(),
                    values: &scores,
                },
                &gt,
            )
        },
        |img| merge_into(&mut acc, img),
    )?;
    let report = finish(dataset_name(dir), acc, n, skipped)?;
    write_text(&out_dir.join(METRICS_FILE), &metrics_csv([(&report, None)]))?;
    Ok(report)
}

/// Candidate values; the sweep visits their cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ks: Vec<usize>,
    pub taus: Vec<f32>,
    pub ratio_thresholds: Vec<f64>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.taus.is_empty() || self.ratio_thresholds.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep grid lists must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Grid points with K outermost and T innermost.
    pub fn configs(&self, base: &PipelineConfig) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &tau in &self.taus {
                for &ratio_threshold in &self.ratio_thresholds {
                    out.push(PipelineConfig {
                        k,
                        tau,
                        ratio_threshold,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: PipelineConfig,
    pub report: DatasetReport,
}

/// Evaluates every grid point on `dir`, writing `sweep.csv` sorted by AP
/// (descending, grid order on ties). Each sample is loaded once and each
/// clustering is shared by all `(tau, T)` pairs with the same K.
pub fn sweep(
    dir: &Path,
    base: &PipelineConfig,
    grid: &SweepGrid,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let configs = grid.configs(base);
    for c in &configs {
        c.validate()?;
    }
    let (samples, mut skipped) = discover(dir, opts.skip_bad)?;
    create_dir(out_dir)?;

    let mut accs: Vec<Option<EvalAccumulator>> = vec![None; configs.len()];
    let n = for_each_sample(
        &samples,
        opts,
        &mut skipped,
        |s| {
            let features = load_features(&s.features)?;
            let logits = load_logits(&s.logits)?;
            let gt = load_mask(&s.gt)?;
            let conf = max_logits(&logits);
            let mut per_config = Vec::with_capacity(configs.len());
            let mut current: Option<(usize, UpsampledAssignment)> = None;
            for c in &configs {
                if current.as_ref().map(|(k, _)| *k) != Some(c.k) {
                    let (_, a) = kmeans::fit(&features, &c.kmeans_params())?;
                    current = Some((
                        c.k,
                        upsample_labels(&a, logits.height(), logits.width(), c.upsample)?,
                    ));
                }
                let up = &current.as_ref().unwrap().1;
                let ood = classify(
                    up,
                    &conf,
                    c.tau()?,
                    c.ratio_threshold()?,
                    &c.score_params()?,
                )?;
                per_config.push(EvalAccumulator::from_image(
                    ScoreView {
                        height: ood.height,
                        width: ood.width,
                        values: &ood.score_map,
                    },
                    &gt,
                )?);
            }
            Ok(per_config)
        },
        |per_config| {
            for (acc, img) in accs.iter_mut().zip(per_config) {
                merge_into(acc, img);
            }
        },
    )?;

    let dataset = dataset_name(dir);
    let mut rows = configs
        .into_iter()
        .zip(accs)
        .map(|(config, acc)| {
            Ok(SweepRow {
                config,
                report: finish(dataset.clone(), acc, n, skipped.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.report.report.ap.total_cmp(&a.report.report.ap));
    write_text(
        &out_dir.join(SWEEP_FILE),
        &metrics_csv(rows.iter().map(|r| (&r.report, Some(&r.config)))),
    )?;
    Ok(rows)
}

/// Outcome of [`run_files`].
#[derive(Debug, Clone)]
pub struct FileRun {
    pub name: String,
    pub result: SampleResult,
    pub report: Option<EvalReport>,
}

/// Sample name from a features path: the file name without
/// `.features.npy` (or `.npy`).
pub fn sample_name(features: &Path) -> String {
    let file = features
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".to_owned());
    file.strip_suffix(FEATURES_SUFFIX)
        .or_else(|| file.strip_suffix(".npy"))
        .unwrap_or(&file)
        .to_owned()
}

/// Cluster table: one row per cluster.
pub fn cluster_csv(ood: &OodResult) -> String {
    let mut out = String::from("cluster,pixel_count,below_count,ratio,is_ood\n");
    for (k, s) in ood.stats.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{}",
            s.pixel_count, s.below_count, s.ratio, s.is_ood
        );
    }
    out
}

/// Single-sample run from explicit paths. Writes score, mask and cluster
/// table, plus `metrics.csv` when ground truth is given.
pub fn run_files(
    features: &Path,
    logits: &Path,
    gt: Option<&Path>,
    out_dir: &Path,
    config: &PipelineConfig,
) -> Result<FileRun> {
    let name = sample_name(features);
    let wrap = |e: Error| e.in_sample(&name);
    let f = load_features(features).map_err(wrap)?;
    let l = load_logits(logits).map_err(wrap)?;
    let gt = gt.map(load_mask).transpose().map_err(wrap)?;
    let result = run_sample(&f, &l, config).map_err(wrap)?;
    create_dir(out_dir)?;
    write_outputs(out_dir, &name, &result.ood)?;
    write_text(
        &out_dir.join(format!("{name}.clusters.csv")),
        &cluster_csv(&result.ood),
    )?;
    let report = match gt {
        Some(gt) => {
            let acc = EvalAccumulator::from_image(
                ScoreView {
                    height: result.ood.height,
                    width: result.ood.width,
                    values: &result.ood.score_map,
                },
                &gt,
            )
            .map_err(wrap)?;
            let report = DatasetReport {
                dataset: name.clone(),
                n_images: 1,
                report: acc.report().map_err(wrap)?,
                skipped: Vec::new(),
            };
            write_text(
                &out_dir.join(METRICS_FILE),
                &metrics_csv([(&report, Some(config))]),
            )?;
            Some(report.report)
        }
        None => None,
    };
    Ok(FileRun {
        name,
        result,
        report,
    })
}

/// Writes a synthetic sample in the dataset layout.
pub fn write_sample(
    dir: &Path,
    name: &str,
    features: &FeatureMap,
    logits: &LogitMap,
    gt: &GroundTruthMask,
) -> Result<()> {
    create_dir(dir)?;
    let files = SampleFiles::in_dir(dir, name);
    save_tensor(features.tensor(), &files.features)?;
    save_tensor(logits.tensor(), &files.logits)?;
    save_mask(gt, &files.gt)
}
