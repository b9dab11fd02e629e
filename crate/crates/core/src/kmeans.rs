//! Lloyd's algorithm with k-means++ seeding over the per-pixel feature
//! vectors of a [`FeatureMap`].
//!
//! Fitting recipe, which the tests re-derive independently:
//!
//! 1. Points are visited in canonical order: sorted lexicographically by
//!    value (`f32::total_cmp` per coordinate), ties by pixel index. The
//!    partition therefore does not depend on pixel order.
//! 2. Seeding draws one uniform `u` per center from [`CounterRng`]. The
//!    first center is canonical point `floor(u * N)`. Each further center is
//!    the first canonical point whose running sum of `D(x)^2` exceeds
//!    `u * sum(D(x)^2)`, with `D(x)` the distance to the nearest chosen
//!    center. If every `D(x)` is zero the lowest unused canonical point is
//!    taken and the model is flagged degenerate.
//! 3. Each iteration assigns points to the nearest centroid (lowest index on
//!    ties), repairs empty clusters, records the inertia, then moves every
//!    centroid to the mean of its points. It stops once the Frobenius norm
//!    of the centroid shift drops below `tol`, or after `max_iter` updates.
//! 4. An empty cluster takes the point farthest from its current centroid
//!    (lowest canonical index on ties), then all points are reassigned.
//!
//! All distances and means accumulate in `f64`.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::tensor_io::FeatureMap;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    k: usize,
    dim: usize,
    centroids: Vec<f64>,
    inertia: f64,
    iterations_run: usize,
    converged: bool,
    degenerate: bool,
    inertia_history: Vec<f64>,
}

impl ClusterModel {
    /// Model from explicit centroids (row-major `[k, dim]`).
    pub fn from_centroids(k: usize, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 || centroids.len() != k * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} centroid values for k = {k}, dim = {dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidTensor("non-finite centroid".into()));
        }
        Ok(Self {
            k,
            dim,
            centroids,
            inertia: 0.0,
            iterations_run: 0,
            converged: false,
            degenerate: false,
            inertia_history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// Sum of squared distances of every point to its assigned centroid.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Number of centroid updates performed.
    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Set when the input has fewer distinct points than `k`; some clusters
    /// may then be empty.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    /// Inertia after each assignment step; the last entry equals
    /// [`inertia`](Self::inertia).
    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }
}

/// Low-resolution per-pixel cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    height: usize,
    width: usize,
    k: usize,
    labels: Vec<u32>,
}

impl ClusterAssignment {
    pub fn new(height: usize, width: usize, k: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} assignment",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} is not below k = {k}"
            )));
        }
        Ok(Self {
            height,
            width,
            k,
            labels,
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

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }
}

#[inline]
fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = a as f64 - b;
            d * d
        })
        .sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
#[inline]
fn nearest(x: &[f32], centroids: &[f64], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j as u32, d);
        }
    }
    best
}

/// Fills `labels`/`dists` for every point in `points` (flat, `dim` wide).
fn assign_all(
    points: &[f32],
    dim: usize,
    centroids: &[f64],
    labels: &mut [u32],
    dists: &mut [f64],
) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const PAR_MIN: usize = 4096;
        if labels.len() >= PAR_MIN {
            points
                .par_chunks_exact(dim)
                .zip(labels.par_iter_mut())
                .zip(dists.par_iter_mut())
                .for_each(|((x, l), d)| (*l, *d) = nearest(x, centroids, dim));
            return;
        }
    }
    for ((x, l), d) in points
        .chunks_exact(dim)
        .zip(labels.iter_mut())
        .zip(dists.iter_mut())
    {
        (*l, *d) = nearest(x, centroids, dim);
    }
}

/// Canonical visiting order: lexicographic by value, then by index.
fn canonical_order(features: &FeatureMap) -> Vec<usize> {
    let t = features.tensor();
    let dim = features.dim();
    let data = t.data();
    let mut order: Vec<usize> = (0..features.num_pixels()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&data[a * dim..(a + 1) * dim], &data[b * dim..(b + 1) * dim]);
        pa.iter()
            .zip(pb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

struct Lloyd<'a> {
    points: &'a [f32],
    dim: usize,
    k: usize,
    centroids: Vec<f64>,
    labels: Vec<u32>,
    dists: Vec<f64>,
    degenerate: bool,
}

impl Lloyd<'_> {
    fn n(&self) -> usize {
        self.labels.len()
    }

    fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn seed_plus_plus(&mut self, rng: &mut CounterRng) {
        let n = self.n();
        let mut chosen = Vec::with_capacity(self.k);
        let first = rng.next_index(n);
        chosen.push(first);
        let mut d2: Vec<f64> = (0..n)
            .map(|i| {
                let c: Vec<f64> = self.point(first).iter().map(|&v| v as f64).collect();
                sq_dist(self.point(i), &c)
            })
            .collect();
        while chosen.len() < self.k {
            let u = rng.next_f64();
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let target = u * total;
                let mut cum = 0.0;
                let mut pick = None;
                for (i, &d) in d2.iter().enumerate() {
                    cum += d;
                    if cum > target && d > 0.0 {
                        pick = Some(i);
                        break;
                    }
                }
                // rounding can leave the running sum short of the target
                pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
            } else {
                self.degenerate = true;
                (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
            };
            chosen.push(pick);
            let c: Vec<f64> = self.point(pick).iter().map(|&v| v as f64).collect();
            for (i, d) in d2.iter_mut().enumerate() {
                *d = d.min(sq_dist(&self.points[i * self.dim..(i + 1) * self.dim], &c));
            }
        }
        self.centroids = chosen
            .iter()
            .flat_map(|&i| self.point(i).iter().map(|&v| v as f64))
            .collect();
    }

    fn assign(&mut self) {
        assign_all(
            self.points,
            self.dim,
            &self.centroids,
            &mut self.labels,
            &mut self.dists,
        );
    }

    fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Assigns, then re-seeds empty clusters from the farthest point until
    /// none remain or the input runs out of distinct points.
    fn assign_and_repair(&mut self) {
        self.assign();
        while let Some(empty) = self.counts().iter().position(|&c| c == 0) {
            let (far, far_d) =
                self.dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                        if d > best.1 {
                            (i, d)
                        } else {
                            best
                        }
                    });
            if far_d <= 0.0 {
                self.degenerate = true;
                return;
            }
            let p: Vec<f64> = self.point(far).iter().map(|&v| v as f64).collect();
            self.centroids[empty * self.dim..(empty + 1) * self.dim].copy_from_slice(&p);
            self.assign();
        }
    }

    fn inertia(&self) -> f64 {
        self.dists.iter().sum()
    }

    /// Moves centroids to their cluster means; returns the Frobenius norm of
    /// the shift.
    fn update(&mut self) -> f64 {
        let dim = self.dim;
        let mut sums = vec![0.0f64; self.k * dim];
        let mut counts = vec![0usize; self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            let l = l as usize;
            counts[l] += 1;
            for (s, &v) in sums[l * dim..(l + 1) * dim]
                .iter_mut()
                .zip(&self.points[i * dim..(i + 1) * dim])
            {
                *s += v as f64;
            }
        }
        let mut shift = 0.0;
        for j in 0..self.k {
            if counts[j] == 0 {
                continue;
            }
            for d in 0..dim {
                let mean = sums[j * dim + d] / counts[j] as f64;
                let delta = mean - self.centroids[j * dim + d];
                shift += delta * delta;
                self.centroids[j * dim + d] = mean;
            }
        }
        shift.sqrt()
    }
}

/// Clusters the pixels of `features` into `params.k` groups.
pub fn fit(
    features: &FeatureMap,
    params: &KMeansParams,
) -> Result<(ClusterModel, ClusterAssignment)> {
    let n = features.num_pixels();
    let dim = features.dim();
    if params.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if params.k > n {
        return Err(Error::TooFewPoints {
            k: params.k,
            points: n,
        });
    }
    if params.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tol must be >= 0, got {}",
            params.tol
        )));
    }

    let order = canonical_order(features);
    let data = features.tensor().data();
    let points: Vec<f32> = order
        .iter()
        .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
        .collect();

    let mut state = Lloyd {
        points: &points,
        dim,
        k: params.k,
        centroids: Vec::new(),
        labels: vec![0; n],
        dists: vec![0.0; n],
        degenerate: false,
    };
    let mut rng = CounterRng::new(params.seed);
    state.seed_plus_plus(&mut rng);

    let mut history = Vec::new();
    let mut iterations_run = 0;
    let mut converged = false;
    while iterations_run < params.max_iter {
        state.assign_and_repair();
        history.push(state.inertia());
        let shift = state.update();
        iterations_run += 1;
        // a zero shift is a fixed point: further updates change nothing
        if shift < params.tol || shift == 0.0 {
            converged = true;
            break;
        }
    }
    state.assign_and_repair();
    let inertia = state.inertia();
    history.push(inertia);
    debug_assert!(
        history
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(f64::MIN_POSITIVE)),
        "inertia increased: {history:?}"
    );

    let mut labels = vec![0u32; n];
    for (canon, &pixel) in order.iter().enumerate() {
        labels[pixel] = state.labels[canon];
    }
    let model = ClusterModel {
        k: params.k,
        dim,
        centroids: state.centroids,
        inertia,
        iterations_run,
        converged,
        degenerate: state.degenerate,
        inertia_history: history,
    };
    let assignment = ClusterAssignment::new(features.height(), features.width(), params.k, labels)?;
    Ok((model, assignment))
}

/// Maps every pixel to its nearest centroid, ties to the lowest index.
pub fn assign(model: &ClusterModel, features: &FeatureMap) -> Result<ClusterAssignment> {
    if model.dim != features.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model has dim {}, features have dim {}",
            model.dim,
            features.dim()
        )));
    }
    let n = features.num_pixels();
    let mut labels = vec![0u32; n];
    let mut dists = vec![0.0; n];
    assign_all(
        features.tensor().data(),
        model.dim,
        &model.centroids,
        &mut labels,
        &mut dists,
    );
    ClusterAssignment::new(features.height(), features.width(), model.k, labels)
}

/// Sum of squared distances of every pixel to the centroid it is labelled with.
pub fn inertia_of(
    model: &ClusterModel,
    features: &FeatureMap,
    assignment: &ClusterAssignment,
) -> f64 {
    features
        .tensor()
        .pixels()
        .zip(assignment.labels())
        .map(|(x, &l)| sq_dist(x, model.centroid(l as usize)))
        .sum()
}
