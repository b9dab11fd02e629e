//! Reference implementations written directly from the documented recipes,
//! sharing no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use std::cmp::Ordering;

/// SplitMix64 stream: increment state by the golden gamma, then mix.
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next() >> 11) as f64 / 9007199254740992.0
    }
}

fn dist2(p: &[f32], c: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..p.len() {
        let diff = p[d] as f64 - c[d];
        s += diff * diff;
    }
    s
}

fn lex(a: &[f32], b: &[f32]) -> Ordering {
    for d in 0..a.len() {
        match a[d].total_cmp(&b[d]) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub struct OracleFit {
    pub centroids: Vec<Vec<f64>>,
    /// Labels in the caller's point order.
    pub labels: Vec<usize>,
    pub inertia: f64,
}

/// Step-by-step k-means++ seeding and Lloyd iterations.
pub fn kmeans(points: &[Vec<f32>], k: usize, seed: u64, max_iter: usize, tol: f64) -> OracleFit {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex(&points[a], &points[b]).then(a.cmp(&b)));
    let pts: Vec<&[f32]> = order.iter().map(|&i| points[i].as_slice()).collect();
    let as_f64 = |p: &[f32]| p.iter().map(|&v| v as f64).collect::<Vec<f64>>();

    // seeding
    let mut rng = SplitMix::new(seed);
    let mut chosen: Vec<usize> = Vec::new();
    let first = ((rng.uniform() * n as f64) as usize).min(n - 1);
    chosen.push(first);
    while chosen.len() < k {
        let u = rng.uniform();
        let weights: Vec<f64> = pts
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| dist2(p, &as_f64(pts[c])))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total == 0.0 {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let target = u * total;
            let mut running = 0.0;
            let mut found = None;
            for i in 0..n {
                running += weights[i];
                if running > target && weights[i] > 0.0 {
                    found = Some(i);
                    break;
                }
            }
            found.unwrap_or_else(|| (0..n).rev().find(|&i| weights[i] > 0.0).unwrap())
        };
        chosen.push(next);
    }
    let mut cents: Vec<Vec<f64>> = chosen.iter().map(|&c| as_f64(pts[c])).collect();

    let nearest_all = |cents: &Vec<Vec<f64>>| -> (Vec<usize>, Vec<f64>) {
        let mut labels = vec![0; n];
        let mut ds = vec![0.0; n];
        for i in 0..n {
            let mut best = 0;
            let mut bd = dist2(pts[i], &cents[0]);
            for j in 1..k {
                let d = dist2(pts[i], &cents[j]);
                if d < bd {
                    bd = d;
                    best = j;
                }
            }
            labels[i] = best;
            ds[i] = bd;
        }
        (labels, ds)
    };
    let repaired = |cents: &mut Vec<Vec<f64>>| -> (Vec<usize>, Vec<f64>) {
        loop {
            let (labels, ds) = nearest_all(cents);
            let empty = (0..k).find(|j| !labels.contains(j));
            let Some(j) = empty else { return (labels, ds) };
            let mut far = 0;
            for i in 1..n {
                if ds[i] > ds[far] {
                    far = i;
                }
            }
            if ds[far] <= 0.0 {
                return (labels, ds);
            }
            cents[j] = as_f64(pts[far]);
        }
    };

    for _ in 0..max_iter {
        let (labels, _) = repaired(&mut cents);
        let mut shift2 = 0.0;
        for j in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            let dim = cents[j].len();
            let mut sum = vec![0.0f64; dim];
            for &i in &members {
                for d in 0..dim {
                    sum[d] += pts[i][d] as f64;
                }
            }
            for d in 0..dim {
                let m = sum[d] / members.len() as f64;
                shift2 += (m - cents[j][d]) * (m - cents[j][d]);
                cents[j][d] = m;
            }
        }
        let shift = shift2.sqrt();
        if shift < tol || shift == 0.0 {
            break;
        }
    }
    let (labels_canon, ds) = repaired(&mut cents);
    let mut labels = vec![0; n];
    for (c, &orig) in order.iter().enumerate() {
        labels[orig] = labels_canon[c];
    }
    OracleFit {
        centroids: cents,
        labels,
        inertia: ds.iter().sum(),
    }
}

/// Exhaustive nearest-centroid scan, lowest index on ties.
pub fn nearest_scan(points: &[Vec<f32>], centroids: &[Vec<f64>]) -> Vec<u32> {
    points
        .iter()
        .map(|p| {
            let ds: Vec<f64> = centroids.iter().map(|c| dist2(p, c)).collect();
            let min = ds.iter().cloned().fold(f64::INFINITY, f64::min);
            ds.iter().position(|&d| d == min).unwrap() as u32
        })
        .collect()
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// Precision and recall recomputed from scratch at every distinct threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(scores) {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for i in 0..scores.len() {
            if scores[i] >= t {
                if labels[i] {
                    tp += 1.0
                } else {
                    fp += 1.0
                }
            }
        }
        let r = tp / p;
        ap += (r - prev) * tp / (tp + fp);
        prev = r;
    }
    ap
}

/// FPR at the highest threshold whose TPR reaches `target`.
pub fn fpr_at_tpr(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    for t in distinct_desc(scores) {
        let tp = (0..scores.len())
            .filter(|&i| labels[i] && scores[i] >= t)
            .count();
        let fp = (0..scores.len())
            .filter(|&i| !labels[i] && scores[i] >= t)
            .count();
        if tp as f64 / p as f64 >= target {
            return fp as f64 / n as f64;
        }
    }
    unreachable!()
}

/// Intersection over union of two binary masks.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
