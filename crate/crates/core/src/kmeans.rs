//! k-means with cosine distance.
//!
//! Points are compared by direction only: every point is scaled to unit
//! length and centroids are renormalized means, so the objective
//! `Σ (1 − cos θ)` descends monotonically (spherical k-means).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sparsemat::TermDocMatrix;

/// A collection of nonnegative points that k-means can cluster.
pub trait PointSet: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn norm(&self, i: usize) -> f64;
    fn dot_dense(&self, i: usize, dense: &[f64]) -> f64;
    /// `acc += scale * point(i)`
    fn accumulate(&self, i: usize, scale: f64, acc: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PointSet for TermDocMatrix {
    fn len(&self) -> usize {
        self.cols()
    }

    fn dim(&self) -> usize {
        self.rows()
    }

    fn norm(&self, i: usize) -> f64 {
        self.column(i).norm()
    }

    fn dot_dense(&self, i: usize, dense: &[f64]) -> f64 {
        self.column(i).dot_dense(dense)
    }

    fn accumulate(&self, i: usize, scale: f64, acc: &mut [f64]) {
        for (t, v) in self.column(i).iter() {
            acc[t] += scale * v;
        }
    }
}

/// Dense points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseRows {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseRows {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n} points of dimension {dim}",
                data.len()
            )));
        }
        Ok(DenseRows { n, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl PointSet for DenseRows {
    fn len(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn dot_dense(&self, i: usize, dense: &[f64]) -> f64 {
        self.row(i).iter().zip(dense).map(|(a, b)| a * b).sum()
    }

    fn accumulate(&self, i: usize, scale: f64, acc: &mut [f64]) {
        for (a, v) in acc.iter_mut().zip(self.row(i)) {
            *a += scale * v;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// k distinct data points.
    #[default]
    Forgy,
    /// Uniform random directions in the nonnegative orthant.
    Space,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 100,
            tol: 1e-6,
            init: Init::Forgy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Sum of point-to-centroid cosine distances after the last assignment.
    pub objective: f64,
    /// Objective after each assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Clusters left without members.
    pub empty_clusters: Vec<usize>,
    /// Label reserved for points that could not be clustered (all-zero
    /// rows), if any.
    pub residual_label: Option<usize>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Point indices per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn nearest(point_dot: impl Fn(usize) -> f64, k: usize, inv_norm: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..k {
        let d = (1.0 - point_dot(c) * inv_norm).clamp(0.0, 1.0);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// Clusters the points into `k` groups. Deterministic for a fixed seed.
pub fn kmeans<P: PointSet + ?Sized>(
    data: &P,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterAssignment> {
    let n = data.len();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    if config.max_iter < 1 {
        return Err(Error::InvalidParameter(
            "kmeans max_iter must be at least 1".into(),
        ));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter(
            "kmeans tol must be nonnegative".into(),
        ));
    }
    let inv_norm: Vec<f64> = (0..n)
        .map(|i| {
            let nm = data.norm(i);
            if nm > 0.0 {
                Ok(1.0 / nm)
            } else {
                Err(Error::ZeroVector { index: i })
            }
        })
        .collect::<Result<_>>()?;

    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = match config.init {
        Init::Forgy => sample(&mut rng, n, k)
            .into_iter()
            .map(|i| unit_point(data, i, inv_norm[i]))
            .collect(),
        Init::Space => (0..k)
            .map(|_| {
                let mut c: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                if !normalize(&mut c) {
                    c[0] = 1.0;
                }
                c
            })
            .collect(),
    };

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(|c| data.dot_dense(i, &centroids[c]), k, inv_norm[i]))
            .collect();
        let mut new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let mut dist: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        repair_empty(data, &inv_norm, &mut new_labels, &mut dist, &mut centroids);
        history.push(dist.iter().sum());
        let changed = new_labels != labels;
        labels = new_labels;
        if !changed {
            break;
        }

        let mut movement: f64 = 0.0;
        let mut sums = vec![vec![0.0; dim]; k];
        for (i, &l) in labels.iter().enumerate() {
            data.accumulate(i, inv_norm[i], &mut sums[l]);
        }
        for (c, mut s) in sums.into_iter().enumerate() {
            if normalize(&mut s) {
                let d2: f64 = s
                    .iter()
                    .zip(&centroids[c])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                movement = movement.max(d2.sqrt());
                centroids[c] = s;
            }
        }
        if movement < config.tol {
            break;
        }
    }

    let sizes = {
        let mut s = vec![0usize; k];
        labels.iter().for_each(|&l| s[l] += 1);
        s
    };
    Ok(ClusterAssignment {
        k,
        objective: *history.last().expect("at least one iteration"),
        history,
        iterations,
        empty_clusters: (0..k).filter(|&c| sizes[c] == 0).collect(),
        residual_label: None,
        labels,
    })
}

fn unit_point<P: PointSet + ?Sized>(data: &P, i: usize, inv_norm: f64) -> Vec<f64> {
    let mut c = vec![0.0; data.dim()];
    data.accumulate(i, inv_norm, &mut c);
    c
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// only from clusters that keep at least one other member.
fn repair_empty<P: PointSet + ?Sized>(
    data: &P,
    inv_norm: &[f64],
    labels: &mut [usize],
    dist: &mut [f64],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..labels.len()).filter(|&i| sizes[labels[i]] >= 2).fold(
            None,
            |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            },
        );
        let Some(p) = donor else { break };
        sizes[labels[p]] -= 1;
        sizes[c] = 1;
        labels[p] = c;
        dist[p] = 0.0;
        centroids[c] = unit_point(data, p, inv_norm[p]);
    }
}

/// One k-means run per `k` in `k_range` (times `repeats`), each seeded from
/// `(seed, k, repeat)`. Output is ordered by k, then repeat.
pub fn kmeans_sweep<P: PointSet + ?Sized>(
    data: &P,
    k_range: std::ops::RangeInclusive<usize>,
    repeats: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<Vec<ClusterAssignment>> {
    if k_range.is_empty() {
        return Err(Error::InvalidParameter("k range is empty".into()));
    }
    if repeats < 1 {
        return Err(Error::InvalidParameter(
            "repeats_per_k must be at least 1".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = k_range
        .flat_map(|k| (0..repeats).map(move |r| (k, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(k, r)| kmeans(data, k, seed::derive(seed, &[k as u64, r as u64]), config))
        .collect()
}
