//! DBSCAN over precomputed neighborhoods, with the dense/border/noise
//! classification and majority voting across radii.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::ConsensusMatrix;
use crate::error::{Error, Result};
use crate::sparsemat::DistanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius.
    pub eps: f64,
    /// Minimum neighborhood size (the point itself included) for a point to
    /// be dense.
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        if min_pts < 1 {
            return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PointClass {
    Dense,
    Border,
    Noise,
}

/// A symmetric neighbor relation over `len()` points. Every point is its
/// own neighbor.
pub trait Neighborhood: Sync {
    fn len(&self) -> usize;
    fn is_neighbor(&self, i: usize, j: usize) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Points within `eps` of each other.
pub struct WithinRadius<'a> {
    pub distances: &'a DistanceMatrix,
    pub eps: f64,
}

impl Neighborhood for WithinRadius<'_> {
    fn len(&self) -> usize {
        self.distances.len()
    }

    fn is_neighbor(&self, i: usize, j: usize) -> bool {
        i == j || self.distances.get(i, j) <= self.eps
    }
}

/// Points co-clustered at least `min_count` times (higher count = closer).
pub struct CoClusteredAtLeast<'a> {
    pub consensus: &'a ConsensusMatrix,
    pub min_count: u32,
}

impl Neighborhood for CoClusteredAtLeast<'_> {
    fn len(&self) -> usize {
        self.consensus.len()
    }

    fn is_neighbor(&self, i: usize, j: usize) -> bool {
        i == j || self.consensus.get(i, j) >= self.min_count
    }
}

pub fn classify<N: Neighborhood + ?Sized>(hood: &N, min_pts: usize) -> Vec<PointClass> {
    let n = hood.len();
    let dense: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| hood.is_neighbor(i, j)).count() >= min_pts)
        .collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            if dense[i] {
                PointClass::Dense
            } else if (0..n).any(|j| dense[j] && hood.is_neighbor(i, j)) {
                PointClass::Border
            } else {
                PointClass::Noise
            }
        })
        .collect()
}

/// Density-reachability clustering. Clusters are seeded from dense points
/// in index order; a border point joins the first cluster that reaches it.
/// Noise points are `None`.
pub fn cluster<N: Neighborhood + ?Sized>(hood: &N, min_pts: usize) -> Vec<Option<usize>> {
    let classes = classify(hood, min_pts);
    let n = hood.len();
    let mut labels = vec![None; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if classes[seed] != PointClass::Dense || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(next);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for q in 0..n {
                if labels[q].is_none() && hood.is_neighbor(p, q) {
                    labels[q] = Some(next);
                    if classes[q] == PointClass::Dense {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

pub fn dbscan_classify(distances: &DistanceMatrix, params: DbscanParams) -> Vec<PointClass> {
    classify(
        &WithinRadius {
            distances,
            eps: params.eps,
        },
        params.min_pts,
    )
}

pub fn dbscan_cluster(distances: &DistanceMatrix, params: DbscanParams) -> Vec<Option<usize>> {
    cluster(
        &WithinRadius {
            distances,
            eps: params.eps,
        },
        params.min_pts,
    )
}

/// Per-point classes for each run, stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTable {
    n: usize,
    runs: usize,
    classes: Vec<PointClass>,
}

impl ClassTable {
    pub fn from_columns(columns: Vec<Vec<PointClass>>) -> Result<Self> {
        let runs = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(ClassTable {
            n,
            runs,
            classes: columns.concat(),
        })
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn get(&self, point: usize, run: usize) -> PointClass {
        self.classes[run * self.n + point]
    }

    pub fn run(&self, run: usize) -> &[PointClass] {
        &self.classes[run * self.n..(run + 1) * self.n]
    }
}

/// Classifies every point once per radius, with `min_pts` held fixed.
pub fn classify_over_eps(
    distances: &DistanceMatrix,
    eps_list: &[f64],
    min_pts: usize,
) -> Result<ClassTable> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("eps list is empty".into()));
    }
    let params: Vec<DbscanParams> = eps_list
        .iter()
        .map(|&e| DbscanParams::new(e, min_pts))
        .collect::<Result<_>>()?;
    ClassTable::from_columns(
        params
            .iter()
            .map(|&p| dbscan_classify(distances, p))
            .collect(),
    )
}

/// A point is noise when it is border or noise in strictly more than half
/// of the runs.
pub fn vote_noise(table: &ClassTable) -> Vec<bool> {
    (0..table.points())
        .map(|i| {
            let weak = (0..table.runs())
                .filter(|&r| table.get(i, r) != PointClass::Dense)
                .count();
            2 * weak > table.runs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PointClass::*;

    fn line(points: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_fn(points.len(), |i, j| (points[i] - points[j]).abs())
    }

    #[test]
    fn isolated_point_is_noise() {
        let d = DistanceMatrix::from_fn(3, |_, _| 1.0);
        let p = DbscanParams::new(0.5, 2).unwrap();
        assert_eq!(dbscan_classify(&d, p), [Noise, Noise, Noise]);
        assert!(dbscan_cluster(&d, p).iter().all(Option::is_none));
    }

    #[test]
    fn mutually_close_points_are_dense() {
        let d = DistanceMatrix::from_fn(4, |_, _| 0.1);
        let p = DbscanParams::new(0.2, 4).unwrap();
        assert!(dbscan_classify(&d, p).iter().all(|&c| c == Dense));
    }

    #[test]
    fn min_pts_one_makes_every_point_dense() {
        let d = DistanceMatrix::from_fn(3, |_, _| 1.0);
        let p = DbscanParams::new(0.5, 1).unwrap();
        assert!(dbscan_classify(&d, p).iter().all(|&c| c == Dense));
        assert_eq!(dbscan_cluster(&d, p), [Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn border_point() {
        // 0,1,2 packed; 3 reaches only 2
        let d = line(&[0.0, 0.1, 0.2, 0.45]);
        let p = DbscanParams::new(0.25, 3).unwrap();
        assert_eq!(dbscan_classify(&d, p), [Dense, Dense, Dense, Border]);
        assert_eq!(dbscan_cluster(&d, p), [Some(0); 4]);
    }

    #[test]
    fn separated_groups_form_two_clusters() {
        let d = line(&[0.0, 0.05, 0.1, 0.8, 0.85, 0.9]);
        let p = DbscanParams::new(0.1, 2).unwrap();
        let labels = dbscan_cluster(&d, p);
        assert_eq!(
            labels,
            [Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]
        );
    }

    #[test]
    fn chain_is_one_cluster() {
        let pts: Vec<f64> = (0..10).map(|i| i as f64 * 0.09).collect();
        let d = DistanceMatrix::from_fn(10, |i, j| (pts[i] - pts[j]).abs().min(1.0));
        let labels = dbscan_cluster(&d, DbscanParams::new(0.1, 2).unwrap());
        assert!(labels.iter().all(|&l| l == Some(0)));
    }

    #[test]
    fn params_are_validated() {
        assert!(DbscanParams::new(0.0, 1).is_err());
        assert!(DbscanParams::new(f64::NAN, 1).is_err());
        assert!(DbscanParams::new(0.1, 0).is_err());
        let d = line(&[0.0, 1.0]);
        assert!(classify_over_eps(&d, &[], 1).is_err());
    }

    #[test]
    fn single_eps_table_equals_single_call() {
        let d = line(&[0.0, 0.1, 0.15, 0.7]);
        let t = classify_over_eps(&d, &[0.12], 2).unwrap();
        assert_eq!(
            t.run(0),
            dbscan_classify(&d, DbscanParams::new(0.12, 2).unwrap()).as_slice()
        );
        let t = classify_over_eps(&d, &[2.0], 3).unwrap();
        assert!(t.run(0).iter().all(|&c| c == Dense));
    }

    #[test]
    fn voting_is_strict_majority() {
        let t = ClassTable::from_columns(vec![
            vec![Dense, Border, Border],
            vec![Dense, Border, Noise],
            vec![Dense, Border, Dense],
            vec![Dense, Dense, Dense],
            vec![Dense, Dense, Dense],
        ])
        .unwrap();
        // point 1: border in 3 of 5; point 2: weak in 2 of 5
        assert_eq!(vote_noise(&t), [false, true, false]);
        let t = ClassTable::from_columns(vec![vec![Border], vec![Noise], vec![Dense], vec![Dense]])
            .unwrap();
        assert_eq!(vote_noise(&t), [false]);
    }

    proptest! {
        #[test]
        fn dense_set_grows_with_eps(
            pts in proptest::collection::vec(0.0f64..1.0, 2..25),
            c in 1usize..6,
            e1 in 0.01f64..0.5,
            de in 0.0f64..0.5,
        ) {
            let d = line(&pts);
            let small = dbscan_classify(&d, DbscanParams::new(e1, c).unwrap());
            let large = dbscan_classify(&d, DbscanParams::new(e1 + de, c).unwrap());
            for (s, l) in small.iter().zip(&large) {
                if *s == Dense {
                    prop_assert_eq!(*l, Dense);
                }
            }
        }

        #[test]
        fn clusters_partition_non_noise_points(
            pts in proptest::collection::vec(0.0f64..1.0, 1..25),
            c in 1usize..5,
            eps in 0.01f64..0.3,
        ) {
            let d = line(&pts);
            let p = DbscanParams::new(eps, c).unwrap();
            let classes = dbscan_classify(&d, p);
            let labels = dbscan_cluster(&d, p);
            let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
            for (cl, lb) in classes.iter().zip(&labels) {
                prop_assert_eq!(*cl == Noise, lb.is_none());
            }
            for cid in 0..k {
                prop_assert!((0..pts.len()).any(|i| labels[i] == Some(cid) && classes[i] == Dense));
            }
        }
    }
}
