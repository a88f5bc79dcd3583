//! Co-clustering consensus matrix and the ensemble noise filters built on
//! it.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbscan::{classify, classify_over_eps, vote_noise, ClassTable, CoClusteredAtLeast};
use crate::error::{Error, Result};
use crate::kmeans::ClusterAssignment;
use crate::sparsemat::DistanceMatrix;

/// Symmetric n×n count of how many clusterings put each pair together.
/// The diagonal always equals `runs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusMatrix {
    n: usize,
    runs: u32,
    counts: Vec<u32>,
}

impl ConsensusMatrix {
    /// Builds a matrix from raw off-diagonal counts given as a full n×n
    /// row-major array; the diagonal is overwritten with `runs`.
    pub fn from_counts(n: usize, runs: u32, mut counts: Vec<u32>) -> Result<Self> {
        if counts.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: counts.len(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (counts[i * n + j], counts[j * n + i]);
                if a != b {
                    return Err(Error::InvalidMatrix(format!(
                        "counts({i},{j}) = {a} but counts({j},{i}) = {b}"
                    )));
                }
                if a > runs {
                    return Err(Error::InvalidMatrix(format!(
                        "counts({i},{j}) = {a} exceeds runs = {runs}"
                    )));
                }
            }
            counts[i * n + i] = runs;
        }
        Ok(ConsensusMatrix { n, runs, counts })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn runs(&self) -> u32 {
        self.runs
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.n..(i + 1) * self.n]
    }

    /// Restricts the matrix to the listed points, in the given order.
    pub fn select(&self, keep: &[usize]) -> Self {
        let m = keep.len();
        let mut counts = Vec::with_capacity(m * m);
        for &i in keep {
            counts.extend(keep.iter().map(|&j| self.get(i, j)));
        }
        ConsensusMatrix {
            n: m,
            runs: self.runs,
            counts,
        }
    }

    /// Copy with every off-diagonal count `≤ max_count` set to zero.
    pub fn drop_at_most(&self, max_count: u32) -> Self {
        let n = self.n;
        let counts = self
            .counts
            .iter()
            .enumerate()
            .map(|(x, &v)| {
                if x / n != x % n && v <= max_count {
                    0
                } else {
                    v
                }
            })
            .collect();
        ConsensusMatrix {
            n,
            runs: self.runs,
            counts,
        }
    }

    /// Number of unordered pairs `i < j` with `count > threshold`.
    pub fn pairs_above(&self, threshold: u32) -> usize {
        (0..self.n)
            .map(|i| {
                self.row(i)[i + 1..]
                    .iter()
                    .filter(|&&c| c > threshold)
                    .count()
            })
            .sum()
    }

    /// Writes `i<TAB>j<TAB>count` for every pair `i < j` with `count > threshold`.
    pub fn write_tsv<W: Write>(&self, mut out: W, threshold: u32) -> std::io::Result<()> {
        writeln!(out, "i\tj\tcount")?;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let c = self.get(i, j);
                if c > threshold {
                    writeln!(out, "{i}\t{j}\t{c}")?;
                }
            }
        }
        Ok(())
    }
}

/// Counts, for each pair of points, the labelings that put them together.
pub fn build_consensus_from_labels<L: AsRef<[usize]> + Sync>(
    labelings: &[L],
) -> Result<ConsensusMatrix> {
    let first = labelings
        .first()
        .ok_or_else(|| Error::InvalidParameter("no clusterings to combine".into()))?;
    let n = first.as_ref().len();
    if let Some(bad) = labelings.iter().find(|l| l.as_ref().len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            found: bad.as_ref().len(),
        });
    }
    // members[r][c] = points in cluster c of run r
    let members: Vec<Vec<Vec<usize>>> = labelings
        .iter()
        .map(|l| {
            let l = l.as_ref();
            let k = l.iter().max().map_or(0, |m| m + 1);
            let mut groups = vec![Vec::new(); k];
            for (i, &c) in l.iter().enumerate() {
                groups[c].push(i);
            }
            groups
        })
        .collect();
    let runs = labelings.len() as u32;
    let mut counts = vec![0u32; n * n];
    counts
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for (r, l) in labelings.iter().enumerate() {
                for &j in &members[r][l.as_ref()[i]] {
                    row[j] += 1;
                }
            }
        });
    Ok(ConsensusMatrix { n, runs, counts })
}

pub fn build_consensus(assignments: &[ClusterAssignment]) -> Result<ConsensusMatrix> {
    let labels: Vec<&[usize]> = assignments.iter().map(|a| a.labels.as_slice()).collect();
    build_consensus_from_labels(&labels)
}

/// What the row sums of the thresholded matrix are compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSumThreshold {
    /// Mean of all row sums.
    #[default]
    RowMean,
    /// Mean of all off-diagonal entries.
    EntryMean,
}

/// Thresholded row sums: off-diagonal counts at or below
/// `drop_tol · runs` are zeroed, the diagonal is excluded.
pub fn thresholded_row_sums(c: &ConsensusMatrix, drop_tol: f64) -> Vec<u64> {
    let cutoff = drop_tol * c.runs() as f64;
    (0..c.len())
        .into_par_iter()
        .map(|i| {
            c.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &v)| j != i && v as f64 > cutoff)
                .map(|(_, &v)| v as u64)
                .sum()
        })
        .collect()
}

/// Consensus-only filter: drop weak co-clusterings, then flag points whose
/// row sum falls below the average.
pub fn noise_alg1_consensus(
    c: &ConsensusMatrix,
    drop_tol: f64,
    threshold: RowSumThreshold,
) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&drop_tol) {
        return Err(Error::InvalidParameter(format!(
            "drop_tol must be in [0, 1), got {drop_tol}"
        )));
    }
    let sums = thresholded_row_sums(c, drop_tol);
    let n = sums.len() as u128;
    let total: u128 = sums.iter().map(|&s| s as u128).sum();
    // compare as integers: s < total / divisor  <=>  s * divisor < total
    let divisor = match threshold {
        RowSumThreshold::RowMean => n,
        RowSumThreshold::EntryMean => n * n.saturating_sub(1),
    };
    Ok(sums
        .iter()
        .map(|&s| (s as u128) * divisor < total)
        .collect())
}

/// DBSCAN over cosine distances at several radii, then majority vote.
pub fn noise_alg2_dbscan_distance(
    d: &DistanceMatrix,
    eps_list: &[f64],
    min_pts: usize,
) -> Result<Vec<bool>> {
    Ok(vote_noise(&classify_over_eps(d, eps_list, min_pts)?))
}

/// Classification table for DBSCAN on the consensus matrix, one run per
/// co-clustering count threshold.
pub fn classify_over_counts(
    c: &ConsensusMatrix,
    eps_counts: &[u32],
    min_pts: usize,
) -> Result<ClassTable> {
    if eps_counts.is_empty() {
        return Err(Error::InvalidParameter("eps_counts is empty".into()));
    }
    if min_pts < 1 {
        return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
    }
    if let Some(&bad) = eps_counts.iter().find(|&&e| e < 1 || e > c.runs()) {
        return Err(Error::InvalidParameter(format!(
            "eps count {bad} outside [1, {}]",
            c.runs()
        )));
    }
    ClassTable::from_columns(
        eps_counts
            .iter()
            .map(|&e| {
                classify(
                    &CoClusteredAtLeast {
                        consensus: c,
                        min_count: e,
                    },
                    min_pts,
                )
            })
            .collect(),
    )
}

/// DBSCAN on the consensus matrix (similarity semantics), then majority
/// vote.
pub fn noise_alg3_dbscan_consensus(
    c: &ConsensusMatrix,
    eps_counts: &[u32],
    min_pts: usize,
) -> Result<Vec<bool>> {
    Ok(vote_noise(&classify_over_counts(c, eps_counts, min_pts)?))
}

/// Every integer count from `⌈fraction · runs⌉` (at least 1) to `runs`.
pub fn default_eps_counts(runs: u32, fraction: f64) -> Vec<u32> {
    let lo = ((fraction * runs as f64).ceil() as u32).max(1);
    (lo..=runs).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NoiseVerdict {
    pub consensus: Vec<bool>,
    pub dbscan_distance: Vec<bool>,
    pub dbscan_consensus: Vec<bool>,
    pub combined: Vec<bool>,
}

impl NoiseVerdict {
    pub fn noise_count(&self) -> usize {
        self.combined.iter().filter(|&&f| f).count()
    }

    /// Indices of points that survive.
    pub fn kept(&self) -> Vec<usize> {
        (0..self.combined.len())
            .filter(|&i| !self.combined[i])
            .collect()
    }
}

/// A point is noise when at least two of the three filters flag it.
pub fn combine_noise(f1: &[bool], f2: &[bool], f3: &[bool]) -> Result<NoiseVerdict> {
    let n = f1.len();
    for f in [f2, f3] {
        if f.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: f.len(),
            });
        }
    }
    let combined = (0..n)
        .map(|i| (f1[i] as u8 + f2[i] as u8 + f3[i] as u8) >= 2)
        .collect();
    Ok(NoiseVerdict {
        consensus: f1.to_vec(),
        dbscan_distance: f2.to_vec(),
        dbscan_consensus: f3.to_vec(),
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Block-diagonal consensus: every pair inside a block co-clusters in
    /// all runs.
    fn blocks(sizes: &[usize], runs: u32) -> ConsensusMatrix {
        let n: usize = sizes.iter().sum();
        let mut block_of = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            block_of.extend(std::iter::repeat(b).take(s));
        }
        let counts = (0..n * n)
            .map(|x| {
                if block_of[x / n] == block_of[x % n] {
                    runs
                } else {
                    0
                }
            })
            .collect();
        ConsensusMatrix::from_counts(n, runs, counts).unwrap()
    }

    #[test]
    fn worked_three_clusterings_example() {
        // points 0..4 (1-based 1..5); 1 and 3 together in runs a and b only
        let runs = [
            vec![0, 1, 0, 1, 1],
            vec![0, 0, 0, 1, 1],
            vec![0, 1, 1, 2, 2],
        ];
        let c = build_consensus_from_labels(&runs).unwrap();
        assert_eq!(c.get(0, 2), 2);
        assert_eq!(c.get(2, 0), 2);
        assert_eq!(c.get(3, 4), 3);
        assert_eq!(c.get(1, 1), 3);
        assert_eq!(c.runs(), 3);
    }

    #[test]
    fn repeated_assignment_gives_zero_or_runs() {
        let l = vec![0, 1, 0, 2, 1];
        let c = build_consensus_from_labels(&vec![l; 4]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!(c.get(i, j) == 0 || c.get(i, j) == 4);
            }
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let r = build_consensus_from_labels(&[vec![0, 1], vec![0, 1, 1]]);
        assert!(matches!(
            r,
            Err(Error::LengthMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(build_consensus_from_labels::<Vec<usize>>(&[]).is_err());
    }

    #[test]
    fn alg1_equal_blocks_flag_nothing() {
        let c = blocks(&[6, 6], 11);
        assert!(noise_alg1_consensus(&c, 0.1, RowSumThreshold::RowMean)
            .unwrap()
            .iter()
            .all(|&f| !f));
    }

    #[test]
    fn alg1_flags_isolated_point() {
        let c = blocks(&[5, 5, 1], 11);
        let flags = noise_alg1_consensus(&c, 0.1, RowSumThreshold::RowMean).unwrap();
        assert!(flags[10]);
        assert!(flags[..10].iter().all(|&f| !f));
    }

    #[test]
    fn alg1_removes_the_smaller_block() {
        // block sizes 20 and 4, runs r: row sums 19r and 3r, mean (20*19r + 4*3r)/24
        let c = blocks(&[20, 4], 10);
        let sums = thresholded_row_sums(&c, 0.1);
        assert_eq!(sums[0], 190);
        assert_eq!(sums[23], 30);
        let mean = (20.0 * 190.0 + 4.0 * 30.0) / 24.0;
        assert!(30.0 < mean && 190.0 > mean);
        let flags = noise_alg1_consensus(&c, 0.1, RowSumThreshold::RowMean).unwrap();
        assert!(flags[..20].iter().all(|&f| !f));
        assert!(flags[20..].iter().all(|&f| f));
    }

    #[test]
    fn alg1_drop_tolerance_is_inclusive() {
        // count 1 of 10 runs is "not more than 10%" and is dropped
        let mut counts = vec![0u32; 9];
        counts[1] = 1;
        counts[3] = 1;
        counts[2] = 2;
        counts[6] = 2;
        let c = ConsensusMatrix::from_counts(3, 10, counts).unwrap();
        assert_eq!(thresholded_row_sums(&c, 0.1), [2, 0, 2]);
    }

    #[test]
    fn alg1_entry_mean_mode() {
        let c = blocks(&[20, 4], 10);
        // entry mean = total / (n(n-1)) is far below any nonzero row sum
        let flags = noise_alg1_consensus(&c, 0.1, RowSumThreshold::EntryMean).unwrap();
        assert!(flags.iter().all(|&f| !f));
        assert!(noise_alg1_consensus(&c, 1.0, RowSumThreshold::RowMean).is_err());
    }

    #[test]
    fn alg2_is_classify_then_vote() {
        let d = DistanceMatrix::from_fn(6, |i, j| if (i < 3) == (j < 3) { 0.1 } else { 0.9 });
        let eps = [0.05, 0.2, 0.95];
        let manual = vote_noise(&classify_over_eps(&d, &eps, 3).unwrap());
        assert_eq!(noise_alg2_dbscan_distance(&d, &eps, 3).unwrap(), manual);
        assert!(manual.iter().all(|&f| !f));
        let flags = noise_alg2_dbscan_distance(&d, &[0.05], 2).unwrap();
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn alg3_full_blocks_keep_everyone() {
        let c = blocks(&[5, 6], 8);
        let flags = noise_alg3_dbscan_consensus(&c, &[8], 5).unwrap();
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn alg3_flags_weakly_tied_point() {
        let runs = 8;
        let mut c = blocks(&[5, 5, 1], runs);
        for j in 0..10 {
            c.counts[10 * 11 + j] = 1;
            c.counts[j * 11 + 10] = 1;
        }
        let flags = noise_alg3_dbscan_consensus(&c, &default_eps_counts(runs, 0.25), 3).unwrap();
        assert!(flags[10]);
        assert!(flags[..10].iter().all(|&f| !f));
    }

    #[test]
    fn alg3_flags_bridge_between_blocks() {
        // point 12 splits its votes: 5 of 11 runs with block A, 6 with block B
        let runs = 11u32;
        let n = 13;
        let mut counts = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (i.min(j), i.max(j));
                counts[i * n + j] = if b == 12 {
                    if a < 6 {
                        5
                    } else {
                        6
                    }
                } else if (a < 6) == (b < 6) {
                    runs
                } else {
                    0
                };
            }
        }
        let c = ConsensusMatrix::from_counts(n, runs, counts).unwrap();
        let eps = default_eps_counts(runs, 0.25);
        assert_eq!(eps, (3..=11).collect::<Vec<_>>());
        let flags = noise_alg3_dbscan_consensus(&c, &eps, 6).unwrap();
        assert!(flags[12], "bridge kept");
        assert!(flags[..12].iter().all(|&f| !f));
    }

    #[test]
    fn alg3_validates_counts() {
        let c = blocks(&[3], 4);
        assert!(noise_alg3_dbscan_consensus(&c, &[], 2).is_err());
        assert!(noise_alg3_dbscan_consensus(&c, &[0], 2).is_err());
        assert!(noise_alg3_dbscan_consensus(&c, &[5], 2).is_err());
    }

    #[test]
    fn combine_majority() {
        let v = combine_noise(
            &[true, false, true],
            &[true, false, true],
            &[false, true, true],
        )
        .unwrap();
        assert_eq!(v.combined, [true, false, true]);
        assert_eq!(v.noise_count(), 2);
        assert_eq!(v.kept(), [1]);
        assert!(combine_noise(&[true], &[true, false], &[true]).is_err());
    }

    #[test]
    fn tsv_dump_and_pair_count() {
        let c = blocks(&[2, 1], 3);
        let mut buf = Vec::new();
        c.write_tsv(&mut buf, 0).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i\tj\tcount\n0\t1\t3\n");
        assert_eq!(c.pairs_above(0), 1);
        assert_eq!(c.pairs_above(3), 0);
    }

    fn arb_labelings() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (2usize..10, 1usize..6).prop_flat_map(|(n, runs)| {
            proptest::collection::vec(proptest::collection::vec(0usize..4, n), runs)
        })
    }

    proptest! {
        #[test]
        fn consensus_matches_pair_counting_and_ignores_label_names(labelings in arb_labelings(), shift in 1usize..4) {
            let c = build_consensus_from_labels(&labelings).unwrap();
            let n = labelings[0].len();
            for i in 0..n {
                for j in 0..n {
                    let brute = labelings.iter().filter(|l| l[i] == l[j]).count() as u32;
                    prop_assert_eq!(c.get(i, j), brute);
                }
            }
            let renamed: Vec<Vec<usize>> = labelings
                .iter()
                .map(|l| l.iter().map(|&x| (x + shift) % 4).collect())
                .collect();
            prop_assert_eq!(build_consensus_from_labels(&renamed).unwrap(), c);
        }

        #[test]
        fn alg1_commutes_with_point_permutation(labelings in arb_labelings(), rot in 0usize..10) {
            let c = build_consensus_from_labels(&labelings).unwrap();
            let n = c.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted = c.select(&perm);
            let f = noise_alg1_consensus(&c, 0.1, RowSumThreshold::RowMean).unwrap();
            let fp = noise_alg1_consensus(&permuted, 0.1, RowSumThreshold::RowMean).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert_eq!(fp[new], f[old]);
            }
        }

        #[test]
        fn combine_is_symmetric_and_monotone(bits in proptest::collection::vec(proptest::bool::ANY, 3 * 8), flip in 0usize..24) {
            let (a, rest) = bits.split_at(8);
            let (b, c) = rest.split_at(8);
            let base = combine_noise(a, b, c).unwrap().combined;
            prop_assert_eq!(&combine_noise(b, c, a).unwrap().combined, &base);
            prop_assert_eq!(&combine_noise(c, a, b).unwrap().combined, &base);
            prop_assert_eq!(&combine_noise(b, a, c).unwrap().combined, &base);
            let mut raised = bits.clone();
            raised[flip] = true;
            let (a2, rest2) = raised.split_at(8);
            let (b2, c2) = rest2.split_at(8);
            let after = combine_noise(a2, b2, c2).unwrap().combined;
            for (x, y) in base.iter().zip(&after) {
                prop_assert!(!x | y);
            }
        }
    }
}
