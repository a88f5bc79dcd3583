//! Sparse column storage, cosine similarity, pairwise distances and the
//! sparse-dense products used by the factorization code.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Borrowed view of one sparse vector: strictly increasing indices with
/// matching values.
#[derive(Clone, Copy, Debug)]
pub struct SparseVec<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> SparseVec<'a> {
    pub fn new(indices: &'a [usize], values: &'a [f64]) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        SparseVec { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Merge-join dot product.
    pub fn dot(&self, other: &SparseVec<'_>) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&i, &v)| v * dense[i])
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

/// Cosine of the angle between two sparse nonnegative vectors, clamped to
/// [0, 1].
pub fn cosine_similarity(x: &SparseVec<'_>, y: &SparseVec<'_>) -> Result<f64> {
    let sx = x.squared_norm();
    if sx == 0.0 {
        return Err(Error::ZeroVector { index: 0 });
    }
    let sy = y.squared_norm();
    if sy == 0.0 {
        return Err(Error::ZeroVector { index: 1 });
    }
    Ok(cosine_from_parts(x.dot(y), sx, sy))
}

// sqrt(fl(a*a)) == a exactly, so identical vectors come out at exactly 1.
#[inline]
fn cosine_from_parts(dot: f64, sq_x: f64, sq_y: f64) -> f64 {
    (dot / (sq_x * sq_y).sqrt()).clamp(0.0, 1.0)
}

/// Sparse nonnegative m×n matrix in compressed-column form. Columns are
/// documents, rows are terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TermDocMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// Euclidean norm of each column as weighted, before any normalization.
    column_norms: Vec<f64>,
}

impl TermDocMatrix {
    /// Builds a matrix from per-column `(row, value)` lists. Zero values are
    /// dropped; negative, non-finite, out-of-range or repeated rows are
    /// rejected.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let cols = columns.len();
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for (j, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|&(r, _)| r);
            let mut prev = None;
            for (r, v) in col {
                if r >= rows {
                    return Err(Error::InvalidMatrix(format!(
                        "row index {r} out of range in column {j} (rows = {rows})"
                    )));
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({r}, {j}) = {v} is not a finite nonnegative value"
                    )));
                }
                if prev == Some(r) {
                    return Err(Error::InvalidMatrix(format!("duplicate entry ({r}, {j})")));
                }
                prev = Some(r);
                if v > 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let mut m = TermDocMatrix {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
            column_norms: Vec::new(),
        };
        m.column_norms = (0..cols).map(|j| m.column(j).norm()).collect();
        Ok(m)
    }

    /// Builds a matrix from dense column-major data.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let columns = (0..cols)
            .map(|j| {
                (0..rows)
                    .map(|i| (i, data[j * rows + i]))
                    .filter(|&(_, v)| v != 0.0)
                    .collect()
            })
            .collect();
        Self::from_columns(rows, columns)
    }

    pub fn from_nalgebra(dense: &DMatrix<f64>) -> Result<Self> {
        Self::from_dense(dense.nrows(), dense.ncols(), dense.as_slice())
    }

    /// Scales every nonempty column to unit Euclidean norm. `column_norms`
    /// keeps the norms observed before scaling.
    pub fn normalize_columns(&mut self) {
        for j in 0..self.cols {
            let norm = self.column_norms[j];
            if norm > 0.0 {
                for v in &mut self.values[self.col_ptr[j]..self.col_ptr[j + 1]] {
                    *v /= norm;
                }
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn column(&self, j: usize) -> SparseVec<'_> {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        SparseVec::new(&self.row_idx[range.clone()], &self.values[range])
    }

    pub fn is_column_empty(&self, j: usize) -> bool {
        self.col_ptr[j] == self.col_ptr[j + 1]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let c = self.column(col);
        match c.indices.binary_search(&row) {
            Ok(p) => c.values[p],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` over stored entries in column order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| self.column(j).iter().map(move |(i, v)| (i, j, v)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.entries() {
            out[(i, j)] = v;
        }
        out
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let columns = keep
            .iter()
            .map(|&j| self.column(j).iter().collect())
            .collect();
        let mut out = Self::from_columns(self.rows, columns).expect("subset of a valid matrix");
        out.column_norms = keep.iter().map(|&j| self.column_norms[j]).collect();
        out
    }

    /// `Wᵀ A` for dense `W` (m×k); result is k×n.
    pub fn transpose_mul_left(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(w.nrows(), self.rows, "W must have one row per term");
        let k = w.ncols();
        let mut out = DMatrix::zeros(k, self.cols);
        out.as_mut_slice()
            .par_chunks_mut(k.max(1))
            .enumerate()
            .for_each(|(j, col)| {
                for (t, a) in self.column(j).iter() {
                    for (c, o) in col.iter_mut().enumerate() {
                        *o += a * w[(t, c)];
                    }
                }
            });
        out
    }

    /// `A Hᵀ` for dense `H` (k×n); result is m×k.
    pub fn mul_transpose_right(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(h.ncols(), self.cols, "H must have one column per document");
        let k = h.nrows();
        let mut out = DMatrix::zeros(self.rows, k);
        for j in 0..self.cols {
            for (t, a) in self.column(j).iter() {
                for c in 0..k {
                    out[(t, c)] += a * h[(c, j)];
                }
            }
        }
        out
    }

    /// `‖A − W H‖_F`, evaluated entrywise (no expansion of the square, so
    /// small residuals keep full relative precision).
    pub fn residual_norm(&self, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
        if w.nrows() != self.rows || h.ncols() != self.cols || w.ncols() != h.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{}, W is {}x{}, H is {}x{}",
                self.rows,
                self.cols,
                w.nrows(),
                w.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        let per_col: Vec<f64> = (0..self.cols)
            .into_par_iter()
            .map(|j| {
                let mut recon = w * h.column(j);
                for (t, a) in self.column(j).iter() {
                    recon[t] -= a;
                }
                recon.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        Ok(per_col.iter().sum::<f64>().sqrt())
    }
}

/// Symmetric matrix of pairwise distances in [0, 1] with a zero diagonal,
/// stored as the packed strict upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix by evaluating `f(i, j)` for every `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut packed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                packed.push(f(i, j));
            }
        }
        DistanceMatrix { n, packed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        // row i of the strict upper triangle starts after sum_{r<i} (n-1-r)
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.packed[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.packed[self.offset(j, i)],
        }
    }

    /// Off-diagonal values, each unordered pair once.
    pub fn upper_values(&self) -> &[f64] {
        &self.packed
    }

    /// Evenly spaced quantiles of the strictly positive off-diagonal
    /// distances, from `lo` to `hi` inclusive (nearest-rank).
    pub fn positive_quantiles(&self, lo: f64, hi: f64, count: usize) -> Vec<f64> {
        self.quantiles_between(lo, hi, count, f64::INFINITY)
    }

    /// As `positive_quantiles`, over the distances in `(0, ceiling)` only.
    pub fn quantiles_between(&self, lo: f64, hi: f64, count: usize, ceiling: f64) -> Vec<f64> {
        let mut vals: Vec<f64> = self
            .packed
            .iter()
            .copied()
            .filter(|&d| d > 0.0 && d < ceiling)
            .collect();
        if vals.is_empty() || count == 0 {
            return Vec::new();
        }
        vals.sort_by(f64::total_cmp);
        (0..count)
            .map(|s| {
                let q = if count == 1 {
                    lo
                } else {
                    lo + (hi - lo) * s as f64 / (count - 1) as f64
                };
                let rank = (q * vals.len() as f64).ceil() as usize;
                vals[rank.clamp(1, vals.len()) - 1]
            })
            .collect()
    }
}

/// Pairwise cosine distances `1 − cos θ` between the columns of `a`.
pub fn pairwise_cosine_distance(a: &TermDocMatrix) -> Result<DistanceMatrix> {
    let n = a.cols();
    let sq: Vec<f64> = (0..n).map(|j| a.column(j).squared_norm()).collect();
    if let Some(index) = sq.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroVector { index });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; a.rows()],
            |scratch, i| {
                let ci = a.column(i);
                for (t, v) in ci.iter() {
                    scratch[t] = v;
                }
                let row = (i + 1..n)
                    .map(|j| 1.0 - cosine_from_parts(a.column(j).dot_dense(scratch), sq[i], sq[j]))
                    .collect();
                for &t in ci.indices {
                    scratch[t] = 0.0;
                }
                row
            },
        )
        .collect();
    Ok(DistanceMatrix {
        n,
        packed: rows.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv<'a>(idx: &'a [usize], val: &'a [f64]) -> SparseVec<'a> {
        SparseVec::new(idx, val)
    }

    #[test]
    fn cosine_examples() {
        let x = sv(&[0, 3], &[2.0, 5.0]);
        assert_eq!(cosine_similarity(&x, &x).unwrap(), 1.0);
        let e0 = sv(&[0], &[1.0]);
        let e1 = sv(&[1], &[1.0]);
        assert_eq!(cosine_similarity(&e0, &e1).unwrap(), 0.0);
        let x = sv(&[0, 1], &[1.0, 1.0]);
        let y = sv(&[0], &[1.0]);
        let c = cosine_similarity(&x, &y).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let x = sv(&[0], &[1.0]);
        let z = sv(&[], &[]);
        assert!(matches!(
            cosine_similarity(&x, &z),
            Err(Error::ZeroVector { index: 1 })
        ));
        assert!(matches!(
            cosine_similarity(&z, &x),
            Err(Error::ZeroVector { index: 0 })
        ));
    }

    #[test]
    fn pairwise_identical_and_disjoint_columns() {
        let a = TermDocMatrix::from_dense(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 4.0])
            .unwrap();
        let d = pairwise_cosine_distance(&a).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(0, 2), 1.0);
        assert_eq!(d.get(2, 1), 1.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn pairwise_reports_zero_column() {
        let a = TermDocMatrix::from_dense(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            pairwise_cosine_distance(&a),
            Err(Error::ZeroVector { index: 1 })
        ));
    }

    #[test]
    fn pairwise_matches_scalar_loop_on_random_3x3() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let data: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..1.0)).collect();
            let a = TermDocMatrix::from_dense(3, 3, &data).unwrap();
            let d = pairwise_cosine_distance(&a).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let (x, y) = (&data[i * 3..i * 3 + 3], &data[j * 3..j * 3 + 3]);
                    let mut dot = 0.0;
                    let mut nx = 0.0;
                    let mut ny = 0.0;
                    for t in 0..3 {
                        dot += x[t] * y[t];
                        nx += x[t] * x[t];
                        ny += y[t] * y[t];
                    }
                    let expect = if i == j {
                        0.0
                    } else {
                        1.0 - dot / (nx.sqrt() * ny.sqrt())
                    };
                    assert!((d.get(i, j) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn from_columns_validation() {
        assert!(TermDocMatrix::from_columns(2, vec![vec![(0, -1.0)]]).is_err());
        assert!(TermDocMatrix::from_columns(2, vec![vec![(2, 1.0)]]).is_err());
        assert!(TermDocMatrix::from_columns(2, vec![vec![(1, 1.0), (1, 2.0)]]).is_err());
        let m = TermDocMatrix::from_columns(2, vec![vec![(1, 0.0), (0, 3.0)]]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn products_match_dense() {
        let a = TermDocMatrix::from_dense(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 1.0]).unwrap();
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, 0.0, 3.0, 1.0]);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 2.0, 1.5]);
        let ad = a.to_dense();
        assert!((a.transpose_mul_left(&w) - w.transpose() * &ad).norm() < 1e-12);
        assert!((a.mul_transpose_right(&h) - &ad * h.transpose()).norm() < 1e-12);
        let r = a.residual_norm(&w, &h).unwrap();
        assert!((r - (&ad - &w * &h).norm()).abs() < 1e-12);
    }

    #[test]
    fn quantiles_are_monotone_and_positive() {
        let d = DistanceMatrix::from_fn(6, |i, j| {
            if i + j == 3 {
                0.0
            } else {
                (i * j) as f64 / 30.0
            }
        });
        let below = d.quantiles_between(0.0, 1.0, 5, 0.9);
        assert!(below.iter().all(|&x| x > 0.0 && x < 0.9));
        let q = d.positive_quantiles(0.05, 0.6, 20);
        assert_eq!(q.len(), 20);
        assert!(q.iter().all(|&x| x > 0.0));
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }

    fn arb_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..6, 2usize..7).prop_flat_map(|(m, n)| {
            (
                Just(m),
                Just(n),
                proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], m * n),
            )
        })
    }

    proptest! {
        #[test]
        fn distance_matrix_invariants((m, n, data) in arb_matrix()) {
            let a = TermDocMatrix::from_dense(m, n, &data).unwrap();
            prop_assume!((0..n).all(|j| !a.is_column_empty(j)));
            let d = pairwise_cosine_distance(&a).unwrap();
            for i in 0..n {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&d.get(i, j)));
                }
            }
        }

        #[test]
        fn cosine_is_scale_invariant(vals in proptest::collection::vec(0.01f64..10.0, 1..8), alpha in 0.001f64..1000.0) {
            let idx: Vec<usize> = (0..vals.len()).collect();
            let scaled: Vec<f64> = vals.iter().map(|v| v * alpha).collect();
            let c = cosine_similarity(&sv(&idx, &vals), &sv(&idx, &scaled)).unwrap();
            prop_assert!((c - 1.0).abs() < 1e-12);
        }
    }
}
