//! Laplacian spectrum of a consensus matrix and eigengap-based choice of the
//! topic count.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Length of the inspected eigenvalue prefix.
    pub eigs: usize,
    /// Use `D^{-1/2} L D^{-1/2}` instead of `L = D − C`.
    pub normalized: bool,
    /// Largest n handled by the dense solver; bigger problems use Lanczos.
    pub dense_limit: usize,
    /// `analyze` zeroes counts `≤ min_count_fraction · runs` before
    /// forming the Laplacian; 0 keeps every count.
    pub min_count_fraction: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            eigs: 50,
            normalized: false,
            dense_limit: 2000,
            min_count_fraction: 0.6,
        }
    }
}

/// Eigenvalue prefix plus the eigengap selection made on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaplacianResult {
    /// Smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// `gaps[i] = eigenvalues[i + 1] − eigenvalues[i]`.
    pub gaps: Vec<f64>,
    /// 0-based index of the lower end of the selected gap.
    pub gap_index: usize,
    pub suggested_k: usize,
}

/// Dense Laplacian with the diagonal of `C` ignored.
pub fn laplacian(c: &ConsensusMatrix, normalized: bool) -> DMatrix<f64> {
    let n = c.len();
    let mut l = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { 0.0 } else { -(c.get(i, j) as f64) },
    );
    for i in 0..n {
        let degree: f64 = (0..n).filter(|&j| j != i).map(|j| c.get(i, j) as f64).sum();
        l[(i, i)] = degree;
    }
    if normalized {
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                if l[(i, i)] > 0.0 {
                    1.0 / l[(i, i)].sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        for j in 0..n {
            for i in 0..n {
                l[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    l
}

/// The `m` smallest eigenvalues of the consensus Laplacian, ascending.
pub fn laplacian_eigenvalues(
    c: &ConsensusMatrix,
    m: usize,
    config: &SpectralConfig,
) -> Result<Vec<f64>> {
    let n = c.len();
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue count {m} outside [1, {n}]"
        )));
    }
    let l = laplacian(c, config.normalized);
    if n <= config.dense_limit {
        Ok(dense_smallest(&l, m))
    } else {
        lanczos_smallest(&l, m, &LanczosOptions::default())
    }
}

fn dense_smallest(l: &DMatrix<f64>, m: usize) -> Vec<f64> {
    let mut eig: Vec<f64> = l.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig.truncate(m);
    eig
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Residual tolerance relative to `‖L‖_F`.
    pub tol: f64,
    pub seed: u64,
    /// Steps between convergence checks.
    pub check_every: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            seed: 0x1a2c,
            check_every: 10,
        }
    }
}

/// Smallest `m` eigenvalues of a symmetric matrix by Lanczos with full
/// reorthogonalization and explicit deflation.
///
/// Single-vector Lanczos sees only one direction per eigenspace, so each
/// pass locks its converged low Ritz pairs and the next pass runs on their
/// orthogonal complement. Passes continue until the complement's smallest
/// eigenvalue is no smaller than the m-th locked value.
pub fn lanczos_smallest(op: &DMatrix<f64>, m: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    let n = op.nrows();
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue count {m} outside [1, {n}]"
        )));
    }
    let scale = op.norm().max(f64::MIN_POSITIVE);
    let tol = opts.tol * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked_vecs: Vec<DVector<f64>> = Vec::new();
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut total_steps = 0;

    while locked_vecs.len() < n {
        let pass = lanczos_pass(op, &locked_vecs, m, tol, opts.check_every, &mut rng)?;
        total_steps += pass.steps;
        if pass.values.is_empty() {
            return Err(Error::ConvergenceFailure {
                steps: total_steps,
                converged: locked_vals.len().min(m),
                wanted: m,
            });
        }
        if locked_vals.len() >= m {
            let mut sorted = locked_vals.clone();
            sorted.sort_by(f64::total_cmp);
            if pass.values[0] >= sorted[m - 1] - tol {
                break;
            }
        }
        locked_vals.extend(&pass.values);
        locked_vecs.extend(pass.vectors);
    }
    locked_vals.sort_by(f64::total_cmp);
    locked_vals.truncate(m);
    Ok(locked_vals)
}

struct PassResult {
    steps: usize,
    /// Converged Ritz values from the bottom of the spectrum, ascending.
    values: Vec<f64>,
    vectors: Vec<DVector<f64>>,
}

fn orthogonalize(w: &mut DVector<f64>, against: &[DVector<f64>]) {
    // two rounds of classical Gram-Schmidt
    for _ in 0..2 {
        for v in against {
            let p = v.dot(w);
            w.axpy(-p, v, 1.0);
        }
    }
}

fn random_start(
    n: usize,
    deflate: &[DVector<f64>],
    basis: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<DVector<f64>> {
    for _ in 0..5 {
        let mut v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        orthogonalize(&mut v, deflate);
        orthogonalize(&mut v, basis);
        let nv = v.norm();
        if nv > 1e-8 {
            return Some(v / nv);
        }
    }
    None
}

fn lanczos_pass(
    op: &DMatrix<f64>,
    deflate: &[DVector<f64>],
    want: usize,
    tol: f64,
    check_every: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PassResult> {
    let n = op.nrows();
    let dim = n - deflate.len();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let Some(mut v) = random_start(n, deflate, &[], rng) else {
        return Ok(PassResult {
            steps: 0,
            values: Vec::new(),
            vectors: Vec::new(),
        });
    };
    let min_steps = (2 * want + 10).min(dim);
    loop {
        let mut w = op * &v;
        let a = v.dot(&w);
        w.axpy(-a, &v, 1.0);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            w.axpy(-b, prev, 1.0);
        }
        basis.push(v.clone());
        alpha.push(a);
        orthogonalize(&mut w, deflate);
        orthogonalize(&mut w, &basis);
        let b = w.norm();
        let steps = basis.len();
        let exhausted = steps >= dim;

        let breakdown = b <= tol;
        if exhausted || (steps >= min_steps && steps % check_every.max(1) == 0) {
            let (values, vectors, converged_all) =
                ritz_pairs(&alpha, &beta, if breakdown { 0.0 } else { b }, &basis, tol);
            // Lock only a bottom prefix of converged values.
            let take = values.len();
            if exhausted || take >= want.min(dim) || (converged_all && breakdown) {
                return Ok(PassResult {
                    steps,
                    values: values[..take].to_vec(),
                    vectors: vectors[..take].to_vec(),
                });
            }
        }
        if exhausted {
            unreachable!("exhausted passes return above");
        }
        if breakdown {
            // invariant subspace: continue from a fresh direction
            beta.push(0.0);
            match random_start(n, deflate, &basis, rng) {
                Some(nv) => v = nv,
                None => {
                    let (values, vectors, _) =
                        ritz_pairs(&alpha, &beta[..beta.len() - 1], 0.0, &basis, tol);
                    return Ok(PassResult {
                        steps,
                        values,
                        vectors,
                    });
                }
            }
        } else {
            beta.push(b);
            v = w / b;
        }
    }
}

/// Ritz pairs of the tridiagonal matrix, returning the longest bottom
/// prefix whose residual `|β_last · s_last|` is within `tol`.
fn ritz_pairs(
    alpha: &[f64],
    beta: &[f64],
    beta_last: f64,
    basis: &[DVector<f64>],
    tol: f64,
) -> (Vec<f64>, Vec<DVector<f64>>, bool) {
    let s = alpha.len();
    let t = DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for &idx in &order {
        let resid = (beta_last * eig.eigenvectors[(s - 1, idx)]).abs();
        if resid > tol {
            break;
        }
        values.push(eig.eigenvalues[idx]);
        let mut x = DVector::zeros(basis[0].len());
        for (r, b) in basis.iter().enumerate() {
            x.axpy(eig.eigenvectors[(r, idx)], b, 1.0);
        }
        let nx = x.norm();
        vectors.push(x / nx);
    }
    let all = values.len() == s;
    (values, vectors, all)
}

/// Picks the topic count from the largest gap among the ascending
/// eigenvalues. The gap right after the first eigenvalue is skipped when
/// any other gap exists, and the suggestion is never below 2. The
/// suggestion is the number of eigenvalues at or below the selected gap.
pub fn suggest_k(eigenvalues: &[f64]) -> Result<LaplacianResult> {
    if eigenvalues.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two eigenvalues".into(),
        ));
    }
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let start = if gaps.len() >= 2 { 1 } else { 0 };
    let mut gap_index = start;
    for i in start..gaps.len() {
        if gaps[i] > gaps[gap_index] {
            gap_index = i;
        }
    }
    Ok(LaplacianResult {
        eigenvalues: eigenvalues.to_vec(),
        suggested_k: (gap_index + 1).max(2).min(eigenvalues.len()),
        gap_index,
        gaps,
    })
}

/// Eigenvalue prefix of the Laplacian of `C`, after dropping weak counts,
/// and the eigengap suggestion.
pub fn analyze(c: &ConsensusMatrix, config: &SpectralConfig) -> Result<LaplacianResult> {
    let f = config.min_count_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!(
            "min_count_fraction {f} outside [0, 1)"
        )));
    }
    let kept = c.drop_at_most((f * c.runs() as f64).floor() as u32);
    let m = config.eigs.min(c.len());
    let eig = laplacian_eigenvalues(&kept, m, config)?;
    suggest_k(&eig)
}
