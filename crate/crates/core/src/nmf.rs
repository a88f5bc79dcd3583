//! Nonnegative matrix factorization `A ≈ W H`.
//!
//! Three solvers share one entry point:
//!
//! * multiplicative update, where zero entries stay zero forever;
//! * alternating least squares, which solves the normal equations for `H`
//!   and then `W` and clamps negatives to zero;
//! * alternating constrained least squares, the same with ridge terms
//!   `λ_H I` and `λ_W I` added to the normal matrices.
//!
//! All dense work uses `nalgebra`; the term-document matrix stays sparse.

use log::warn;
use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparsemat::TermDocMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmfAlgorithm {
    Mu,
    Als,
    #[default]
    Acls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub algorithm: NmfAlgorithm,
    pub max_iter: usize,
    pub seed: u64,
    pub lambda_w: f64,
    pub lambda_h: f64,
    /// Added to the multiplicative-update denominators.
    pub denom_eps: f64,
    /// Stop once the relative change in reconstruction error drops below
    /// this value. `None` runs exactly `max_iter` iterations.
    pub early_stop: Option<f64>,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            algorithm: NmfAlgorithm::Acls,
            max_iter: 50,
            seed: 0,
            lambda_w: 0.5,
            lambda_h: 0.5,
            denom_eps: 1e-9,
            early_stop: None,
        }
    }
}

impl NmfConfig {
    /// Defaults for `algorithm`: 200 iterations for MU, 50 otherwise.
    pub fn for_algorithm(algorithm: NmfAlgorithm) -> Self {
        NmfConfig {
            algorithm,
            max_iter: if algorithm == NmfAlgorithm::Mu {
                200
            } else {
                50
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter(
                "nmf max_iter must be at least 1".into(),
            ));
        }
        if !(self.denom_eps > 0.0) {
            return Err(Error::InvalidParameter(
                "nmf denom_eps must be positive".into(),
            ));
        }
        if !(self.lambda_w >= 0.0 && self.lambda_h >= 0.0)
            || !self.lambda_w.is_finite()
            || !self.lambda_h.is_finite()
        {
            return Err(Error::InvalidParameter(
                "nmf lambdas must be finite and nonnegative".into(),
            ));
        }
        if let Some(tol) = self.early_stop {
            if !(tol >= 0.0) {
                return Err(Error::InvalidParameter(
                    "nmf early_stop must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    /// m×k term-topic matrix.
    pub w: DMatrix<f64>,
    /// k×n topic-document matrix.
    pub h: DMatrix<f64>,
    pub k: usize,
    /// `‖A − WH‖_F` after each iteration.
    pub history: Vec<f64>,
}

impl FactorPair {
    /// Fraction of exactly-zero entries across W and H.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self
            .w
            .iter()
            .chain(self.h.iter())
            .filter(|&&v| v == 0.0)
            .count();
        zeros as f64 / (self.w.len() + self.h.len()) as f64
    }
}

/// `‖A − W H‖_F`.
pub fn reconstruction_error(a: &TermDocMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    a.residual_norm(w, h)
}

fn check_k(a: &TermDocMatrix, k: usize) -> Result<()> {
    let bound = a.rows().min(a.cols());
    if k < 1 || k > bound {
        return Err(Error::BadK { k, n: bound });
    }
    Ok(())
}

/// Uniform on (0, 1], so no entry starts at exactly zero.
fn random_positive(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| 1.0 - rng.gen::<f64>())
}

fn check_nonnegative(m: &DMatrix<f64>, factor: &'static str, iteration: usize) -> Result<()> {
    if m.iter().all(|&v| v >= 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonNegativityViolation { factor, iteration })
    }
}

/// True once the relative error `‖A − WH‖ / ‖A‖` moved less than `tol`.
fn should_stop(history: &[f64], a_norm: f64, tol: Option<f64>) -> bool {
    match (tol, history) {
        (Some(tol), [.., prev, last]) => (prev - last).abs() < tol * a_norm.max(f64::MIN_POSITIVE),
        _ => false,
    }
}

/// Dispatches on `config.algorithm`.
pub fn factorize(a: &TermDocMatrix, k: usize, config: &NmfConfig) -> Result<FactorPair> {
    match config.algorithm {
        NmfAlgorithm::Mu => nmf_mu(a, k, config),
        NmfAlgorithm::Als => nmf_als(a, k, config),
        NmfAlgorithm::Acls => nmf_acls(a, k, config),
    }
}

pub fn nmf_mu(a: &TermDocMatrix, k: usize, config: &NmfConfig) -> Result<FactorPair> {
    check_k(a, k)?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w = random_positive(a.rows(), k, &mut rng);
    let h = random_positive(k, a.cols(), &mut rng);
    multiplicative_update(a, w, h, config)
}

/// Multiplicative updates from a caller-supplied starting point.
pub fn multiplicative_update(
    a: &TermDocMatrix,
    mut w: DMatrix<f64>,
    mut h: DMatrix<f64>,
    config: &NmfConfig,
) -> Result<FactorPair> {
    config.validate()?;
    let k = w.ncols();
    if w.nrows() != a.rows() || h.nrows() != k || h.ncols() != a.cols() {
        return Err(Error::ShapeMismatch(
            "initial factors do not conform to A".into(),
        ));
    }
    check_nonnegative(&w, "W", 0)?;
    check_nonnegative(&h, "H", 0)?;
    let eps = config.denom_eps;
    let mut history = Vec::with_capacity(config.max_iter);
    for it in 1..=config.max_iter {
        // H <- H .* (WᵀA) ./ (WᵀW H + eps)
        let wta = a.transpose_mul_left(&w);
        let wtwh = (w.transpose() * &w) * &h;
        h.zip_zip_apply(&wta, &wtwh, |hv, num, den| *hv = *hv * num / (den + eps));
        // W <- W .* (A Hᵀ) ./ (W H Hᵀ + eps)
        let aht = a.mul_transpose_right(&h);
        let whht = &w * (&h * h.transpose());
        w.zip_zip_apply(&aht, &whht, |wv, num, den| *wv = *wv * num / (den + eps));

        check_nonnegative(&h, "H", it)?;
        check_nonnegative(&w, "W", it)?;
        history.push(a.residual_norm(&w, &h)?);
        if should_stop(&history, a.frobenius_norm(), config.early_stop) {
            break;
        }
    }
    Ok(FactorPair { w, h, k, history })
}

pub fn nmf_als(a: &TermDocMatrix, k: usize, config: &NmfConfig) -> Result<FactorPair> {
    check_k(a, k)?;
    let w = random_positive(a.rows(), k, &mut ChaCha8Rng::seed_from_u64(config.seed));
    alternating_least_squares(a, w, 0.0, 0.0, config)
}

pub fn nmf_acls(a: &TermDocMatrix, k: usize, config: &NmfConfig) -> Result<FactorPair> {
    check_k(a, k)?;
    let w = random_positive(a.rows(), k, &mut ChaCha8Rng::seed_from_u64(config.seed));
    alternating_least_squares(a, w, config.lambda_w, config.lambda_h, config)
}

/// Alternating (optionally ridge-constrained) least squares from an initial
/// `W`. With both lambdas zero this is plain ALS.
pub fn alternating_least_squares(
    a: &TermDocMatrix,
    mut w: DMatrix<f64>,
    lambda_w: f64,
    lambda_h: f64,
    config: &NmfConfig,
) -> Result<FactorPair> {
    config.validate()?;
    if !(lambda_w >= 0.0 && lambda_h >= 0.0) {
        return Err(Error::InvalidParameter(
            "lambdas must be nonnegative".into(),
        ));
    }
    let k = w.ncols();
    if w.nrows() != a.rows() {
        return Err(Error::ShapeMismatch(
            "initial W does not conform to A".into(),
        ));
    }
    let mut h = DMatrix::zeros(k, a.cols());
    let mut history = Vec::with_capacity(config.max_iter);
    for it in 1..=config.max_iter {
        // (WᵀW + λ_H I) H = WᵀA
        let gram = w.transpose() * &w + DMatrix::identity(k, k) * lambda_h;
        h = solve_spd(gram, a.transpose_mul_left(&w))?;
        h.apply(|v| *v = v.max(0.0));
        // (HHᵀ + λ_W I) Wᵀ = H Aᵀ
        let gram = &h * h.transpose() + DMatrix::identity(k, k) * lambda_w;
        w = solve_spd(gram, a.mul_transpose_right(&h).transpose())?.transpose();
        w.apply(|v| *v = v.max(0.0));

        check_nonnegative(&h, "H", it)?;
        check_nonnegative(&w, "W", it)?;
        history.push(a.residual_norm(&w, &h)?);
        if should_stop(&history, a.frobenius_norm(), config.early_stop) {
            break;
        }
    }
    Ok(FactorPair { w, h, k, history })
}

const MAX_CONDITION: f64 = 1e12;

/// Solves `G X = B` for symmetric positive semidefinite `G` by Cholesky.
/// A numerically singular `G` gets a ridge of `1e-12 · λ_max(G)` first.
fn solve_spd(mut gram: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = gram.symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let ridge = if hi > 0.0 {
            hi / MAX_CONDITION
        } else {
            1.0 / MAX_CONDITION
        };
        warn!(
            "normal matrix is numerically singular (eigenvalues in [{lo:e}, {hi:e}]); adding ridge {ridge:e}"
        );
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
    }
    let chol = Cholesky::new(gram).ok_or(Error::SingularSystem)?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one(m: usize, n: usize, seed: u64) -> TermDocMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let data: Vec<f64> = (0..n)
            .flat_map(|j| {
                let hj = h[j];
                w.iter().map(move |wi| wi * hj)
            })
            .collect::<Vec<_>>();
        TermDocMatrix::from_dense(m, n, &data).unwrap()
    }

    fn random_sparse(m: usize, n: usize, density: f64, seed: u64) -> TermDocMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * n)
            .map(|_| {
                if rng.gen::<f64>() < density {
                    rng.gen_range(0.05..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        TermDocMatrix::from_dense(m, n, &data).unwrap()
    }

    fn rel_err(a: &TermDocMatrix, f: &FactorPair) -> f64 {
        reconstruction_error(a, &f.w, &f.h).unwrap() / a.frobenius_norm()
    }

    #[test]
    fn reconstruction_error_examples() {
        let a = TermDocMatrix::from_dense(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let z = DMatrix::zeros(2, 2);
        assert!((reconstruction_error(&a, &z, &z).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let i = DMatrix::identity(2, 2);
        assert_eq!(reconstruction_error(&a, &i, &i).unwrap(), 0.0);
        assert!(matches!(
            reconstruction_error(&a, &DMatrix::zeros(3, 1), &DMatrix::zeros(1, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn mu_recovers_rank_one() {
        let a = rank_one(12, 9, 1);
        let cfg = NmfConfig {
            max_iter: 500,
            ..NmfConfig::for_algorithm(NmfAlgorithm::Mu)
        };
        let f = nmf_mu(&a, 1, &cfg).unwrap();
        assert!(rel_err(&a, &f) < 1e-3, "{}", rel_err(&a, &f));
    }

    #[test]
    fn mu_history_is_non_increasing() {
        let a = random_sparse(15, 20, 0.4, 3);
        let f = nmf_mu(&a, 3, &NmfConfig::for_algorithm(NmfAlgorithm::Mu)).unwrap();
        assert_eq!(f.history.len(), 200);
        for w in f.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn mu_keeps_zeros_locked() {
        let a = random_sparse(10, 12, 0.5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = random_positive(10, 3, &mut rng);
        let mut h = random_positive(3, 12, &mut rng);
        w[(4, 1)] = 0.0;
        h[(0, 7)] = 0.0;
        h[(2, 0)] = 0.0;
        for iters in [1, 5, 40] {
            let cfg = NmfConfig {
                max_iter: iters,
                ..NmfConfig::for_algorithm(NmfAlgorithm::Mu)
            };
            let f = multiplicative_update(&a, w.clone(), h.clone(), &cfg).unwrap();
            assert_eq!(f.w[(4, 1)], 0.0);
            assert_eq!(f.h[(0, 7)], 0.0);
            assert_eq!(f.h[(2, 0)], 0.0);
        }
    }

    #[test]
    fn als_recovers_rank_one_quickly() {
        let a = rank_one(12, 9, 7);
        let f = nmf_als(&a, 1, &NmfConfig::for_algorithm(NmfAlgorithm::Als)).unwrap();
        assert!(rel_err(&a, &f) < 1e-6);
    }

    #[test]
    fn als_zeros_are_not_locked() {
        // find a run where an entry of H is clamped to zero at iteration t
        // and positive at t + 1
        let a = random_sparse(12, 15, 0.3, 9);
        let mut found = false;
        'outer: for seed in 0..50 {
            let mut prev: Option<DMatrix<f64>> = None;
            for t in 1..=8 {
                let cfg = NmfConfig {
                    max_iter: t,
                    seed,
                    ..NmfConfig::for_algorithm(NmfAlgorithm::Als)
                };
                let f = nmf_als(&a, 4, &cfg).unwrap();
                if let Some(p) = &prev {
                    if p.iter()
                        .zip(f.h.iter())
                        .any(|(&before, &after)| before == 0.0 && after > 0.0)
                    {
                        found = true;
                        break 'outer;
                    }
                }
                prev = Some(f.h);
            }
        }
        assert!(found, "no zero entry of H ever became positive");
    }

    #[test]
    fn acls_without_ridge_equals_als_bitwise() {
        let a = random_sparse(20, 25, 0.3, 4);
        for seed in 0..5 {
            let base = NmfConfig {
                seed,
                lambda_w: 0.0,
                lambda_h: 0.0,
                ..NmfConfig::for_algorithm(NmfAlgorithm::Acls)
            };
            let acls = nmf_acls(&a, 3, &base).unwrap();
            let als = nmf_als(&a, 3, &base).unwrap();
            assert_eq!(acls, als);
        }
    }

    #[test]
    fn all_algorithms_stay_nonnegative() {
        let a = random_sparse(15, 18, 0.3, 8);
        for alg in [NmfAlgorithm::Mu, NmfAlgorithm::Als, NmfAlgorithm::Acls] {
            for iters in [1, 3, 20] {
                let cfg = NmfConfig {
                    max_iter: iters,
                    ..NmfConfig::for_algorithm(alg)
                };
                let f = factorize(&a, 4, &cfg).unwrap();
                assert!(f.w.iter().chain(f.h.iter()).all(|&v| v >= 0.0));
                assert!(f.history.iter().all(|&e| e.is_finite() && e >= 0.0));
                assert_eq!(f.history.len(), iters);
            }
        }
    }

    #[test]
    fn degenerate_als_survives_singular_normal_matrix() {
        // A has a zero row band, so some W columns collapse to zero
        let a = TermDocMatrix::from_dense(3, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
            .unwrap();
        let f = nmf_als(&a, 3, &NmfConfig::for_algorithm(NmfAlgorithm::Als)).unwrap();
        assert!(f
            .w
            .iter()
            .chain(f.h.iter())
            .all(|&v| v >= 0.0 && v.is_finite()));
        assert!(rel_err(&a, &f) < 1e-6);
    }

    #[test]
    fn ridge_keeps_normal_matrix_definite() {
        let g = DMatrix::zeros(3, 3) + DMatrix::identity(3, 3) * 0.5;
        assert!(Cholesky::new(g).is_some());
    }

    #[test]
    fn bad_k_and_config() {
        let a = random_sparse(4, 6, 0.5, 1);
        assert!(matches!(
            nmf_mu(&a, 0, &NmfConfig::default()),
            Err(Error::BadK { .. })
        ));
        assert!(matches!(
            nmf_als(&a, 5, &NmfConfig::default()),
            Err(Error::BadK { .. })
        ));
        let cfg = NmfConfig {
            max_iter: 0,
            ..Default::default()
        };
        assert!(nmf_acls(&a, 2, &cfg).is_err());
    }

    #[test]
    fn early_stop_shortens_runs() {
        let a = rank_one(8, 8, 3);
        let cfg = NmfConfig {
            early_stop: Some(1e-6),
            ..NmfConfig::for_algorithm(NmfAlgorithm::Als)
        };
        let f = nmf_als(&a, 1, &cfg).unwrap();
        assert!(f.history.len() < 50);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let a = random_sparse(10, 14, 0.4, 6);
        for alg in [NmfAlgorithm::Mu, NmfAlgorithm::Als, NmfAlgorithm::Acls] {
            let cfg = NmfConfig::for_algorithm(alg);
            assert_eq!(
                factorize(&a, 3, &cfg).unwrap(),
                factorize(&a, 3, &cfg).unwrap()
            );
        }
    }
}
