#![allow(dead_code)]

use coralpp::embedio::EmbeddingSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, d, d).qr().q()
}

/// `n` rows drawn as `z * mix + mean` with `z` standard normal.
pub fn correlated_rows(rng: &mut ChaCha8Rng, n: usize, mix: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = gaussian_matrix(rng, n, mix.nrows()) * mix;
    for mut r in x.row_iter_mut() {
        r += mean.transpose();
    }
    x
}

pub fn unlabeled(prefix: &str, x: DMatrix<f64>) -> EmbeddingSet {
    let ids = (0..x.nrows()).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingSet::new(ids, None, prefix, x).unwrap()
}

pub fn labeled(prefix: &str, x: DMatrix<f64>, labels: Vec<String>) -> EmbeddingSet {
    let ids = (0..x.nrows()).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingSet::new(ids, Some(labels), prefix, x).unwrap()
}

/// Sample covariance with the N-1 divisor, computed naively.
pub fn naive_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = x.row_sum() / n as f64;
    let mut c = DMatrix::zeros(x.ncols(), x.ncols());
    for r in x.row_iter() {
        let d = r - &mean;
        c += d.transpose() * &d;
    }
    c / (n as f64 - 1.0)
}

/// Scores on a grid of exactly representable values so that ties occur and
/// affine maps stay exact.
pub fn tied_scores(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.random_range(-24i32..=24) as f64) * 0.125 + shift)
        .collect()
}
