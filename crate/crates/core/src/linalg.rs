//! Symmetric-matrix numerics: covariance estimation, eigendecomposition and
//! fractional matrix powers.
//!
//! Every routine is deterministic: the same input produces bitwise the same
//! output. Covariances are accumulated over rows in a canonical (sorted)
//! order so they are also invariant to the order of the input rows.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embedio::EmbeddingSet;
use crate::{Error, Result};

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Negative eigenvalues down to `-PSD_TOL * max_eig` are treated as roundoff and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
/// Smallest `min_eig / max_eig` accepted when inverting.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Mean vector, unbiased covariance and sample count of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl CovarianceStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Orthonormal eigenvectors (columns of `vectors`) with descending `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `P * diag(values) * P^T` for caller-supplied values.
    pub fn reconstruct_with(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let scaled = scale_columns(&self.vectors, values);
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.values)
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Row indices sorted lexicographically by row contents.
fn canonical_row_order(x: &DMatrix<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        for j in 0..x.ncols() {
            match x[(a, j)].total_cmp(&x[(b, j)]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(&b)
    });
    order
}

/// Column means, accumulated in canonical row order.
pub fn mean_rows(x: &DMatrix<f64>) -> DVector<f64> {
    let order = canonical_row_order(x);
    mean_in_order(x, &order)
}

fn mean_in_order(x: &DMatrix<f64>, order: &[usize]) -> DVector<f64> {
    let mut sum = DVector::zeros(x.ncols());
    for &i in order {
        for j in 0..x.ncols() {
            sum[j] += x[(i, j)];
        }
    }
    sum / order.len() as f64
}

/// Mean and unbiased (N-1) covariance of the rows of `x`.
pub fn covariance_of_rows(x: &DMatrix<f64>) -> Result<CovarianceStats> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in covariance input".into()));
    }
    let order = canonical_row_order(x);
    let mean = mean_in_order(x, &order);
    let mut centered = x.select_rows(order.iter());
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok(CovarianceStats {
        mean,
        cov: symmetrize(&cov),
        count: n,
    })
}

pub fn estimate_covariance(set: &EmbeddingSet) -> Result<CovarianceStats> {
    covariance_of_rows(set.vectors())
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Validation(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix (implicit symmetric QR on the
/// tridiagonal form).
///
/// Eigenvalues are sorted descending; each eigenvector is signed so that its
/// first component with magnitude above `1e-12` is positive.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_square_finite(m)?;
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (max |m - m^T| = {asym:e}, max |m| = {scale:e})"
        )));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    for mut col in vectors.column_iter_mut() {
        if let Some(&lead) = col.iter().find(|v| v.abs() > 1e-12) {
            if lead < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(EigenDecomposition { vectors, values })
}

/// Validates and clamps a PSD spectrum, then applies `(s + ridge)^p`.
fn powered_spectrum(values: &DVector<f64>, p: f64, ridge: f64) -> Result<DVector<f64>> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Validation(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let max = values.max();
    let min = values.min();
    let tol = PSD_TOL * max.max(0.0);
    if min < -tol {
        return Err(Error::NotPsd { min_eig: min, max_eig: max });
    }
    let shifted = values.map(|s| s.max(0.0) + ridge);
    if p < 0.0 {
        let (lo, hi) = (shifted.min(), shifted.max());
        if !(lo > SINGULAR_TOL * hi) {
            return Err(Error::Singular(format!(
                "cannot raise to power {p}: eigenvalues after ridge span [{lo:e}, {hi:e}]"
            )));
        }
    }
    Ok(shifted.map(|s| s.powf(p)))
}

/// `(m + ridge*I)^p` for a symmetric PSD matrix, via its eigendecomposition.
pub fn sym_power(m: &DMatrix<f64>, p: f64, ridge: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    sym_power_eig(&eig, p, ridge)
}

/// As [`sym_power`], reusing an existing decomposition.
pub fn sym_power_eig(eig: &EigenDecomposition, p: f64, ridge: f64) -> Result<DMatrix<f64>> {
    let powered = powered_spectrum(&eig.values, p, ridge)?;
    Ok(eig.reconstruct_with(&powered))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn sym_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sym_power(m, -1.0, 0.0)
}

/// Relative Frobenius distance `||a - b|| / ||b||` (absolute when `b` is zero).
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = (a - b).norm();
    let nb = b.norm();
    if nb > 0.0 {
        d / nb
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(data: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(data.len(), data[0].len(), |i, j| data[i][j])
    }

    #[test]
    fn two_point_covariance() {
        let c = covariance_of_rows(&rows(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(c.mean, DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(c.cov, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(c.count, 2);
    }

    #[test]
    fn identical_rows_zero_covariance() {
        let c = covariance_of_rows(&rows(&[&[3.0, -1.0], &[3.0, -1.0], &[3.0, -1.0]])).unwrap();
        assert_eq!(c.cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn single_row_insufficient() {
        assert!(matches!(
            covariance_of_rows(&rows(&[&[1.0, 2.0]])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn eig_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert!((&e.vectors - expected).amax() < 1e-14);
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert!((e.values.clone() - DVector::repeat(3, 1.0)).amax() < 1e-14);
        assert!(rel_frobenius(&e.reconstruct(), &DMatrix::identity(3, 3)) < 1e-10);
    }

    #[test]
    fn eig_two_by_two() {
        let e = sym_eig(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors.column(0) - DVector::from_vec(vec![h, h])).amax() < 1e-14);
        assert!((e.vectors.column(1) - DVector::from_vec(vec![h, -h])).amax() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn power_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sym_power(&m, 0.5, 0.0).unwrap();
        assert!((r - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let r = sym_power(&m, -0.5, 1.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 2f64.sqrt(), 1.0]));
        assert!((r - expected).amax() < 1e-14);
    }

    #[test]
    fn power_errors() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(sym_power(&m, -0.5, 0.0), Err(Error::Singular(_))));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(sym_power(&m, 0.5, 0.0), Err(Error::NotPsd { .. })));
        // roundoff-sized negatives are clamped
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-13]));
        let r = sym_power(&m, 0.5, 0.0).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    fn random_psd(seed: u64, d: usize) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(d, d + 2, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose()
    }

    proptest! {
        #[test]
        fn sqrt_squared_reconstructs(seed in any::<u64>(), d in 1usize..12) {
            let m = random_psd(seed, d);
            let r = sym_power(&m, 0.5, 0.0).unwrap();
            prop_assert!(rel_frobenius(&(&r * &r), &m) < 1e-8);
            let id = sym_power(&m, 1.0, 0.0).unwrap();
            prop_assert!(rel_frobenius(&id, &m) < 1e-10);
        }

        #[test]
        fn whitening_recoloring_inverse_pair(seed in any::<u64>(), d in 1usize..12, ridge in 0.01f64..2.0) {
            let m = random_psd(seed, d);
            let w = sym_power(&m, -0.5, ridge).unwrap();
            let c = sym_power(&m, 0.5, ridge).unwrap();
            prop_assert!((&w * &c - DMatrix::identity(d, d)).amax() < 1e-8);
        }

        #[test]
        fn eig_invariants_and_determinism(seed in any::<u64>(), d in 1usize..16) {
            let m = random_psd(seed, d) - DMatrix::identity(d, d);
            let e = sym_eig(&m).unwrap();
            let ptp = e.vectors.transpose() * &e.vectors;
            prop_assert!((ptp - DMatrix::identity(d, d)).amax() < 1e-10);
            prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(rel_frobenius(&e.reconstruct(), &m) < 1e-10);
            let again = sym_eig(&m).unwrap();
            prop_assert!(e.vectors.iter().zip(again.vectors.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(e.values.iter().zip(again.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn covariance_translation_invariant(seed in any::<u64>(), shift in -100.0f64..100.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
            let moved = x.map(|v| v + shift);
            let a = covariance_of_rows(&x).unwrap();
            let b = covariance_of_rows(&moved).unwrap();
            prop_assert!(rel_frobenius(&b.cov, &a.cov) < 1e-10);
        }

        #[test]
        fn covariance_row_order_invariant(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(25, 3, |_, _| rng.random_range(-5.0..5.0));
            let mut perm: Vec<usize> = (0..25).collect();
            perm.shuffle(&mut rng);
            let y = x.select_rows(perm.iter());
            let a = covariance_of_rows(&x).unwrap();
            let b = covariance_of_rows(&y).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
