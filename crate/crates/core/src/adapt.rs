//! Feature-based unsupervised domain adaptation: CORAL, the
//! feature-Distribution Adaptor (fDA) and CORAL++.
//!
//! All adaptors produce an [`AdaptationTransform`] that maps out-of-domain
//! row vectors as `x' = (x - pre_shift) * matrix + post_shift`. Only the
//! out-of-domain (training) embeddings are transformed; in-domain data only
//! contributes statistics.
//!
//! CORAL++ re-colors with a covariance whose eigenvalues are z-scored and
//! floored, so its output lives on an O(1) scale regardless of the raw
//! embedding scale. Downstream length normalization makes this global
//! rescaling irrelevant for scoring.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::embedio::{ByteReader, EmbeddingSet};
use crate::linalg::{
    estimate_covariance, sym_eig, sym_power, sym_power_eig, symmetrize, CovarianceStats,
    EigenDecomposition,
};
use crate::{Error, Result};

pub const TRANSFORM_MAGIC: &[u8; 4] = b"ADT1";

/// Relative ridge used by fDA when the out-of-domain covariance cannot be
/// inverted as is.
pub const FDA_RIDGE: f64 = 1e-6;
/// Condition number above which fDA gives up.
pub const FDA_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Identity,
    Coral,
    Fda,
    CoralPP,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Identity, Method::Coral, Method::Fda, Method::CoralPP];

    fn tag(self) -> u8 {
        match self {
            Method::Identity => 0,
            Method::Coral => 1,
            Method::Fda => 2,
            Method::CoralPP => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    /// Name used on the command line and in result tables.
    pub fn name(self) -> &'static str {
        match self {
            Method::Identity => "raw",
            Method::Coral => "coral",
            Method::Fda => "fda",
            Method::CoralPP => "coralpp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "raw" | "identity" => Ok(Method::Identity),
            "coral" => Ok(Method::Coral),
            "fda" => Ok(Method::Fda),
            "coralpp" | "coral++" => Ok(Method::CoralPP),
            other => Err(format!(
                "unknown method '{other}' (expected raw, coral, fda or coralpp)"
            )),
        }
    }
}

/// CORAL++ hyper-parameters: covariance regularization `lambda > 0` and
/// eigenvalue floor `alpha >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoralPPConfig {
    lambda: f64,
    alpha: f64,
}

impl CoralPPConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.1;
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be positive, got {lambda}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(Self { lambda, alpha })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for CoralPPConfig {
    fn default() -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            alpha: Self::DEFAULT_ALPHA,
        }
    }
}

/// In-domain eigenvalue spectrum before and after z-scoring and flooring.
#[derive(Debug, Clone, PartialEq)]
pub struct EigSpectrum {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub floored: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationTransform {
    pub matrix: DMatrix<f64>,
    pub pre_shift: DVector<f64>,
    pub post_shift: DVector<f64>,
    pub method: Method,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    /// Only set by CORAL++ fits; not serialized.
    pub spectrum: Option<EigSpectrum>,
}

impl AdaptationTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            pre_shift: DVector::zeros(dim),
            post_shift: DVector::zeros(dim),
            method: Method::Identity,
            lambda: None,
            alpha: None,
            spectrum: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn linear(matrix: DMatrix<f64>, method: Method) -> Self {
        let d = matrix.nrows();
        Self {
            matrix,
            pre_shift: DVector::zeros(d),
            post_shift: DVector::zeros(d),
            method,
            lambda: None,
            alpha: None,
            spectrum: None,
        }
    }
}

fn check_pair(ood: &CovarianceStats, ind: &CovarianceStats) -> Result<usize> {
    if ood.dim() != ind.dim() {
        return Err(Error::Validation(format!(
            "out-of-domain dimension {} differs from in-domain dimension {}",
            ood.dim(),
            ind.dim()
        )));
    }
    Ok(ood.dim())
}

fn stats_pair(ood: &EmbeddingSet, ind: &EmbeddingSet) -> Result<(CovarianceStats, CovarianceStats)> {
    if ood.dim() != ind.dim() {
        return Err(Error::Validation(format!(
            "out-of-domain dimension {} differs from in-domain dimension {}",
            ood.dim(),
            ind.dim()
        )));
    }
    Ok((estimate_covariance(ood)?, estimate_covariance(ind)?))
}

/// CORAL with an arbitrary ridge: `A = (C_O + r I)^{-1/2} (C_I + r I)^{1/2}`.
/// With `ridge = 0` this is the exact minimizer of `||A^T C_O A - C_I||_F`.
pub fn coral_fit_exact_stats(
    ood: &CovarianceStats,
    ind: &CovarianceStats,
    ridge: f64,
) -> Result<AdaptationTransform> {
    check_pair(ood, ind)?;
    let whiten = sym_power(&ood.cov, -0.5, ridge)?;
    let recolor = sym_power(&ind.cov, 0.5, ridge)?;
    let mut t = AdaptationTransform::linear(whiten * recolor, Method::Coral);
    t.lambda = Some(ridge);
    Ok(t)
}

pub fn coral_fit_exact(
    ood: &EmbeddingSet,
    ind: &EmbeddingSet,
    ridge: f64,
) -> Result<AdaptationTransform> {
    let (o, i) = stats_pair(ood, ind)?;
    coral_fit_exact_stats(&o, &i, ridge)
}

/// Classic CORAL: both covariances regularized with the identity.
pub fn coral_fit_stats(ood: &CovarianceStats, ind: &CovarianceStats) -> Result<AdaptationTransform> {
    coral_fit_exact_stats(ood, ind, 1.0)
}

pub fn coral_fit(ood: &EmbeddingSet, ind: &EmbeddingSet) -> Result<AdaptationTransform> {
    let (o, i) = stats_pair(ood, ind)?;
    coral_fit_stats(&o, &i)
}

/// Picks the ridge fDA needs to invert `C_O`: none when it is well
/// conditioned, otherwise `FDA_RIDGE * trace / D`.
fn fda_ridge(eig: &EigenDecomposition) -> Result<f64> {
    let max = eig.values.max();
    let min = eig.values.min();
    if max > 0.0 && min > max / FDA_MAX_CONDITION {
        return Ok(0.0);
    }
    let ridge = FDA_RIDGE * eig.values.iter().map(|s| s.max(0.0)).sum::<f64>() / eig.dim() as f64;
    let (lo, hi) = (min.max(0.0) + ridge, max + ridge);
    if !(hi > 0.0 && lo > hi / FDA_MAX_CONDITION) {
        return Err(Error::Singular(format!(
            "out-of-domain covariance is ill-conditioned even after ridge {ridge:e}"
        )));
    }
    Ok(ridge)
}

/// Feature-distribution adaptor.
///
/// With `W = C_O^{-1/2}` and `W C_I W = P D P^T`, in-domain variances in the
/// whitened space are floored at one, `D' = max(1, D)`, and each centered
/// out-of-domain vector is mapped through `C_O^{1/2} P D'^{1/2} P^T C_O^{-1/2}`
/// before the in-domain mean is added back.
pub fn fda_fit_stats(ood: &CovarianceStats, ind: &CovarianceStats) -> Result<AdaptationTransform> {
    check_pair(ood, ind)?;
    let eig_o = sym_eig(&ood.cov)?;
    let ridge = fda_ridge(&eig_o)?;
    let whiten = sym_power_eig(&eig_o, -0.5, ridge)?;
    let color = sym_power_eig(&eig_o, 0.5, ridge)?;

    let inner = symmetrize(&(&whiten * &ind.cov * &whiten));
    let eig = sym_eig(&inner)?;
    let floored = eig.values.map(|d| d.max(1.0).sqrt());
    let scale = eig.reconstruct_with(&floored);

    // Column-vector map is color * scale * whiten; rows use its transpose.
    let matrix = whiten * scale * color;
    Ok(AdaptationTransform {
        matrix,
        pre_shift: ood.mean.clone(),
        post_shift: ind.mean.clone(),
        method: Method::Fda,
        lambda: None,
        alpha: None,
        spectrum: None,
    })
}

pub fn fda_fit(ood: &EmbeddingSet, ind: &EmbeddingSet) -> Result<AdaptationTransform> {
    let (o, i) = stats_pair(ood, ind)?;
    fda_fit_stats(&o, &i)
}

/// Z-score normalization of an eigenvalue spectrum, using the population
/// standard deviation.
pub fn zscore_spectrum(s: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if s.len() < 2 {
        return Err(Error::Validation(format!(
            "spectrum needs at least 2 values, got {}",
            s.len()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite eigenvalue".into()));
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(std > 1e-12 * scale) {
        return Err(Error::DegenerateSpectrum(mean));
    }
    Ok((s.iter().map(|v| (v - mean) / std).collect(), mean, std))
}

/// Elementwise `max(alpha, v)`.
pub fn floor_spectrum(normalized: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Validation(format!("alpha must be non-negative, got {alpha}")));
    }
    Ok(normalized.iter().map(|&v| v.max(alpha)).collect())
}

/// The regularized in-domain covariance CORAL++ re-colors with.
#[derive(Debug, Clone)]
pub struct CoralPPTarget {
    pub eig: EigenDecomposition,
    pub spectrum: EigSpectrum,
    pub lambda: f64,
}

impl CoralPPTarget {
    pub fn new(ind_cov: &DMatrix<f64>, cfg: &CoralPPConfig) -> Result<Self> {
        let eig = sym_eig(ind_cov)?;
        let raw: Vec<f64> = eig.values.iter().copied().collect();
        let (normalized, mean, std) = zscore_spectrum(&raw)?;
        let floored = floor_spectrum(&normalized, cfg.alpha())?;
        Ok(Self {
            eig,
            spectrum: EigSpectrum {
                raw,
                normalized,
                floored,
                mean,
                std,
                alpha: cfg.alpha(),
            },
            lambda: cfg.lambda(),
        })
    }

    /// `P diag(v) P^T + lambda I` raised to `p`, reusing the in-domain eigenvectors.
    pub fn power(&self, p: f64) -> DMatrix<f64> {
        let vals = DVector::from_iterator(
            self.spectrum.floored.len(),
            self.spectrum.floored.iter().map(|v| (v + self.lambda).powf(p)),
        );
        self.eig.reconstruct_with(&vals)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.power(1.0)
    }
}

/// CORAL++: whiten with `(C_O + lambda I)^{-1/2}`, re-color with
/// `(P diag(max(alpha, z(s))) P^T + lambda I)^{1/2}`.
pub fn coralpp_fit_stats(
    ood: &CovarianceStats,
    ind: &CovarianceStats,
    cfg: &CoralPPConfig,
) -> Result<AdaptationTransform> {
    check_pair(ood, ind)?;
    let target = CoralPPTarget::new(&ind.cov, cfg)?;
    let whiten = sym_power(&ood.cov, -0.5, cfg.lambda())?;
    let matrix = whiten * target.power(0.5);
    Ok(AdaptationTransform {
        lambda: Some(cfg.lambda()),
        alpha: Some(cfg.alpha()),
        spectrum: Some(target.spectrum),
        ..AdaptationTransform::linear(matrix, Method::CoralPP)
    })
}

pub fn coralpp_fit(
    ood: &EmbeddingSet,
    ind: &EmbeddingSet,
    cfg: &CoralPPConfig,
) -> Result<AdaptationTransform> {
    let (o, i) = stats_pair(ood, ind)?;
    coralpp_fit_stats(&o, &i, cfg)
}

/// Fits the transform selected by `method`; `cfg` is only read by CORAL++.
pub fn fit(
    method: Method,
    ood: &EmbeddingSet,
    ind: &EmbeddingSet,
    cfg: &CoralPPConfig,
) -> Result<AdaptationTransform> {
    match method {
        Method::Identity => {
            if ood.dim() != ind.dim() {
                return Err(Error::Validation(format!(
                    "out-of-domain dimension {} differs from in-domain dimension {}",
                    ood.dim(),
                    ind.dim()
                )));
            }
            Ok(AdaptationTransform::identity(ood.dim()))
        }
        Method::Coral => coral_fit(ood, ind),
        Method::Fda => fda_fit(ood, ind),
        Method::CoralPP => coralpp_fit(ood, ind, cfg),
    }
}

/// Applies `x' = (x - pre_shift) * matrix + post_shift` to every row.
pub fn apply_transform(t: &AdaptationTransform, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if t.dim() != set.dim() {
        return Err(Error::Validation(format!(
            "transform dimension {} does not match embedding dimension {}",
            t.dim(),
            set.dim()
        )));
    }
    if t.method == Method::Identity {
        return Ok(set.clone());
    }
    let mut x = set.vectors().clone();
    for mut row in x.row_iter_mut() {
        row -= t.pre_shift.transpose();
    }
    let mut y = x * &t.matrix;
    for mut row in y.row_iter_mut() {
        row += t.post_shift.transpose();
    }
    set.with_vectors(y)
}

// ---------------------------------------------------------------------------
// Serialization

pub fn encode_transform(t: &AdaptationTransform) -> Result<Vec<u8>> {
    let d = t.dim();
    let dim = u32::try_from(d).map_err(|_| Error::Validation("dimension too large".into()))?;
    let mut out = Vec::with_capacity(4 + 1 + 4 + 16 + 8 * d * (d + 2));
    out.extend_from_slice(TRANSFORM_MAGIC);
    out.push(t.method.tag());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&t.lambda.unwrap_or(f64::NAN).to_le_bytes());
    out.extend_from_slice(&t.alpha.unwrap_or(f64::NAN).to_le_bytes());
    for v in t.pre_shift.iter().chain(t.post_shift.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..d {
        for j in 0..d {
            out.extend_from_slice(&t.matrix[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_transform(bytes: &[u8]) -> Result<AdaptationTransform> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(TRANSFORM_MAGIC)?;
    let tag = r.u8("method tag")?;
    let method = Method::from_tag(tag)
        .ok_or_else(|| Error::parse("offset 4", format!("unknown method tag {tag}")))?;
    let d = r.u32("dimension")? as usize;
    if d == 0 {
        return Err(Error::Validation("transform dimension is zero".into()));
    }
    let need = d.saturating_mul(d.saturating_add(2)).saturating_mul(8).saturating_add(16);
    if need != r.remaining() {
        return Err(Error::parse(
            format!("offset {}", r.offset()),
            format!("dimension {d} needs {need} more bytes, found {}", r.remaining()),
        ));
    }
    let opt = |v: f64| (!v.is_nan()).then_some(v);
    let lambda = opt(r.f64("lambda")?);
    let alpha = opt(r.f64("alpha")?);
    let mut read_vec = |what: &str| -> Result<DVector<f64>> {
        let mut v = DVector::zeros(d);
        for i in 0..d {
            v[i] = r.f64(what)?;
        }
        Ok(v)
    };
    let pre_shift = read_vec("pre_shift")?;
    let post_shift = read_vec("post_shift")?;
    let mut matrix = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            matrix[(i, j)] = r.f64("matrix")?;
        }
    }
    r.finish()?;
    if matrix.iter().chain(pre_shift.iter()).chain(post_shift.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("transform has non-finite entries".into()));
    }
    Ok(AdaptationTransform {
        matrix,
        pre_shift,
        post_shift,
        method,
        lambda,
        alpha,
        spectrum: None,
    })
}

pub fn write_transform(t: &AdaptationTransform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_transform(t)?).map_err(|e| Error::io(path, e))
}

pub fn read_transform(path: impl AsRef<Path>) -> Result<AdaptationTransform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_transform(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn stats(cov: DMatrix<f64>) -> CovarianceStats {
        CovarianceStats {
            mean: DVector::zeros(cov.nrows()),
            cov,
            count: 100,
        }
    }

    /// Four points per axis pair whose unbiased covariance is exactly `diag(v)`
    /// up to roundoff: `(+-a, 0)` and `(0, +-b)` with `2a^2/3 = v0`.
    fn axis_set(v: &[f64], domain: &str) -> EmbeddingSet {
        let d = v.len();
        let mut rows = Vec::new();
        for (k, &var) in v.iter().enumerate() {
            // 2d points, each axis contributes two; divisor 2d-1
            let a = (var * (2 * d - 1) as f64 / 2.0).sqrt();
            for sign in [1.0, -1.0] {
                let mut r = vec![0.0; d];
                r[k] = sign * a;
                rows.push(r);
            }
        }
        let ids = (0..rows.len()).map(|i| format!("{domain}{i}")).collect();
        EmbeddingSet::from_rows(ids, None, domain, &rows).unwrap()
    }

    #[test]
    fn axis_set_has_expected_covariance() {
        let c = estimate_covariance(&axis_set(&[3.0, 0.0], "o")).unwrap();
        assert!((c.cov - diag(&[3.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn coral_diagonal_example() {
        let t = coral_fit(&axis_set(&[3.0, 0.0], "o"), &axis_set(&[8.0, 0.0], "i")).unwrap();
        assert!((t.matrix - diag(&[1.5, 1.0])).amax() < 1e-12);
        assert_eq!(t.pre_shift, DVector::zeros(2));
    }

    #[test]
    fn coral_matching_covariance_preserves_ood() {
        let ood = axis_set(&[2.0, 5.0, 1.0], "o");
        let t = coral_fit(&ood, &axis_set(&[2.0, 5.0, 1.0], "i")).unwrap();
        let adapted = apply_transform(&t, &ood).unwrap();
        let a = estimate_covariance(&adapted).unwrap().cov;
        let b = estimate_covariance(&ood).unwrap().cov;
        assert!(crate::linalg::rel_frobenius(&a, &b) < 1e-8);
    }

    #[test]
    fn coral_insufficient_data() {
        let one = EmbeddingSet::from_rows(vec!["a".into()], None, "o", &[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            coral_fit(&one, &axis_set(&[1.0, 1.0], "i")),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn coral_exact_ridge_one_is_coral() {
        let ood = axis_set(&[2.0, 0.5], "o");
        let ind = axis_set(&[4.0, 1.5], "i");
        let a = coral_fit(&ood, &ind).unwrap();
        let b = coral_fit_exact(&ood, &ind, 1.0).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn coral_exact_singular() {
        assert!(matches!(
            coral_fit_exact_stats(&stats(diag(&[1.0, 0.0])), &stats(diag(&[1.0, 1.0])), 0.0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn fda_examples() {
        let t = fda_fit_stats(&stats(diag(&[1.0, 1.0])), &stats(diag(&[4.0, 0.25]))).unwrap();
        assert!((t.matrix - diag(&[2.0, 1.0])).amax() < 1e-12);

        let c = stats(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let t = fda_fit_stats(&c, &c).unwrap();
        assert!((t.matrix - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn fda_mean_alignment() {
        let ood = axis_set(&[1.0, 2.0], "o");
        let ind_rows: Vec<Vec<f64>> = axis_set(&[1.0, 2.0], "i")
            .vectors()
            .row_iter()
            .map(|r| vec![r[0] + 3.0, r[1] - 1.0])
            .collect();
        let ind = EmbeddingSet::from_rows(
            (0..ind_rows.len()).map(|i| format!("i{i}")).collect(),
            None,
            "i",
            &ind_rows,
        )
        .unwrap();
        let t = fda_fit(&ood, &ind).unwrap();
        let adapted = apply_transform(&t, &ood).unwrap();
        let m = crate::linalg::mean_rows(adapted.vectors());
        assert!((m - DVector::from_vec(vec![3.0, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn fda_insufficient_in_domain() {
        let one = EmbeddingSet::from_rows(vec!["a".into()], None, "i", &[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            fda_fit(&axis_set(&[1.0, 1.0], "o"), &one),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fda_rank_deficient_ood_uses_ridge() {
        let t = fda_fit_stats(&stats(diag(&[1.0, 0.0])), &stats(diag(&[2.0, 2.0]))).unwrap();
        assert!(t.matrix.iter().all(|v| v.is_finite()));
        assert!(matches!(
            fda_fit_stats(&stats(diag(&[0.0, 0.0])), &stats(diag(&[2.0, 2.0]))),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn zscore_examples() {
        let (z, mean, std) = zscore_spectrum(&[1.0, 2.0, 3.0]).unwrap();
        let e = (1.5f64).sqrt();
        assert!((z[0] + e).abs() < 1e-15 && z[1].abs() < 1e-15 && (z[2] - e).abs() < 1e-15);
        assert_eq!(mean, 2.0);
        assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(zscore_spectrum(&[5.0, 5.0, 5.0]), Err(Error::DegenerateSpectrum(_))));
        assert!(zscore_spectrum(&[1.0]).is_err());
    }

    #[test]
    fn floor_examples() {
        let e = (1.5f64).sqrt();
        assert_eq!(floor_spectrum(&[e, 0.0, -e], 0.5).unwrap(), vec![e, 0.5, 0.5]);
        assert_eq!(floor_spectrum(&[2.0, -1.0], 0.0).unwrap(), vec![2.0, 0.0]);
        assert_eq!(floor_spectrum(&[1.0, -1.0], 3.0).unwrap(), vec![3.0, 3.0]);
        assert!(floor_spectrum(&[1.0], -0.1).is_err());
    }

    #[test]
    fn coralpp_diagonal_trace() {
        let cfg = CoralPPConfig::new(0.1, 0.5).unwrap();
        let t = coralpp_fit_stats(&stats(diag(&[1.0, 1.0])), &stats(diag(&[4.0, 1.0])), &cfg).unwrap();
        let sp = t.spectrum.as_ref().unwrap();
        assert_eq!(sp.raw, vec![4.0, 1.0]);
        assert_eq!((sp.mean, sp.std), (2.5, 1.5));
        assert_eq!(sp.normalized, vec![1.0, -1.0]);
        assert_eq!(sp.floored, vec![1.0, 0.5]);
        let expected = diag(&[1.0, (0.6f64 / 1.1).sqrt()]);
        assert!((&t.matrix - expected).amax() < 1e-12);
        assert!((t.matrix[(1, 1)] - 0.738_548_945_875_996_5).abs() < 1e-8);

        let row = EmbeddingSet::from_rows(vec!["x".into()], None, "o", &[vec![1.0, 1.0]]).unwrap();
        let out = apply_transform(&t, &row).unwrap();
        assert!((out.vectors()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((out.vectors()[(0, 1)] - 0.738_548_95).abs() < 1e-8);
    }

    #[test]
    fn coralpp_config_constraints() {
        assert!(CoralPPConfig::new(0.0, 0.5).is_err());
        assert!(CoralPPConfig::new(0.1, -0.5).is_err());
        assert!(CoralPPConfig::new(0.1, 0.0).is_ok());
        let d = CoralPPConfig::default();
        assert_eq!((d.lambda(), d.alpha()), (0.1, 0.5));
    }

    #[test]
    fn coralpp_degenerate_in_domain() {
        let cfg = CoralPPConfig::default();
        assert!(matches!(
            coralpp_fit_stats(&stats(diag(&[1.0, 2.0])), &stats(diag(&[3.0, 3.0])), &cfg),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn apply_identity_is_bitwise() {
        let set = axis_set(&[1.0, 2.0], "o");
        let out = apply_transform(&AdaptationTransform::identity(2), &set).unwrap();
        assert_eq!(out, set);
    }

    #[test]
    fn apply_centering_only() {
        let set = axis_set(&[1.0, 2.0], "o");
        let moved = set.with_vectors(set.vectors().map(|v| v + 4.0)).unwrap();
        let mut t = AdaptationTransform::identity(2);
        t.method = Method::Coral;
        t.pre_shift = crate::linalg::mean_rows(moved.vectors());
        let out = apply_transform(&t, &moved).unwrap();
        assert!(crate::linalg::mean_rows(out.vectors()).amax() < 1e-12);
        assert_eq!(out.ids(), set.ids());
    }

    #[test]
    fn apply_dimension_mismatch() {
        let set = axis_set(&[1.0, 2.0], "o");
        assert!(matches!(
            apply_transform(&AdaptationTransform::identity(3), &set),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn transform_serialization() {
        let cfg = CoralPPConfig::default();
        let t = coralpp_fit_stats(
            &stats(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])),
            &stats(diag(&[4.0, 1.0])),
            &cfg,
        )
        .unwrap();
        let back = decode_transform(&encode_transform(&t).unwrap()).unwrap();
        assert_eq!(back.matrix, t.matrix);
        assert_eq!((back.lambda, back.alpha, back.method), (Some(0.1), Some(0.5), Method::CoralPP));
        let c = decode_transform(&encode_transform(&AdaptationTransform::identity(3)).unwrap()).unwrap();
        assert_eq!((c.lambda, c.alpha), (None, None));

        let bytes = encode_transform(&t).unwrap();
        assert!(decode_transform(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_transform(&bad).is_err());
    }

    proptest! {
        #[test]
        fn floor_monotone_in_alpha(v in prop::collection::vec(-3.0f64..3.0, 1..20), a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fl = floor_spectrum(&v, lo).unwrap();
            let fh = floor_spectrum(&v, hi).unwrap();
            prop_assert!(fl.iter().zip(&fh).all(|(x, y)| x <= y));
            prop_assert!(fh.iter().all(|&x| x >= hi));
        }

        #[test]
        fn zscore_moments(v in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
            let (z, _, _) = zscore_spectrum(&v).unwrap();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((std - 1.0).abs() < 1e-12);
            for (i, j) in (0..v.len()).flat_map(|i| (0..v.len()).map(move |j| (i, j))) {
                if v[i] < v[j] { prop_assert!(z[i] < z[j]); }
            }
        }
    }
}
