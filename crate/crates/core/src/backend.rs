//! Speaker-verification scoring back-end.
//!
//! Stages run in a fixed order: centering, PCA, length normalization, LDA
//! and a two-covariance Gaussian PLDA model. Cosine scoring stops after an
//! earlier stage (length normalization by default).
//!
//! During fitting the training embeddings are centered with their own mean;
//! the stored `center_mean` comes from a separate centering set (normally
//! in-domain data) and is what evaluation embeddings are centered with.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::embedio::{ByteReader, EmbeddingSet, ScoreSet, TrialList};
use crate::linalg::{covariance_of_rows, mean_rows, sym_eig, sym_inverse, sym_power, symmetrize};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"BKD1";
pub const MODEL_VERSION: u16 = 1;
pub const DEFAULT_D1: usize = 200;
pub const DEFAULT_D2: usize = 100;
/// Relative ridge on the within-class scatter before LDA whitening.
pub const LDA_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Depth {
    Centered,
    Pca,
    Lnorm,
    Lda,
}

impl FromStr for Depth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "centered" => Ok(Depth::Centered),
            "pca" => Ok(Depth::Pca),
            "lnorm" => Ok(Depth::Lnorm),
            "lda" => Ok(Depth::Lda),
            other => Err(format!(
                "unknown depth '{other}' (expected centered, pca, lnorm or lda)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Plda,
    Cosine,
}

impl Scoring {
    pub const ALL: [Scoring; 2] = [Scoring::Plda, Scoring::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            Scoring::Plda => "plda",
            Scoring::Cosine => "cosine",
        }
    }
}

impl FromStr for Scoring {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plda" => Ok(Scoring::Plda),
            "cosine" | "cds" => Ok(Scoring::Cosine),
            other => Err(format!("unknown scoring '{other}' (expected plda or cosine)")),
        }
    }
}

/// Two-covariance PLDA parameters: `x = mu + y + e`, `y ~ N(0, between)`,
/// `e ~ N(0, within)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaParams {
    pub mu: DVector<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendModel {
    pub center_mean: DVector<f64>,
    /// D x d1, orthonormal columns.
    pub pca: DMatrix<f64>,
    /// d1 x d2.
    pub lda: Option<DMatrix<f64>>,
    pub plda: Option<PldaParams>,
}

impl BackendModel {
    pub fn input_dim(&self) -> usize {
        self.center_mean.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.input_dim(),
            self.pca.ncols(),
            self.lda.as_ref().map_or(0, |l| l.ncols()),
        )
    }

    pub fn max_depth(&self) -> Depth {
        if self.lda.is_some() {
            Depth::Lda
        } else {
            Depth::Lnorm
        }
    }
}

/// Top-`d` eigenvectors of the total covariance of `x` (rows are samples).
pub fn fit_pca(x: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 || d > x.ncols() {
        return Err(Error::Validation(format!(
            "PCA dimension {d} must be in 1..={}",
            x.ncols()
        )));
    }
    let stats = covariance_of_rows(x)?;
    let eig = sym_eig(&stats.cov)?;
    Ok(eig.vectors.columns(0, d).into_owned())
}

/// Per-class row indices, ordered by label.
fn group_by_label(labels: &[String]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_str()).or_default().push(i);
    }
    groups
}

/// Within- and between-class scatter (both normalized by N).
pub fn scatter_matrices(x: &DMatrix<f64>, labels: &[String]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let n = x.nrows() as f64;
    let mean = mean_rows(x);
    let mut sw = DMatrix::zeros(d, d);
    let mut sb = DMatrix::zeros(d, d);
    for idx in group_by_label(labels).values() {
        let rows = x.select_rows(idx.iter());
        let m = mean_rows(&rows);
        let mut c = rows;
        for mut r in c.row_iter_mut() {
            r -= m.transpose();
        }
        sw += c.transpose() * &c;
        let dm = &m - &mean;
        sb += (&dm * dm.transpose()) * idx.len() as f64;
    }
    (symmetrize(&(sw / n)), symmetrize(&(sb / n)))
}

/// Fisher LDA: top-`d` generalized eigenvectors of `(S_b, S_w)`.
///
/// Columns are scaled so that the projected within-class scatter is the
/// identity.
pub fn fit_lda(x: &DMatrix<f64>, labels: &[String], d: usize) -> Result<DMatrix<f64>> {
    let classes = group_by_label(labels).len();
    if classes < 2 {
        return Err(Error::InsufficientData(format!(
            "LDA needs at least 2 classes, got {classes}"
        )));
    }
    if d == 0 || d > x.ncols() || d > classes - 1 {
        return Err(Error::Validation(format!(
            "LDA dimension {d} must be in 1..={}",
            x.ncols().min(classes - 1)
        )));
    }
    let (sw, sb) = scatter_matrices(x, labels);
    let ridge = LDA_RIDGE * sw.trace() / sw.nrows() as f64;
    let whiten = sym_power(&sw, -0.5, ridge)?;
    let inner = symmetrize(&(&whiten * sb * &whiten));
    let eig = sym_eig(&inner)?;
    Ok(whiten * eig.vectors.columns(0, d))
}

/// Two-covariance PLDA by moments.
///
/// `within` is the pooled within-speaker covariance; `between` is the
/// covariance of speaker means minus `within / n_h` (harmonic mean of
/// utterances per speaker), with negative eigenvalues clamped to zero.
pub fn fit_plda(x: &DMatrix<f64>, labels: &[String]) -> Result<PldaParams> {
    let groups = group_by_label(labels);
    let s = groups.len();
    if s < 2 {
        return Err(Error::InsufficientData(format!(
            "PLDA needs at least 2 speakers, got {s}"
        )));
    }
    if let Some((spk, idx)) = groups.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "speaker '{spk}' has {} utterance(s); PLDA needs at least 2",
            idx.len()
        )));
    }
    let d = x.ncols();
    let n = x.nrows();
    let mut within = DMatrix::zeros(d, d);
    let mut means = DMatrix::zeros(s, d);
    let mut inv_count_sum = 0.0;
    for (k, idx) in groups.values().enumerate() {
        let rows = x.select_rows(idx.iter());
        let m = mean_rows(&rows);
        let mut c = rows;
        for mut r in c.row_iter_mut() {
            r -= m.transpose();
        }
        within += c.transpose() * &c;
        means.set_row(k, &m.transpose());
        inv_count_sum += 1.0 / idx.len() as f64;
    }
    let within = symmetrize(&(within / (n - s) as f64));
    let harmonic = s as f64 / inv_count_sum;
    let mean_cov = covariance_of_rows(&means)?.cov;
    let raw_between = symmetrize(&(mean_cov - &within / harmonic));
    let eig = sym_eig(&raw_between)?;
    let between = eig.reconstruct_with(&eig.values.map(|v| v.max(0.0)));
    // positive definiteness check
    sym_inverse(&within)?;
    Ok(PldaParams {
        mu: mean_rows(x),
        between,
        within,
    })
}

/// Precomputed quadratic form of the PLDA log-likelihood ratio:
/// `llr(e, t) = e'Qe/2 + t'Qt/2 + e'Pt + c` on mean-removed vectors.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eig(m)?;
    if eig.values.min() <= 0.0 {
        return Err(Error::Singular("covariance is not positive definite".into()));
    }
    Ok(eig.values.iter().map(|v| v.ln()).sum())
}

impl PldaScorer {
    /// With `T = B + W` and the Schur complement `S = T - B T^{-1} B`:
    /// `Q = T^{-1} - S^{-1}`, `P = T^{-1} B S^{-1}` and
    /// `c = -(ln|T| + ln|S|)/2 + ln|T|`.
    pub fn new(params: &PldaParams) -> Result<Self> {
        let total = &params.between + &params.within;
        let total_inv = sym_inverse(&total)?;
        let schur = symmetrize(&(&total - &params.between * &total_inv * &params.between));
        let schur_inv = sym_inverse(&schur)?;
        let q = symmetrize(&(&total_inv - &schur_inv));
        let p = symmetrize(&(&total_inv * &params.between * &schur_inv));
        let ld_total = log_det_spd(&total)?;
        let ld_schur = log_det_spd(&schur)?;
        Ok(Self {
            mu: params.mu.clone(),
            q,
            p,
            constant: 0.5 * (ld_total - ld_schur),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn score(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
        if enroll.len() != self.dim() || test.len() != self.dim() {
            return Err(Error::Validation(format!(
                "PLDA expects dimension {}, got {} and {}",
                self.dim(),
                enroll.len(),
                test.len()
            )));
        }
        let e = enroll - &self.mu;
        let t = test - &self.mu;
        let qe = &self.q * &e;
        let qt = &self.q * &t;
        let pt = &self.p * &t;
        let pe = &self.p * &e;
        // average of e'Pt and t'Pe keeps the score exactly symmetric
        let cross = 0.5 * (e.dot(&pt) + t.dot(&pe));
        Ok(0.5 * e.dot(&qe) + 0.5 * t.dot(&qt) + cross + self.constant)
    }
}

pub fn plda_score(model: &BackendModel, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
    let plda = model
        .plda
        .as_ref()
        .ok_or_else(|| Error::State("model has no PLDA stage".into()))?;
    PldaScorer::new(plda)?.score(enroll, test)
}

pub fn cosine_score(enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
    if enroll.len() != test.len() {
        return Err(Error::Validation(format!(
            "cosine of vectors with dimensions {} and {}",
            enroll.len(),
            test.len()
        )));
    }
    let (ne, nt) = (enroll.norm(), test.norm());
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::DegenerateInput("cosine of a zero vector".into()));
    }
    Ok((enroll.dot(test) / (ne * nt)).clamp(-1.0, 1.0))
}

fn length_normalize(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::DegenerateInput("cannot length-normalize a zero vector".into()));
    }
    Ok(v / n)
}

/// Runs `x` through the model's stages up to and including `depth`.
pub fn transform_embedding(model: &BackendModel, x: &DVector<f64>, depth: Depth) -> Result<DVector<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::Validation(format!(
            "embedding dimension {} does not match model dimension {}",
            x.len(),
            model.input_dim()
        )));
    }
    let v = x - &model.center_mean;
    if depth == Depth::Centered {
        return Ok(v);
    }
    let v = model.pca.tr_mul(&v);
    if depth == Depth::Pca {
        return Ok(v);
    }
    let v = length_normalize(v)?;
    if depth == Depth::Lnorm {
        return Ok(v);
    }
    let lda = model
        .lda
        .as_ref()
        .ok_or_else(|| Error::State("model has no LDA stage".into()))?;
    Ok(lda.tr_mul(&v))
}

fn lnorm_rows(x: &mut DMatrix<f64>) -> Result<()> {
    for mut r in x.row_iter_mut() {
        let n = r.norm();
        if n == 0.0 {
            return Err(Error::DegenerateInput(
                "zero vector at length normalization".into(),
            ));
        }
        r /= n;
    }
    Ok(())
}

fn check_dims(train: &EmbeddingSet, centering: &EmbeddingSet, d1: usize) -> Result<()> {
    if centering.dim() != train.dim() {
        return Err(Error::Validation(format!(
            "centering set dimension {} differs from training dimension {}",
            centering.dim(),
            train.dim()
        )));
    }
    if d1 == 0 || d1 > train.dim() {
        return Err(Error::Validation(format!(
            "d1 = {d1} must be in 1..={}",
            train.dim()
        )));
    }
    Ok(())
}

/// Centered-and-projected, length-normalized training rows plus the PCA basis.
fn fit_front(train: &EmbeddingSet, d1: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut x = train.vectors().clone();
    let own_mean = mean_rows(&x);
    for mut r in x.row_iter_mut() {
        r -= own_mean.transpose();
    }
    let pca = fit_pca(&x, d1)?;
    let mut y = x * &pca;
    lnorm_rows(&mut y)?;
    Ok((pca, y))
}

/// Fits centering, PCA and length normalization only (enough for cosine
/// scoring). Training labels are not needed.
pub fn fit_backend_cosine(train: &EmbeddingSet, centering_set: &EmbeddingSet, d1: usize) -> Result<BackendModel> {
    check_dims(train, centering_set, d1)?;
    if train.len() < 2 {
        return Err(Error::InsufficientData("training set needs at least 2 embeddings".into()));
    }
    let (pca, _) = fit_front(train, d1)?;
    Ok(BackendModel {
        center_mean: mean_rows(centering_set.vectors()),
        pca,
        lda: None,
        plda: None,
    })
}

/// Fits the full chain on labeled (already adapted) training embeddings.
pub fn fit_backend(
    train: &EmbeddingSet,
    centering_set: &EmbeddingSet,
    d1: usize,
    d2: usize,
) -> Result<BackendModel> {
    check_dims(train, centering_set, d1)?;
    let labels = train
        .labels()
        .ok_or_else(|| Error::Validation("training set must carry speaker labels".into()))?;
    let speakers = group_by_label(labels).len();
    if speakers < 2 {
        return Err(Error::InsufficientData(format!(
            "back-end training needs at least 2 speakers, got {speakers}"
        )));
    }
    if d2 == 0 || d2 > d1 || d2 > speakers - 1 {
        return Err(Error::Validation(format!(
            "d2 = {d2} must be in 1..={} (d1 = {d1}, {speakers} speakers)",
            d1.min(speakers - 1)
        )));
    }
    let (pca, y) = fit_front(train, d1)?;
    let lda = fit_lda(&y, labels, d2)?;
    let z = y * &lda;
    let plda = fit_plda(&z, labels)?;
    Ok(BackendModel {
        center_mean: mean_rows(centering_set.vectors()),
        pca,
        lda: Some(lda),
        plda: Some(plda),
    })
}

fn transform_set(model: &BackendModel, set: &EmbeddingSet, depth: Depth) -> Result<Vec<DVector<f64>>> {
    (0..set.len())
        .map(|i| transform_embedding(model, &set.row(i), depth))
        .collect()
}

/// Scores every trial. Cosine scoring uses vectors at `cosine_depth`; PLDA
/// always works at LDA depth.
pub fn score_trials_at(
    model: &BackendModel,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &TrialList,
    scoring: Scoring,
    cosine_depth: Depth,
) -> Result<ScoreSet> {
    fn index(set: &EmbeddingSet) -> std::collections::HashMap<&str, usize> {
        set.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
    let (ei, ti) = (index(enroll), index(test));
    let mut pos = Vec::with_capacity(trials.len());
    for (e, t) in trials.pairs() {
        let a = *ei.get(e.as_str()).ok_or_else(|| Error::Lookup(format!("enroll id '{e}'")))?;
        let b = *ti.get(t.as_str()).ok_or_else(|| Error::Lookup(format!("test id '{t}'")))?;
        pos.push((a, b));
    }

    let depth = match scoring {
        Scoring::Plda => Depth::Lda,
        Scoring::Cosine => cosine_depth,
    };
    let ev = transform_set(model, enroll, depth)?;
    let tv = transform_set(model, test, depth)?;
    let scores: Vec<f64> = match scoring {
        Scoring::Plda => {
            let plda = model
                .plda
                .as_ref()
                .ok_or_else(|| Error::State("model has no PLDA stage".into()))?;
            let scorer = PldaScorer::new(plda)?;
            pos.par_iter()
                .map(|&(a, b)| scorer.score(&ev[a], &tv[b]))
                .collect::<Result<_>>()?
        }
        Scoring::Cosine => pos
            .par_iter()
            .map(|&(a, b)| cosine_score(&ev[a], &tv[b]))
            .collect::<Result<_>>()?,
    };
    ScoreSet::new(trials.pairs().to_vec(), scores)
}

/// [`score_trials_at`] with cosine scoring after length normalization.
pub fn score_trials(
    model: &BackendModel,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &TrialList,
    scoring: Scoring,
) -> Result<ScoreSet> {
    score_trials_at(model, enroll, test, trials, scoring, Depth::Lnorm)
}

// ---------------------------------------------------------------------------
// Serialization: magic, u16 version, u32 D, d1, d2, u8 stage mask, then
// dim-prefixed f64 blocks (vectors: u32 len; matrices: u32 rows, u32 cols,
// row-major).

const STAGE_CENTER: u8 = 1;
const STAGE_PCA: u8 = 2;
const STAGE_LDA: u8 = 4;
const STAGE_PLDA: u8 = 8;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Validation("dimension too large".into()))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_vector(out: &mut Vec<u8>, v: &DVector<f64>) -> Result<()> {
    put_u32(out, v.len())?;
    for x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) -> Result<()> {
    put_u32(out, m.nrows())?;
    put_u32(out, m.ncols())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    Ok(())
}

pub fn encode_model(model: &BackendModel) -> Result<Vec<u8>> {
    let (d, d1, d2) = model.dims();
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    put_u32(&mut out, d)?;
    put_u32(&mut out, d1)?;
    put_u32(&mut out, d2)?;
    let mut mask = STAGE_CENTER | STAGE_PCA;
    if model.lda.is_some() {
        mask |= STAGE_LDA;
    }
    if model.plda.is_some() {
        mask |= STAGE_PLDA;
    }
    out.push(mask);
    put_vector(&mut out, &model.center_mean)?;
    put_matrix(&mut out, &model.pca)?;
    if let Some(lda) = &model.lda {
        put_matrix(&mut out, lda)?;
    }
    if let Some(p) = &model.plda {
        put_vector(&mut out, &p.mu)?;
        put_matrix(&mut out, &p.between)?;
        put_matrix(&mut out, &p.within)?;
    }
    Ok(out)
}

fn get_vector(r: &mut ByteReader<'_>, len: usize, what: &str) -> Result<DVector<f64>> {
    let at = r.offset();
    let n = r.u32(what)? as usize;
    if n != len {
        return Err(Error::parse(
            format!("offset {at}"),
            format!("{what} has length {n}, expected {len}"),
        ));
    }
    if n.saturating_mul(8) > r.remaining() {
        return Err(Error::parse(format!("offset {at}"), format!("{what} truncated")));
    }
    let mut v = DVector::zeros(n);
    for i in 0..n {
        v[i] = r.f64(what)?;
    }
    Ok(v)
}

fn get_matrix(r: &mut ByteReader<'_>, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    let at = r.offset();
    let (nr, nc) = (r.u32(what)? as usize, r.u32(what)? as usize);
    if (nr, nc) != (rows, cols) {
        return Err(Error::parse(
            format!("offset {at}"),
            format!("{what} is {nr}x{nc}, expected {rows}x{cols}"),
        ));
    }
    if nr.saturating_mul(nc).saturating_mul(8) > r.remaining() {
        return Err(Error::parse(format!("offset {at}"), format!("{what} truncated")));
    }
    let mut m = DMatrix::zeros(nr, nc);
    for i in 0..nr {
        for j in 0..nc {
            m[(i, j)] = r.f64(what)?;
        }
    }
    Ok(m)
}

pub fn decode_model(bytes: &[u8]) -> Result<BackendModel> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.u16("version")?;
    if version != MODEL_VERSION {
        return Err(Error::parse("offset 4", format!("unsupported model version {version}")));
    }
    let d = r.u32("D")? as usize;
    let d1 = r.u32("d1")? as usize;
    let d2 = r.u32("d2")? as usize;
    let mask = r.u8("stage mask")?;
    if mask & (STAGE_CENTER | STAGE_PCA) != (STAGE_CENTER | STAGE_PCA) || mask & !0x0f != 0 {
        return Err(Error::parse("offset 18", format!("invalid stage mask {mask:#04x}")));
    }
    let has_lda = mask & STAGE_LDA != 0;
    let has_plda = mask & STAGE_PLDA != 0;
    if d == 0 || d1 == 0 || d1 > d || (has_lda && (d2 == 0 || d2 > d1)) || (!has_lda && d2 != 0) || (has_plda && !has_lda) {
        return Err(Error::Validation(format!(
            "inconsistent model dimensions D={d} d1={d1} d2={d2} (stages {mask:#04x})"
        )));
    }
    let center_mean = get_vector(&mut r, d, "center_mean")?;
    let pca = get_matrix(&mut r, d, d1, "pca")?;
    let lda = if has_lda {
        Some(get_matrix(&mut r, d1, d2, "lda")?)
    } else {
        None
    };
    let plda = if has_plda {
        Some(PldaParams {
            mu: get_vector(&mut r, d2, "plda mu")?,
            between: get_matrix(&mut r, d2, d2, "plda between")?,
            within: get_matrix(&mut r, d2, d2, "plda within")?,
        })
    } else {
        None
    };
    r.finish()?;
    let model = BackendModel {
        center_mean,
        pca,
        lda,
        plda,
    };
    let finite = model.center_mean.iter().chain(model.pca.iter()).all(|v| v.is_finite())
        && model.lda.as_ref().is_none_or(|l| l.iter().all(|v| v.is_finite()))
        && model.plda.as_ref().is_none_or(|p| {
            p.mu.iter().chain(p.between.iter()).chain(p.within.iter()).all(|v| v.is_finite())
        });
    if !finite {
        return Err(Error::Validation("model has non-finite entries".into()));
    }
    Ok(model)
}

pub fn write_model(model: &BackendModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<BackendModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
