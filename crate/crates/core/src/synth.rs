//! Synthetic cross-domain speaker embeddings and the experiment driver built
//! on them.
//!
//! Speakers are latent identities `y ~ N(0, b^2 I)` and utterances are
//! `x = y + e` with `e ~ N(0, w^2 I)`. Target-domain utterances additionally
//! pass through a fixed affine distortion `x -> R S x + m`: a random rotation
//! `R` (interpolated toward the identity by `1 - rotation_strength`), a
//! diagonal scaling `S` with condition number `anisotropy`, and a shift of
//! norm `mean_shift_norm`. Source and target speaker pools are disjoint.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::adapt::{self, AdaptationTransform, CoralPPConfig, Method};
use crate::backend::{fit_backend, score_trials_at, Depth, Scoring};
use crate::embedio::{EmbeddingSet, TrialList};
use crate::metrics::{evaluate, CostParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DomainShiftSpec {
    pub dim: usize,
    /// Source (training) speakers.
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub between_scale: f64,
    pub within_scale: f64,
    pub rotation_strength: f64,
    pub anisotropy: f64,
    pub mean_shift_norm: f64,
    pub seed: u64,
    /// Target speakers behind the unlabeled adaptation set (each with
    /// `utts_per_speaker` utterances).
    pub adapt_speakers: usize,
    /// Target evaluation speakers; each has one enrollment utterance.
    pub eval_speakers: usize,
    pub test_utts_per_speaker: usize,
}

impl Default for DomainShiftSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            n_speakers: 200,
            utts_per_speaker: 10,
            between_scale: 1.0,
            within_scale: 1.0,
            rotation_strength: 0.5,
            anisotropy: 4.0,
            mean_shift_norm: 2.0,
            seed: 0,
            adapt_speakers: 200,
            eval_speakers: 100,
            test_utts_per_speaker: 10,
        }
    }
}

impl DomainShiftSpec {
    /// Source and target drawn from the same distribution.
    pub fn no_shift(mut self) -> Self {
        self.rotation_strength = 0.0;
        self.anisotropy = 1.0;
        self.mean_shift_norm = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("n_speakers", self.n_speakers),
            ("utts_per_speaker", self.utts_per_speaker),
            ("adapt_speakers", self.adapt_speakers),
            ("eval_speakers", self.eval_speakers),
            ("test_utts_per_speaker", self.test_utts_per_speaker),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("{name} must be positive")));
        }
        if self.eval_speakers < 2 {
            return Err(Error::Validation("eval_speakers must be at least 2".into()));
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.between_scale) || !pos(self.within_scale) || !pos(self.anisotropy) {
            return Err(Error::Validation(
                "between_scale, within_scale and anisotropy must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rotation_strength) {
            return Err(Error::Validation(format!(
                "rotation_strength must be in [0, 1], got {}",
                self.rotation_strength
            )));
        }
        if !(self.mean_shift_norm >= 0.0 && self.mean_shift_norm.is_finite()) {
            return Err(Error::Validation("mean_shift_norm must be non-negative".into()));
        }
        Ok(())
    }
}

/// The target-domain affine map `x -> R S x + m` (column-vector form).
#[derive(Debug, Clone, PartialEq)]
pub struct Distortion {
    pub rotation: DMatrix<f64>,
    pub scales: DVector<f64>,
    pub shift: DVector<f64>,
}

impl Distortion {
    /// `R S` as a column-vector map.
    pub fn linear(&self) -> DMatrix<f64> {
        let mut rs = self.rotation.clone();
        for (j, mut col) in rs.column_iter_mut().enumerate() {
            col *= self.scales[j];
        }
        rs
    }

    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * self.linear().transpose();
        for mut r in y.row_iter_mut() {
            r += self.shift.transpose();
        }
        y
    }

    /// The inverse map as a row-vector [`AdaptationTransform`]:
    /// `x -> (x - m) R S^{-1}`.
    pub fn inverse_transform(&self) -> AdaptationTransform {
        let mut inv = self.rotation.clone();
        for (j, mut col) in inv.column_iter_mut().enumerate() {
            col /= self.scales[j];
        }
        AdaptationTransform {
            matrix: inv,
            pre_shift: self.shift.clone(),
            post_shift: DVector::zeros(self.shift.len()),
            method: Method::Coral,
            lambda: None,
            alpha: None,
            spectrum: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub source: EmbeddingSet,
    pub target_adapt: EmbeddingSet,
    pub target_enroll: EmbeddingSet,
    pub target_test: EmbeddingSet,
    pub trials: TrialList,
    pub distortion: Distortion,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major fill so the stream order does not depend on storage order
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn random_distortion(spec: &DomainShiftSpec, rng: &mut ChaCha8Rng) -> Distortion {
    let d = spec.dim;
    let g = normal_matrix(rng, d, d);
    // Skew-symmetric generator with rotation angles spread over roughly [-pi, pi].
    let skew = (&g - g.transpose()) * (std::f64::consts::PI / (2.0 * (2.0 * d as f64).sqrt()));
    let rotation = (skew * spec.rotation_strength).exp();

    let mut scales: Vec<f64> = (0..d)
        .map(|i| {
            let t = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.5 };
            spec.anisotropy.powf(0.5 - t)
        })
        .collect();
    scales.shuffle(rng);

    let dir = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut *rng)));
    let shift = if dir.norm() > 0.0 {
        dir.normalize() * spec.mean_shift_norm
    } else {
        DVector::zeros(d)
    };
    Distortion {
        rotation,
        scales: DVector::from_vec(scales),
        shift,
    }
}

/// Draws `speakers` latent identities and `utts` noisy utterances of each,
/// returned as rows grouped by speaker.
fn draw_speakers(spec: &DomainShiftSpec, rng: &mut ChaCha8Rng, speakers: usize, utts: usize) -> DMatrix<f64> {
    let d = spec.dim;
    let mut x = DMatrix::zeros(speakers * utts, d);
    for s in 0..speakers {
        let y: Vec<f64> = (0..d)
            .map(|_| spec.between_scale * Distribution::<f64>::sample(&StandardNormal, &mut *rng))
            .collect();
        for u in 0..utts {
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut *rng);
                x[(s * utts + u, j)] = y[j] + spec.within_scale * e;
            }
        }
    }
    x
}

fn ids_and_labels(prefix: &str, speaker_prefix: &str, speakers: usize, utts: usize) -> (Vec<String>, Vec<String>) {
    let mut ids = Vec::with_capacity(speakers * utts);
    let mut labels = Vec::with_capacity(speakers * utts);
    for s in 0..speakers {
        for u in 0..utts {
            ids.push(format!("{prefix}_s{s:05}_u{u:03}"));
            labels.push(format!("{speaker_prefix}_s{s:05}"));
        }
    }
    (ids, labels)
}

/// Generates source, unlabeled target adaptation, target enrollment and
/// target test sets plus the full enrollment x test trial list.
pub fn generate(spec: &DomainShiftSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let distortion = random_distortion(spec, &mut rng);

    let n_utts = spec.utts_per_speaker;
    let src = draw_speakers(spec, &mut rng, spec.n_speakers, n_utts);
    let (ids, labels) = ids_and_labels("src", "src", spec.n_speakers, n_utts);
    let source = EmbeddingSet::new(ids, Some(labels), "source", src)?;

    let adp = distortion.apply_rows(&draw_speakers(spec, &mut rng, spec.adapt_speakers, n_utts));
    let (ids, _) = ids_and_labels("adp", "adp", spec.adapt_speakers, n_utts);
    let target_adapt = EmbeddingSet::new(ids, None, "target", adp)?;

    // One enrollment followed by the test utterances of each eval speaker.
    let per = 1 + spec.test_utts_per_speaker;
    let eval = distortion.apply_rows(&draw_speakers(spec, &mut rng, spec.eval_speakers, per));
    let enroll_rows: Vec<usize> = (0..spec.eval_speakers).map(|s| s * per).collect();
    let test_rows: Vec<usize> = (0..spec.eval_speakers)
        .flat_map(|s| (1..per).map(move |u| s * per + u))
        .collect();
    let speaker = |s: usize| format!("tgt_s{s:05}");
    let target_enroll = EmbeddingSet::new(
        (0..spec.eval_speakers).map(|s| format!("enr_s{s:05}")).collect(),
        Some((0..spec.eval_speakers).map(speaker).collect()),
        "target",
        eval.select_rows(enroll_rows.iter()),
    )?;
    let (test_ids, test_labels) = ids_and_labels("tst", "tgt", spec.eval_speakers, spec.test_utts_per_speaker);
    let target_test = EmbeddingSet::new(test_ids, Some(test_labels), "target", eval.select_rows(test_rows.iter()))?;

    let mut pairs = Vec::with_capacity(target_enroll.len() * target_test.len());
    let mut keys = Vec::with_capacity(pairs.capacity());
    let enroll_labels = target_enroll.labels().expect("labeled");
    let test_labels = target_test.labels().expect("labeled");
    for (e, el) in target_enroll.ids().iter().zip(enroll_labels) {
        for (t, tl) in target_test.ids().iter().zip(test_labels) {
            pairs.push((e.clone(), t.clone()));
            keys.push(el == tl);
        }
    }
    let trials = TrialList::new(pairs, Some(keys))?;

    Ok(SynthData {
        source,
        target_adapt,
        target_enroll,
        target_test,
        trials,
        distortion,
    })
}

/// Deterministic random subset with `max(2, round(ratio * N))` rows, kept in
/// original order.
pub fn subsample(set: &EmbeddingSet, ratio: f64, seed: u64) -> Result<EmbeddingSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Validation(format!("subset ratio must be in (0, 1], got {ratio}")));
    }
    let n = set.len();
    let k = ((ratio * n as f64).round() as usize).clamp(2.min(n), n);
    if k == n {
        return Ok(set.clone());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    idx.shuffle(&mut rng);
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    set.subset(&chosen)
}

/// Everything besides the data that determines one experiment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub coralpp: CoralPPConfig,
    pub scoring: Scoring,
    /// Fraction of the adaptation set used to fit the adaptor.
    pub adapt_ratio: f64,
    /// Defaults to the embedding dimension.
    pub d1: Option<usize>,
    /// Defaults to `min(d1, speakers - 1)`.
    pub d2: Option<usize>,
    /// With `d1` equal to the input dimension, cosine scores at lnorm depth
    /// do not depend on any linear adaptation of the training data.
    pub cosine_depth: Depth,
    pub cost: CostParams,
}

impl ExperimentConfig {
    pub fn new(method: Method, scoring: Scoring) -> Self {
        Self {
            method,
            coralpp: CoralPPConfig::default(),
            scoring,
            adapt_ratio: 1.0,
            d1: None,
            d2: None,
            cosine_depth: Depth::Lda,
            cost: CostParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentResult {
    pub eer: f64,
    pub min_cost: f64,
}

fn backend_dims(data: &SynthData, cfg: &ExperimentConfig) -> (usize, usize) {
    let dim = data.source.dim();
    let speakers = data
        .source
        .labels()
        .map(|l| l.iter().collect::<std::collections::BTreeSet<_>>().len())
        .unwrap_or(0);
    let d1 = cfg.d1.unwrap_or(dim);
    let d2 = cfg.d2.unwrap_or_else(|| d1.min(speakers.saturating_sub(1)));
    (d1, d2)
}

/// Scores the target trials with a back-end trained on `train` (already
/// adapted source data) and centered with the adaptation set mean.
fn score_with(
    data: &SynthData,
    train: &EmbeddingSet,
    centering: &EmbeddingSet,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let (d1, d2) = backend_dims(data, cfg);
    let model = fit_backend(train, centering, d1, d2)?;
    let scores = score_trials_at(&model, enroll, test, &data.trials, cfg.scoring, cfg.cosine_depth)?;
    let (eer, min_cost) = evaluate(&scores, &data.trials, &cfg.cost)?;
    Ok(ExperimentResult { eer, min_cost })
}

/// Adapts the source toward (a subset of) the adaptation set, trains the
/// back-end on the adapted source and evaluates the target trials.
pub fn run_on_data(data: &SynthData, cfg: &ExperimentConfig, subset_seed: u64) -> Result<ExperimentResult> {
    let adapt_set = subsample(&data.target_adapt, cfg.adapt_ratio, subset_seed)?;
    let transform = adapt::fit(cfg.method, &data.source, &adapt_set, &cfg.coralpp)?;
    let train = adapt::apply_transform(&transform, &data.source)?;
    score_with(data, &train, &adapt_set, &data.target_enroll, &data.target_test, cfg)
}

/// Reference arm: the known inverse distortion is applied to the target
/// evaluation data, and the back-end is trained on the unadapted source.
pub fn run_oracle_on_data(data: &SynthData, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let inv = data.distortion.inverse_transform();
    let enroll = adapt::apply_transform(&inv, &data.target_enroll)?;
    let test = adapt::apply_transform(&inv, &data.target_test)?;
    let centering = adapt::apply_transform(&inv, &data.target_adapt)?;
    score_with(data, &data.source, &centering, &enroll, &test, cfg)
}

pub fn run_experiment(
    spec: &DomainShiftSpec,
    method: Method,
    coralpp: CoralPPConfig,
    scoring: Scoring,
) -> Result<ExperimentResult> {
    let data = generate(spec)?;
    let cfg = ExperimentConfig {
        coralpp,
        ..ExperimentConfig::new(method, scoring)
    };
    run_on_data(&data, &cfg, spec.seed)
}

pub fn run_oracle(spec: &DomainShiftSpec, scoring: Scoring) -> Result<ExperimentResult> {
    let data = generate(spec)?;
    run_oracle_on_data(&data, &ExperimentConfig::new(Method::Identity, scoring))
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median EER and median min-cost of one arm over several seeds.
pub fn median_over_seeds(
    spec: &DomainShiftSpec,
    seeds: &[u64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let runs: Vec<ExperimentResult> = seeds
        .par_iter()
        .map(|&s| {
            let data = generate(&spec.clone().with_seed(s))?;
            run_on_data(&data, cfg, s)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        eer: median(&runs.iter().map(|r| r.eer).collect::<Vec<_>>()),
        min_cost: median(&runs.iter().map(|r| r.min_cost).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCell {
    pub ratio: f64,
    pub method: Method,
    pub scoring: Scoring,
    pub result: ExperimentResult,
}

/// Every (ratio, method, scoring) cell, each the median over `seeds`. Data
/// for a seed is generated once and shared by all cells.
pub fn compare_methods(
    spec: &DomainShiftSpec,
    seeds: &[u64],
    methods: &[Method],
    scorings: &[Scoring],
    ratios: &[f64],
    base: &ExperimentConfig,
) -> Result<Vec<ComparisonCell>> {
    if seeds.is_empty() || methods.is_empty() || scorings.is_empty() || ratios.is_empty() {
        return Err(Error::Validation("empty seed, method, scoring or ratio list".into()));
    }
    let datasets: Vec<SynthData> = seeds
        .par_iter()
        .map(|&s| generate(&spec.clone().with_seed(s)))
        .collect::<Result<_>>()?;
    let mut arms = Vec::new();
    for &ratio in ratios {
        for &method in methods {
            for &scoring in scorings {
                arms.push(ExperimentConfig {
                    method,
                    scoring,
                    adapt_ratio: ratio,
                    ..base.clone()
                });
            }
        }
    }
    arms.par_iter()
        .map(|cfg| {
            let runs: Vec<ExperimentResult> = datasets
                .iter()
                .zip(seeds)
                .map(|(d, &s)| run_on_data(d, cfg, s))
                .collect::<Result<_>>()?;
            Ok(ComparisonCell {
                ratio: cfg.adapt_ratio,
                method: cfg.method,
                scoring: cfg.scoring,
                result: ExperimentResult {
                    eer: median(&runs.iter().map(|r| r.eer).collect::<Vec<_>>()),
                    min_cost: median(&runs.iter().map(|r| r.min_cost).collect::<Vec<_>>()),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Alpha => "alpha",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(format!("unknown sweep parameter '{other}' (expected lambda or alpha)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// One result per evaluation set (seed).
    pub results: Vec<ExperimentResult>,
}

/// CORAL++ sensitivity to one hyper-parameter with the other fixed. Each
/// seed in `seeds` is an independent evaluation set.
pub fn sweep(
    spec: &DomainShiftSpec,
    seeds: &[u64],
    param: SweepParam,
    grid: &[f64],
    fixed: f64,
    base: &ExperimentConfig,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::Validation("sweep grid and seed list must be non-empty".into()));
    }
    let configs: Vec<CoralPPConfig> = grid
        .iter()
        .map(|&v| match param {
            SweepParam::Lambda => CoralPPConfig::new(v, fixed),
            SweepParam::Alpha => CoralPPConfig::new(fixed, v),
        })
        .collect::<Result<_>>()?;
    let datasets: Vec<SynthData> = seeds
        .par_iter()
        .map(|&s| generate(&spec.clone().with_seed(s)))
        .collect::<Result<_>>()?;
    grid.par_iter()
        .zip(configs.par_iter())
        .map(|(&value, &coralpp)| {
            let cfg = ExperimentConfig {
                method: Method::CoralPP,
                coralpp,
                ..base.clone()
            };
            let results = datasets
                .iter()
                .zip(seeds)
                .map(|(d, &s)| run_on_data(d, &cfg, s))
                .collect::<Result<_>>()?;
            Ok(SweepRow { value, results })
        })
        .collect()
}

/// Formats a rate as a percentage with four decimals.
pub fn pct(x: f64) -> String {
    format!("{:.4}", 100.0 * x)
}

pub fn format_sweep_table(param: SweepParam, fixed: f64, seeds: &[u64], rows: &[SweepRow]) -> String {
    let other = match param {
        SweepParam::Lambda => "alpha",
        SweepParam::Alpha => "lambda",
    };
    let mut out = format!("# coralpp sweep over {} with {other}={fixed}\n", param.name());
    out.push_str(param.name());
    for s in seeds {
        out.push_str(&format!("\tset{s}_EER%\tset{s}_minCost"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{}", row.value));
        for r in &row.results {
            out.push_str(&format!("\t{}\t{:.4}", pct(r.eer), r.min_cost));
        }
        out.push('\n');
    }
    out
}

pub fn format_comparison_table(cells: &[ComparisonCell]) -> String {
    let mut out = String::from("ratio\tmethod\tscoring\tEER%\tminCost\n");
    for c in cells {
        out.push_str(&format!(
            "{}%\t{}\t{}\t{}\t{:.4}\n",
            (c.ratio * 100.0).round(),
            c.method,
            c.scoring.name(),
            pct(c.result.eer),
            c.result.min_cost
        ));
    }
    out
}
