//! Command-line front end. Every command is flag-driven and writes its
//! tables to standard output; diagnostics go to standard error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adapt::{self, CoralPPConfig, Method};
use crate::backend::{self, Depth, Scoring, DEFAULT_D1, DEFAULT_D2};
use crate::embedio::{self, EmbeddingSet, Format, BINARY_MAGIC};
use crate::metrics::{self, CostParams};
use crate::synth::{self, DomainShiftSpec, ExperimentConfig, SweepParam};
use crate::{Error, Result};

const GRID: [f64; 7] = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Parser)]
#[command(name = "coralpp", version, about = "Embedding domain adaptation and speaker verification back-end")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cross-domain data set.
    Synth(SynthArgs),
    /// Fit an adaptation transform and adapt the out-of-domain embeddings.
    Adapt(AdaptArgs),
    /// Train the scoring back-end.
    Train(TrainArgs),
    /// Score a trial list.
    Score(ScoreArgs),
    /// Compute EER and min-cost from scores and keyed trials.
    Eval(EvalArgs),
    /// Sweep one CORAL++ hyper-parameter on synthetic data.
    Sweep(SweepArgs),
    /// Compare all adaptation methods and scorings on synthetic data.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Source speakers.
    #[arg(long, default_value_t = 200)]
    pub speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub utts: usize,
    /// Target speakers in the unlabeled adaptation set.
    #[arg(long, default_value_t = 200)]
    pub adapt_speakers: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub test_utts: usize,
    #[arg(long, default_value_t = 1.0)]
    pub between: f64,
    #[arg(long, default_value_t = 1.0)]
    pub within: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rotation: f64,
    #[arg(long, default_value_t = 4.0)]
    pub anisotropy: f64,
    #[arg(long, default_value_t = 2.0)]
    pub shift: f64,
}

impl SpecArgs {
    fn spec(&self) -> DomainShiftSpec {
        DomainShiftSpec {
            dim: self.dim,
            n_speakers: self.speakers,
            utts_per_speaker: self.utts,
            between_scale: self.between,
            within_scale: self.within,
            rotation_strength: self.rotation,
            anisotropy: self.anisotropy,
            mean_shift_norm: self.shift,
            seed: self.seed,
            adapt_speakers: self.adapt_speakers,
            eval_speakers: self.eval_speakers,
            test_utts_per_speaker: self.test_utts,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// Target prior; repeat for several (costs are averaged).
    #[arg(long = "p-target")]
    pub p_target: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_fa: f64,
}

impl CostArgs {
    fn params(&self) -> Result<CostParams> {
        let priors = if self.p_target.is_empty() {
            CostParams::default().p_target().to_vec()
        } else {
            self.p_target.clone()
        };
        CostParams::new(priors, self.c_miss, self.c_fa)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "binary")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    /// Out-of-domain (training) embeddings to adapt.
    #[arg(long)]
    pub ood: PathBuf,
    /// In-domain embeddings whose statistics are the target.
    #[arg(long)]
    pub ind: PathBuf,
    #[arg(long, default_value = "coralpp")]
    pub method: Method,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adapted embeddings; the transform is written next to it with an
    /// `.adt` extension unless --transform-out is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub transform_out: Option<PathBuf>,
    #[arg(long, default_value = "binary")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Labeled (adapted) training embeddings.
    #[arg(long)]
    pub train: PathBuf,
    /// Embeddings whose mean is used for centering; defaults to the
    /// training set.
    #[arg(long)]
    pub centering: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_D1)]
    pub d1: usize,
    #[arg(long, default_value_t = DEFAULT_D2)]
    pub d2: usize,
    /// Fit only centering, PCA and length normalization (cosine scoring).
    #[arg(long)]
    pub front_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub enroll: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, default_value = "plda")]
    pub scoring: Scoring,
    /// Representation used by cosine scoring.
    #[arg(long, default_value = "lnorm")]
    pub cosine_depth: Depth,
    /// Score file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Number of evaluation sets; set k uses seed `seed + k`.
    #[arg(long, default_value_t = 3)]
    pub sets: u64,
    /// Defaults to the embedding dimension.
    #[arg(long)]
    pub d1: Option<usize>,
    /// Defaults to min(d1, speakers - 1).
    #[arg(long)]
    pub d2: Option<usize>,
    /// Representation used by cosine scoring.
    #[arg(long, default_value = "lda")]
    pub cosine_depth: Depth,
    #[command(flatten)]
    pub cost: CostArgs,
}

impl RunArgs {
    fn seeds(&self) -> Result<Vec<u64>> {
        if self.sets == 0 {
            return Err(Error::Validation("--sets must be positive".into()));
        }
        Ok((0..self.sets).map(|k| self.spec.seed.wrapping_add(k)).collect())
    }

    fn base(&self, method: Method, scoring: Scoring) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            d1: self.d1,
            d2: self.d2,
            cosine_depth: self.cosine_depth,
            cost: self.cost.params()?,
            ..ExperimentConfig::new(method, scoring)
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated grid; defaults to 0.1,0.5,1,1.5,2,2.5,3.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Value of the other parameter; alpha=0 when sweeping lambda and
    /// lambda=0.1 when sweeping alpha.
    #[arg(long)]
    pub fixed: Option<f64>,
    #[arg(long, default_value = "plda")]
    pub scoring: Scoring,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', default_value = "raw,coral,fda,coralpp")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "plda,cosine")]
    pub scorings: Vec<Scoring>,
    /// Fractions of the adaptation set.
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.1")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = CoralPPConfig::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = CoralPPConfig::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Reads embeddings in either format, recognized by the binary magic.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        embedio::decode_embeddings_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Validation(format!("{}: neither EVB1 binary nor UTF-8 text", path.display())))?;
        embedio::parse_embeddings_tsv(&text)
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let data = synth::generate(&a.spec.spec())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    embedio::write_embeddings(&data.source, a.out.join("source.evb"), a.format)?;
    embedio::write_embeddings(&data.target_adapt, a.out.join("adapt.evb"), a.format)?;
    embedio::write_embeddings(&data.target_enroll, a.out.join("enroll.evb"), a.format)?;
    embedio::write_embeddings(&data.target_test, a.out.join("test.evb"), a.format)?;
    embedio::write_trials(&data.trials, a.out.join("trials.tsv"))
}

fn cmd_adapt(a: &AdaptArgs) -> Result<()> {
    let cfg = match a.method {
        Method::CoralPP => CoralPPConfig::new(
            a.lambda.unwrap_or(CoralPPConfig::DEFAULT_LAMBDA),
            a.alpha.unwrap_or(CoralPPConfig::DEFAULT_ALPHA),
        )?,
        m => {
            if a.lambda.is_some() || a.alpha.is_some() {
                eprintln!("warning: --lambda/--alpha are ignored for method {m}");
            }
            CoralPPConfig::default()
        }
    };
    let ood = load_embeddings(&a.ood)?;
    let ind = load_embeddings(&a.ind)?;
    let transform = adapt::fit(a.method, &ood, &ind, &cfg)?;
    let adapted = adapt::apply_transform(&transform, &ood)?;
    embedio::write_embeddings(&adapted, &a.out, a.format)?;
    let tpath = a.transform_out.clone().unwrap_or_else(|| a.out.with_extension("adt"));
    adapt::write_transform(&transform, tpath)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let train = load_embeddings(&a.train)?;
    let centering = match &a.centering {
        Some(p) => load_embeddings(p)?,
        None => train.clone(),
    };
    let model = if a.front_only {
        backend::fit_backend_cosine(&train, &centering, a.d1)?
    } else {
        backend::fit_backend(&train, &centering, a.d1, a.d2)?
    };
    backend::write_model(&model, &a.out)
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let model = backend::read_model(&a.model)?;
    let enroll = load_embeddings(&a.enroll)?;
    let test = load_embeddings(&a.test)?;
    let trials = embedio::read_trials(&a.trials)?;
    let scores = backend::score_trials_at(&model, &enroll, &test, &trials, a.scoring, a.cosine_depth)?;
    match &a.out {
        Some(p) => embedio::write_scores(&scores, p),
        None => emit(out, &embedio::format_scores(&scores)),
    }
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let params = a.cost.params()?;
    let scores = embedio::read_scores(&a.scores)?;
    let trials = embedio::read_trials(&a.trials)?;
    let (eer, cost) = metrics::evaluate(&scores, &trials, &params)?;
    emit(out, &format!("EER%\t{}\nminCost\t{cost:.4}\n", synth::pct(eer)))
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let grid = if a.grid.is_empty() { GRID.to_vec() } else { a.grid.clone() };
    let fixed = a.fixed.unwrap_or(match a.param {
        SweepParam::Lambda => 0.0,
        SweepParam::Alpha => CoralPPConfig::DEFAULT_LAMBDA,
    });
    let seeds = a.run.seeds()?;
    let base = a.run.base(Method::CoralPP, a.scoring)?;
    let rows = synth::sweep(&a.run.spec.spec(), &seeds, a.param, &grid, fixed, &base)?;
    emit(out, &synth::format_sweep_table(a.param, fixed, &seeds, &rows))
}

fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let seeds = a.run.seeds()?;
    let base = ExperimentConfig {
        coralpp: CoralPPConfig::new(a.lambda, a.alpha)?,
        ..a.run.base(Method::Identity, Scoring::Plda)?
    };
    let cells = synth::compare_methods(&a.run.spec.spec(), &seeds, &a.methods, &a.scorings, &a.ratios, &base)?;
    emit(out, &synth::format_comparison_table(&cells))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
    }
}

/// Parses the process arguments, runs the command and returns the exit
/// code: 0 on success, 1 on computational errors, 2 on usage or input
/// errors.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
