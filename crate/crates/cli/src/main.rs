//! `scat`: prepare corpora, train competitive autoencoders, inspect and
//! evaluate the learned representations.
//!
//! Exit codes: 0 success, 1 I/O or unreadable input, 2 usage or validation
//! error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scat::corpus::{load_20newsgroups, read_stopwords, CorpusArchive, CorpusConfig, CorpusError, SparseRow};
use scat::eval::{encode_matrix, evaluate, export_embeddings, extract_topics, train_classifier, ClassifierConfig, EvalError};
use scat::model_file::{ModelFile, ModelFileError};
use scat::nn::{Competition, ModelParams, NnError, Variant};
use scat::train::{default_k, fit_with_log, grad_check, CheckMode, OptimizerConfig, OptimizerKind, TrainConfig, TrainError};

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "scat", version, about = "Second-chance k-competitive autoencoder for text")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a one-directory-per-class corpus into train/test archives.
    Prep(PrepArgs),
    /// Train an autoencoder on a corpus archive.
    Train(TrainArgs),
    /// Print the top words of every hidden unit.
    Topics(TopicsArgs),
    /// Fit a softmax classifier on the encodings and report test metrics as JSON.
    Classify(ClassifyArgs),
    /// Compare analytic and finite-difference gradients on a random small model.
    Gradcheck(GradcheckArgs),
    /// Write per-document encodings as TSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output stem; writes `<stem>.train.cae` and `<stem>.test.cae`.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    max_vocab: usize,
    #[arg(long, default_value_t = 3)]
    min_df: u32,
    /// One stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Only used when the input has no `*-train` / `*-test` split.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    hidden: usize,
    #[arg(long, default_value = "scat", value_parser = parse_variant)]
    variant: Variant,
    /// Defaults to ceil(hidden / 2).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f32,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    optimizer: OptimizerKind,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Serialized gradient reductions; identical runs give identical files.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Keep the competitive layer on when encoding.
    #[arg(long)]
    competition_at_inference: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    v: usize,
    #[arg(long, default_value_t = 6)]
    h: usize,
    #[arg(long, default_value = "none", value_parser = parse_variant)]
    variant: Variant,
    /// Defaults to ceil(h / 2).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    competition_at_inference: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: NnError| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd_momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
        _ => Err(format!("unknown optimizer {s:?} (expected adam or sgd_momentum)")),
    }
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteUpdate { .. } => CliError::Numeric(e.to_string()),
            TrainError::Nn(e) => e.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) => CliError::Io(e.to_string()),
            EvalError::Nn(e) => e.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Prep(a) => prep(a),
        Command::Train(a) => train(a),
        Command::Topics(a) => topics(a),
        Command::Classify(a) => classify(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn prep(a: PrepArgs) -> Result<(), CliError> {
    let stopwords = a.stopwords.as_deref().map(read_stopwords).transpose()?;
    let cfg = CorpusConfig {
        max_vocab: a.max_vocab,
        min_doc_freq: a.min_df,
        stopwords,
        split_seed: a.seed,
        test_fraction: a.test_fraction,
        ..CorpusConfig::default()
    };
    cfg.validate()?;
    let corpus = load_20newsgroups(&a.input, &cfg)?;
    let train_path = with_suffix(&a.output, ".train.cae");
    let test_path = with_suffix(&a.output, ".test.cae");
    CorpusArchive::new(&corpus.vocab, corpus.class_names.clone(), cfg.clone(), corpus.train.clone()).save(&train_path)?;
    CorpusArchive::new(&corpus.vocab, corpus.class_names.clone(), cfg, corpus.test.clone()).save(&test_path)?;
    println!(
        "train_docs={} test_docs={} vocab={} classes={} skipped={} split={} -> {} {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.vocab.len(),
        corpus.class_names.len(),
        corpus.skipped,
        if corpus.bydate { "bydate" } else { "seeded" },
        train_path.display(),
        test_path.display()
    );
    Ok(())
}

fn resolve_k(k: Option<usize>, hidden: usize) -> Result<usize, CliError> {
    let k = match k {
        Some(k) => k,
        None => default_k(hidden)?,
    };
    if k == 0 || k > hidden {
        return Err(CliError::Usage(format!("--k must lie in 1..={hidden}, got {k}")));
    }
    Ok(k)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    if a.hidden == 0 {
        return Err(CliError::Usage("--hidden must be at least 1".into()));
    }
    let k = resolve_k(a.k, a.hidden)?;
    let archive = CorpusArchive::load(&a.corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let params = ModelParams::init(
        a.hidden,
        archive.matrix.cols,
        Competition::new(a.variant, k, a.alpha),
        &mut rng,
    )?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer: OptimizerConfig {
            kind: a.optimizer,
            learning_rate: a.lr,
            ..OptimizerConfig::default()
        },
        seed: a.seed,
        early_stop_patience: (a.patience > 0).then_some(a.patience),
        validation_fraction: a.validation_fraction,
        deterministic: a.deterministic,
        ..TrainConfig::default()
    };
    println!("epoch\ttrain_loss\tval_loss");
    let (params, report) = fit_with_log(&archive.matrix, params, &cfg, |log| println!("{}", log.tsv()))?;
    let model = ModelFile {
        params,
        weighting: archive.meta.config.weighting,
        vocab: archive.meta.vocab,
        class_names: Some(archive.meta.class_names).filter(|c| !c.is_empty()),
    };
    model.save(&a.output)?;
    eprintln!(
        "h={} k={k} variant={} epochs_run={} best_epoch={} loss {:.6} -> {:.6} in {:.2?}, checksum {:016x}",
        a.hidden, a.variant, report.epochs_run, report.best_epoch, report.initial_loss, report.final_loss, report.wall_time, report.checksum
    );
    Ok(())
}

fn topics(a: TopicsArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let vocab = model.vocabulary()?;
    for line in extract_topics(&model.params, &vocab, a.top_n)?.lines() {
        println!("{line}");
    }
    Ok(())
}

fn load_matching(model: &ModelFile, path: &Path) -> Result<CorpusArchive, CliError> {
    let archive = CorpusArchive::load(path)?;
    if archive.meta.vocab != model.vocab {
        return Err(CliError::Usage(format!(
            "{} was built with a different vocabulary than the model",
            path.display()
        )));
    }
    Ok(archive)
}

fn labels(archive: &CorpusArchive, path: &Path) -> Result<Vec<usize>, CliError> {
    archive
        .matrix
        .dense_labels()
        .ok_or_else(|| CliError::Usage(format!("{} has unlabelled documents", path.display())))
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let train = load_matching(&model, &a.train)?;
    let test = load_matching(&model, &a.test)?;
    let train_x = encode_matrix(&train.matrix, &model.params, a.competition_at_inference)?;
    let test_x = encode_matrix(&test.matrix, &model.params, a.competition_at_inference)?;
    let clf = train_classifier(&train_x, &labels(&train, &a.train)?, &ClassifierConfig::default())?;
    let report = evaluate(&clf, &test_x, &labels(&test, &a.test)?)?.with_class_names(&train.meta.class_names);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    if a.v == 0 || a.h == 0 {
        return Err(CliError::Usage("--v and --h must be at least 1".into()));
    }
    let k = resolve_k(a.k.or(Some(a.h.div_ceil(2))), a.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut params: ModelParams<f64> = ModelParams::init(a.h, a.v, Competition::new(a.variant, k, 1.0), &mut rng)?;
    for b in params.b.iter_mut().chain(params.c.iter_mut()) {
        *b = rng.gen_range(-0.5..0.5);
    }
    let mut indices: Vec<u32> = (0..a.v as u32).filter(|_| rng.gen_bool(0.5)).collect();
    if indices.is_empty() {
        indices.push(rng.gen_range(0..a.v as u32));
    }
    let mut values: Vec<f32> = indices.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    values[0] = 1.0;
    let x = SparseRow::new(indices, values);
    let mode = if a.variant == Variant::None {
        CheckMode::Full
    } else {
        CheckMode::FrozenCompetition
    };
    let err = grad_check(&params, &x, mode, a.eps)?;
    let mode_name = if mode == CheckMode::Full { "full" } else { "frozen_competition" };
    println!("variant={} v={} h={} k={k} mode={mode_name} max_relative_error={err:.3e}", a.variant, a.v, a.h);
    if err < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("relative error {err:.3e} exceeds {GRAD_TOLERANCE:e}")))
    }
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let corpus = load_matching(&model, &a.corpus)?;
    let features = encode_matrix(&corpus.matrix, &model.params, a.competition_at_inference)?;
    export_embeddings(&features, &corpus.matrix.labels, &corpus.matrix.doc_ids, &a.output)?;
    Ok(())
}
