//! `clozezp`: cloze pseudo-data generation, reader training, zero pronoun
//! resolution and scoring from the command line.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clozezp::corpus::{load_azp_instances, load_documents, Corpus};
use clozezp::evaluator;
use clozezp::exec::Exec;
use clozezp::pseudogen::{self, GenerationConfig, Triple, DEFAULT_BLANK};
use clozezp::reader::{init_params, Checkpoint, ReaderConfig};
use clozezp::resolver::{self, ResolveConfig};
use clozezp::trainer::{self, TrainConfig};
use clozezp::vocab::{self, MappedTriple, Vocabulary, DEFAULT_SHORTLIST, DEFAULT_UNK_SLOTS};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(
    name = "clozezp",
    version,
    about = "Cloze-trained reader for zero pronoun resolution"
)]
struct Cli {
    /// Repeat for more log output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract cloze triples from a corpus, or task triples with --task.
    Generate(GenerateArgs),
    /// Build the shortlist vocabulary from triple files.
    BuildVocab(BuildVocabArgs),
    /// Train a fresh reader on pseudo triples.
    Pretrain(TrainArgs),
    /// Continue training a pre-trained checkpoint on task triples.
    Adapt(TrainArgs),
    /// Resolve zero pronouns with a trained reader.
    Resolve(ResolveArgs),
    /// Score a prediction file per domain.
    Eval(EvalArgs),
    /// Re-run the command recorded in a run manifest.
    Replay { manifest: PathBuf },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Convert gold zero pronouns from --azp instead of sampling cloze queries.
    #[arg(long, requires = "azp")]
    task: bool,
    #[arg(long)]
    azp: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    per_doc: usize,
    #[arg(long, default_value_t = 2)]
    min_freq: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BuildVocabArgs {
    #[arg(long = "triples", required = true)]
    triples: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SHORTLIST)]
    size: usize,
    #[arg(long, default_value_t = DEFAULT_UNK_SLOTS)]
    unk_slots: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    val_triples: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    /// Starting checkpoint (required by `adapt`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Receives the best checkpoint, the epoch log and the manifest.
    #[arg(long)]
    checkpoint_dir: PathBuf,
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// 0 disables early stopping.
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ResolveArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    azp: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Predict over the whole vocabulary instead of the context words.
    #[arg(long)]
    unrestricted: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Tab-separated metrics file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    User(String),
    Internal(String),
}

impl From<clozezp::Error> for CliError {
    fn from(e: clozezp::Error) -> Self {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn user<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::User(msg.into()))
}

fn exec_for(workers: Option<usize>) -> CliResult<Exec> {
    match workers {
        Some(0) => user("--workers must be >= 1"),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the worker pool to {n}: {e}");
            }
            #[cfg(not(feature = "parallel"))]
            log::warn!("built without parallel support; ignoring --workers {n}");
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn generate(a: &GenerateArgs, m: &mut RunManifest) -> CliResult<()> {
    let exec = exec_for(a.common.workers)?;
    let docs = load_documents(&a.corpus)?;
    let cfg = GenerationConfig {
        triples_per_document: a.per_doc,
        min_answer_frequency: a.min_freq,
        rng_seed: a.common.seed,
        blank_symbol: DEFAULT_BLANK.to_string(),
    };
    m.input("corpus", &a.corpus);
    m.config("per_doc", a.per_doc)
        .config("min_freq", a.min_freq)
        .config("task", a.task);
    let sentences: usize = docs.iter().map(|d| d.sentences.len()).sum();
    let (triples, documents) = if a.task {
        let azp = a.azp.as_ref().expect("clap enforces --azp");
        m.input("azp", azp);
        let corpus = Corpus::new(docs)?;
        let load = load_azp_instances(azp, &corpus)?;
        if load.resorted > 0 {
            log::warn!(
                "{} instances had candidates re-sorted nearest-first",
                load.resorted
            );
        }
        let conv = pseudogen::azp_batch_to_triples(&load.instances, &corpus, &cfg)?;
        m.config("skipped_without_gold", conv.skipped);
        (conv.triples, corpus.len())
    } else {
        let n = docs.len();
        (pseudogen::generate(&docs, &cfg, exec).0, n)
    };
    write_file(&a.out, pseudogen::write_triples(&triples))?;
    m.output("triples", &a.out);
    m.config("documents", documents)
        .config("sentences", sentences)
        .config("queries", triples.len());
    println!(
        "documents\t{documents}\tsentences\t{sentences}\tqueries\t{}",
        triples.len()
    );
    m.save(&a.out)
}

fn build_vocab(a: &BuildVocabArgs, m: &mut RunManifest) -> CliResult<()> {
    let mut all: Vec<Triple> = Vec::new();
    for (i, p) in a.triples.iter().enumerate() {
        all.extend(pseudogen::load_triples(p, DEFAULT_BLANK)?);
        m.input(&format!("triples.{i}"), p);
    }
    let v = vocab::build_shortlist(&all, a.size, a.unk_slots, DEFAULT_BLANK);
    write_file(&a.out, v.to_text())?;
    m.config("size", a.size).config("unk_slots", a.unk_slots);
    m.output("vocab", &a.out);
    m.vocab_fingerprint = Some(v.fingerprint());
    println!("shortlist\t{}\ttotal\t{}", v.shortlist_size(), v.total());
    m.save(&a.out)
}

/// Maps every triple; samples needing more unknown-word slots than the
/// vocabulary has are dropped with a warning.
fn map_file(
    path: &Path,
    v: &Vocabulary,
    m: &mut RunManifest,
    key: &str,
) -> CliResult<Vec<MappedTriple>> {
    let triples = pseudogen::load_triples(path, v.blank_symbol())?;
    let mut out = Vec::with_capacity(triples.len());
    let mut dropped = 0usize;
    for t in &triples {
        match vocab::map_triple(t, v) {
            Ok(mt) => out.push(mt),
            Err(clozezp::Error::UnkOverflow { .. }) => dropped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} triples with too many unknown words",
            path.display()
        );
    }
    m.input(key, path);
    m.config(&format!("{key}_dropped"), dropped);
    Ok(out)
}

fn run_training(a: &TrainArgs, stage: &str, m: &mut RunManifest) -> CliResult<()> {
    let exec = exec_for(a.common.workers)?;
    let v = Vocabulary::load(&a.vocab)?;
    let fp = v.fingerprint();
    m.input("vocab", &a.vocab);
    m.vocab_fingerprint = Some(fp.clone());

    let init = match (stage, &a.checkpoint) {
        ("adapt", None) => return user("adapt needs --checkpoint from a pretrain run"),
        (_, Some(path)) => {
            if !path.is_file() {
                return user(format!("checkpoint {} does not exist", path.display()));
            }
            let ck = Checkpoint::load(path)?;
            ck.verify(&v)?;
            m.input("checkpoint", path);
            ck.params
        }
        (_, None) => init_params(&ReaderConfig::new(
            a.embed_dim,
            a.hidden_dim,
            v.total(),
            a.common.seed,
        ))?,
    };
    let data = map_file(&a.triples, &v, m, "triples")?;
    let val = match &a.val_triples {
        Some(p) => map_file(p, &v, m, "val_triples")?,
        None => Vec::new(),
    };
    if data.is_empty() {
        return user(format!("{} has no usable triples", a.triples.display()));
    }
    let ckpt = a.checkpoint_dir.join(format!("{stage}.ckpt"));
    fs::create_dir_all(&a.checkpoint_dir)
        .map_err(|e| CliError::User(format!("{}: {e}", a.checkpoint_dir.display())))?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        clip_threshold: a.clip,
        max_epochs: a.epochs,
        rng_seed: a.common.seed,
        patience: (a.patience > 0).then_some(a.patience),
        checkpoint_path: Some(ckpt.clone()),
        vocab_fingerprint: fp,
        exec,
        ..TrainConfig::default()
    };
    let c = init.config();
    m.config("embed_dim", c.embed_dim)
        .config("hidden_dim", c.hidden_dim)
        .config("lr", a.lr)
        .config("batch_size", a.batch_size)
        .config("clip", a.clip)
        .config("epochs", a.epochs)
        .config("patience", a.patience);
    let (_, report) = trainer::train(init, &data, &val, &cfg)?;
    let log_path = a.checkpoint_dir.join(format!("{stage}.log.tsv"));
    write_file(&log_path, report.to_tsv())?;
    m.output("checkpoint", &ckpt).output("epoch_log", &log_path);
    print!("{}", report.to_tsv());
    m.save(&ckpt)
}

fn resolve(a: &ResolveArgs, m: &mut RunManifest) -> CliResult<()> {
    let exec = exec_for(a.common.workers)?;
    let corpus = Corpus::new(load_documents(&a.corpus)?)?;
    let load = load_azp_instances(&a.azp, &corpus)?;
    let v = Vocabulary::load(&a.vocab)?;
    if !a.checkpoint.is_file() {
        return user(format!(
            "checkpoint {} does not exist",
            a.checkpoint.display()
        ));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    ck.verify(&v)?;
    let cfg = ResolveConfig {
        restrict_to_context: !a.unrestricted,
        blank_symbol: v.blank_symbol().to_string(),
    };
    let rs = resolver::resolve_all(&load.instances, &corpus, &ck.params, &v, &cfg, exec)?;
    resolver::save_predictions(&a.out, &rs)?;
    m.input("corpus", &a.corpus)
        .input("azp", &a.azp)
        .input("vocab", &a.vocab)
        .input("checkpoint", &a.checkpoint);
    m.output("predictions", &a.out);
    m.config("restrict_to_context", cfg.restrict_to_context)
        .config("instances", rs.len())
        .config("resorted", load.resorted);
    m.vocab_fingerprint = Some(v.fingerprint());
    let matched = rs
        .iter()
        .filter(|r| r.matched_candidate_index.is_some())
        .count();
    println!("instances\t{}\tmatched\t{matched}", rs.len());
    m.save(&a.out)
}

fn eval(a: &EvalArgs, m: &mut RunManifest) -> CliResult<()> {
    let corpus = Corpus::new(load_documents(&a.corpus)?)?;
    let rs = resolver::load_predictions(&a.predictions)?;
    if rs.is_empty() {
        return user(format!(
            "{} contains no predictions to score",
            a.predictions.display()
        ));
    }
    let metrics = evaluator::score(&rs, &corpus)?;
    print!("{}", metrics.table());
    m.input("corpus", &a.corpus)
        .input("predictions", &a.predictions);
    m.config("instances", metrics.overall.total);
    if let Some(out) = &a.out {
        write_file(out, metrics.to_tsv())?;
        m.output("metrics", out);
        m.save(out)?;
    }
    Ok(())
}

fn dispatch(cmd: &Command, args: &[String]) -> CliResult<()> {
    let name = match cmd {
        Command::Generate(_) => "generate",
        Command::BuildVocab(_) => "build-vocab",
        Command::Pretrain(_) => "pretrain",
        Command::Adapt(_) => "adapt",
        Command::Resolve(_) => "resolve",
        Command::Eval(_) => "eval",
        Command::Replay { .. } => "replay",
    };
    let seed = match cmd {
        Command::Generate(a) => Some(a.common.seed),
        Command::Pretrain(a) | Command::Adapt(a) => Some(a.common.seed),
        Command::Resolve(a) => Some(a.common.seed),
        _ => None,
    };
    let mut m = RunManifest::new(name, seed, args);
    match cmd {
        Command::Generate(a) => generate(a, &mut m),
        Command::BuildVocab(a) => build_vocab(a, &mut m),
        Command::Pretrain(a) => run_training(a, "pretrain", &mut m),
        Command::Adapt(a) => run_training(a, "adapt", &mut m),
        Command::Resolve(a) => resolve(a, &mut m),
        Command::Eval(a) => eval(a, &mut m),
        Command::Replay { manifest } => {
            let recorded = RunManifest::load(manifest).map_err(CliError::User)?;
            let argv = std::iter::once("clozezp".to_string()).chain(recorded.args.iter().cloned());
            let cli = Cli::try_parse_from(argv).map_err(|e| CliError::User(e.to_string()))?;
            if matches!(cli.command, Command::Replay { .. }) {
                return user("a manifest cannot replay another replay");
            }
            dispatch(&cli.command, &recorded.args)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !is_verbosity(a))
        .collect();
    match dispatch(&cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn is_verbosity(a: &str) -> bool {
    a == "--verbose"
        || (a.len() > 1
            && a.starts_with('-')
            && !a.starts_with("--")
            && a[1..].chars().all(|c| c == 'v'))
}
