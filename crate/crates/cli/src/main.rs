mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dlgparse::corpus::{
    build_vocab, corpus_stats, preprocess_all, read_corpus, split_validation, synthetic, write_corpus, Dialogue,
};
use dlgparse::decode::EdgeSet;
use dlgparse::error::{CorpusError, ModelError};
use dlgparse::eval::GoldMode;
use dlgparse::model::{Mode, Model};
use dlgparse::output::{read_parses, score_records, to_dot, write_parses, ParseRecord};
use dlgparse::predictor::parse;
use dlgparse::training::{train, EpochMetrics};

use config::{DecoderName, RunConfig};

#[derive(Parser)]
#[command(
    name = "dlgparse",
    version,
    about = "Discourse dependency parser for multi-party dialogues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and keep the checkpoint with the best validation Link&Rel F1.
    Train(TrainArgs),
    /// Parse a corpus with a trained model.
    Parse(ParseArgs),
    /// Score a parse-output file against a gold corpus.
    Eval(EvalArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Write a template-generated toy corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Validation corpus; defaults to the last tenth of --corpus.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Pretrained word vectors, one token and its values per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(Mode))]
    mode: Option<Mode>,
    /// Link prediction and relation classification share one encoder.
    #[arg(long)]
    shared: bool,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    repr_dim: Option<usize>,
    #[arg(long)]
    rel_dim: Option<usize>,
    #[arg(long)]
    head_dim: Option<usize>,
    /// Minimum training-set frequency for a word to enter the vocabulary.
    #[arg(long)]
    min_freq: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgeArg {
    Forward,
    AllPairs,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderName>,
    /// Candidate links for MST decoding.
    #[arg(long, value_enum)]
    edges: Option<EdgeArg>,
    /// Also write one Graphviz file per dialogue.
    #[arg(long)]
    dot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoldArg {
    Tree,
    Graph,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Parse-output file.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Gold corpus.
    #[arg(long, alias = "gold")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score against one gold parent per EDU or against every gold relation.
    #[arg(long, value_enum)]
    gold_mode: Option<GoldArg>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Model(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Model(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Model(m) => m,
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => Failure::Usage(m),
            e => Failure::Model(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {}", path.display(), e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Parse(a) => cmd_parse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn base_config(common: &Common, command: &str) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    cfg.command = command.to_owned();
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, Failure> {
    let p = p
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("missing required --{}", flag)))?;
    if !p.exists() {
        return Err(Failure::Usage(format!("--{}: {} does not exist", flag, p.display())));
    }
    Ok(p)
}

fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>, Failure> {
    Ok(preprocess_all(&read_corpus(path)?)?)
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common, "train")?;
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => { $( if let Some(v) = $flag { $field = v; } )* };
    }
    set!(
        a.epochs => cfg.train.epochs,
        a.lr => cfg.train.lr,
        a.lr_decay => cfg.train.lr_decay,
        a.batch_size => cfg.train.batch_size,
        a.dropout => cfg.train.dropout,
        a.mode => cfg.model.mode,
        a.word_dim => cfg.model.word_dim,
        a.repr_dim => cfg.model.repr_dim,
        a.rel_dim => cfg.model.rel_dim,
        a.head_dim => cfg.model.head_dim,
    );
    if a.clip_norm.is_some() {
        cfg.train.clip_norm = a.clip_norm;
    }
    if a.shared {
        cfg.model.shared = true;
    }
    cfg.corpus = a.corpus.or(cfg.corpus);
    cfg.valid_corpus = a.valid.or(cfg.valid_corpus);
    cfg.embeddings = a.embeddings.or(cfg.embeddings);
    cfg.out = a.out.or(cfg.out);
    cfg.min_freq = a.min_freq.or(cfg.min_freq).or(Some(1));

    let corpus = require(&cfg.corpus, "corpus")?.clone();
    if let Some(v) = &cfg.valid_corpus {
        require(&Some(v.clone()), "valid")?;
    }
    if let Some(e) = &cfg.embeddings {
        require(&Some(e.clone()), "embeddings")?;
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("missing required --out".into()))?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.persist().map_err(Failure::Usage)?;

    let all = load_dialogues(&corpus)?;
    let (train_set, valid) = match &cfg.valid_corpus {
        Some(v) => (all, load_dialogues(v)?),
        None => split_validation(&all),
    };
    let vocab = build_vocab(&train_set, cfg.min_freq.unwrap_or(1));
    let mut model = Model::new(cfg.model.clone(), vocab, cfg.train.seed)?;
    if let Some(path) = &cfg.embeddings {
        let f = File::open(path).map_err(|e| io_failure(path, e))?;
        let found = model.load_embeddings(BufReader::new(f))?;
        log::info!("initialized {} word vectors from {}", found, path.display());
    }

    let log_path = out.join("metrics.tsv");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_failure(&log_path, e))?);
    let mut write_err = None;
    let outcome = train(&mut model, &train_set, &valid, &cfg.train, &mut |m: &EpochMetrics| {
        eprintln!("{}", m);
        if let Err(e) = writeln!(log, "{}", m).and_then(|_| log.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_failure(&log_path, e));
    }

    let ckpt = out.join("model.ckpt");
    let f = File::create(&ckpt).map_err(|e| io_failure(&ckpt, e))?;
    outcome.best.save(BufWriter::new(f))?;
    println!(
        "best epoch {} (validation Link&Rel F1 {:.4}); checkpoint {}",
        outcome.best_epoch,
        outcome.metrics[outcome.best_epoch].valid_link_rel_f1,
        ckpt.display()
    );
    Ok(())
}

fn cmd_parse(a: ParseArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common, "parse")?;
    cfg.corpus = a.corpus.or(cfg.corpus);
    cfg.checkpoint = a.checkpoint.or(cfg.checkpoint);
    cfg.out = a.out.or(cfg.out);
    cfg.decoder = a.decoder.or(cfg.decoder);
    if let Some(e) = a.edges {
        cfg.edges = Some(match e {
            EdgeArg::Forward => EdgeSet::Forward,
            EdgeArg::AllPairs => EdgeSet::AllPairs,
        });
    }
    cfg.dot |= a.dot;
    let corpus = require(&cfg.corpus, "corpus")?.clone();
    let ckpt = require(&cfg.checkpoint, "checkpoint")?.clone();
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("missing required --out".into()))?;

    let f = File::open(&ckpt).map_err(|e| io_failure(&ckpt, e))?;
    let model = Model::load(BufReader::new(f))?;
    cfg.model = model.config.clone();
    cfg.persist().map_err(Failure::Usage)?;

    let dialogues = load_dialogues(&corpus)?;
    let decoder = cfg.decoder();
    let parsed = dialogues
        .iter()
        .map(|d| parse(&model, d, decoder, cfg.train.seed))
        .collect::<Result<Vec<_>, _>>()?;

    let records: Vec<ParseRecord> = parsed.iter().map(ParseRecord::from).collect();
    let path = out.join("parses.jsonl");
    let f = File::create(&path).map_err(|e| io_failure(&path, e))?;
    write_parses(BufWriter::new(f), &records)?;
    if cfg.dot {
        let dir = out.join("dot");
        fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        for (k, (p, d)) in parsed.iter().zip(&dialogues).enumerate() {
            let file = dir.join(format!("{:04}_{}.dot", k, file_stem(&p.id)));
            fs::write(&file, to_dot(p, d)).map_err(|e| io_failure(&file, e))?;
        }
    }
    println!("parsed {} dialogue(s) into {}", parsed.len(), path.display());
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common, "eval")?;
    cfg.predictions = a.pred.or(cfg.predictions);
    cfg.corpus = a.corpus.or(cfg.corpus);
    cfg.out = a.out.or(cfg.out);
    if let Some(g) = a.gold_mode {
        cfg.gold_mode = match g {
            GoldArg::Tree => GoldMode::Tree,
            GoldArg::Graph => GoldMode::Graph,
        };
    }
    let pred = require(&cfg.predictions, "pred")?.clone();
    let corpus = require(&cfg.corpus, "corpus")?.clone();
    cfg.persist().map_err(Failure::Usage)?;

    let f = File::open(&pred).map_err(|e| io_failure(&pred, e))?;
    let records = read_parses(BufReader::new(f))?;
    let gold = load_dialogues(&corpus)?;
    let report = score_records(&records, &gold, cfg.gold_mode).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{}", report);
    println!("{}", report.key_values());
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<(), Failure> {
    let corpus = require(&a.corpus, "corpus")?;
    let stats = corpus_stats(&read_corpus(corpus)?)?;
    println!("{}", stats);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let dialogues = preprocess_all(&synthetic::generate(a.count, a.seed))?;
    let f = File::create(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let mut w = BufWriter::new(f);
    write_corpus(&mut w, &dialogues)?;
    w.flush().map_err(|e| io_failure(&a.out, e))?;
    Ok(())
}
