//! The `caet` command line: data preparation, training, transfer and evaluation.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{
    build_vocab, load_corpus, make_synthetic, polarize, polarize_scored, split_sentences, write_prepared,
    CorpusFormat, PolarizedCorpus, PreparedData, ScoredSentence, Split, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    evaluate, render_table, Classifier, ClassifierConfig, EvalModels, EvalReport, FluencyLm, LmConfig,
    TextScorer, TransferPair,
};
use crate::model::{CaeModel, ModelConfig};
use crate::text::{split_words, tokenize, Attribute, TokenSequence, VocabOptions, Vocabulary};
use crate::training::{load_checkpoint, Trainer, TrainingConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const EVAL_MODELS_FILE: &str = "eval_models.bin";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const REPORT_FILE: &str = "eval_report.json";

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownAttribute(_) => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Shape { .. } | Error::EmptyLoss | Error::MixedAttributes => 1,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "caet", version, about = "Attribute transfer with a conditional auto-encoder")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Directory holding prepared data; defaults to the output directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the two attribute corpora, splits and vocabulary.
    PrepareData(PrepareArgs),
    /// Train the classifier and language model used by `eval`.
    TrainEvalModels,
    /// Train a transfer model.
    Train(TrainArgs),
    /// Rewrite text into a destination attribute.
    Transfer(TransferArgs),
    /// Score transfers with the automatic metrics.
    Eval(EvalArgs),
    /// Tabulate saved evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Plain,
    Scored,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Generate the synthetic two-attribute corpus.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    /// Sentences per attribute for `--synthetic`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Raw corpus file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `plain`: one comment per line; `scored`: `score<TAB>text`.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Evaluation models used to score a plain-text corpus.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Vocabulary the scorer was trained with.
    #[arg(long, requires = "scorer")]
    pub scorer_vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Override the configured number of steps.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Defaults to `model.ckpt` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Destination attribute name.
    #[arg(long)]
    pub to: String,
    /// A single sentence.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// One sentence per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Print `source<TAB>output`.
    #[arg(long)]
    pub both: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Dev,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Transfer the held-out split with this checkpoint.
    #[arg(long, conflicts_with = "pairs")]
    pub checkpoint: Option<PathBuf>,
    /// Third-party outputs: `source<TAB>output[<TAB>reference]`.
    #[arg(long, requires = "from")]
    pub pairs: Option<PathBuf>,
    /// Source attribute of every line in `--pairs`.
    #[arg(long)]
    pub from: Option<String>,
    /// Defaults to `eval_models.bin` in the output directory.
    #[arg(long)]
    pub eval_models: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Row label in the printed table.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files written by `eval`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Print one JSON object keyed by file stem instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub input: Option<PathBuf>,
    pub format: CorpusFormat,
    pub split_sentences: bool,
    pub hi: f32,
    pub lo: f32,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub attributes: [String; 2],
    pub synthetic: SyntheticSpec,
    pub n_per_attribute: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            input: None,
            format: CorpusFormat::Scored,
            split_sentences: true,
            hi: 0.9,
            lo: 0.1,
            dev_fraction: 0.075,
            test_fraction: 0.125,
            attributes: ["toxic".into(), "civil".into()],
            synthetic: SyntheticSpec::default(),
            n_per_attribute: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub classifier: ClassifierConfig,
    pub lm: LmConfig,
    pub centered_embeddings: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            classifier: ClassifierConfig::default(),
            lm: LmConfig::default(),
            centered_embeddings: true,
        }
    }
}

/// Everything a run needs, as one JSON document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Dataset name, the stem of the prepared files.
    pub name: Option<String>,
    /// Where prepared data lives; defaults to the output directory.
    pub data_dir: Option<PathBuf>,
    pub vocab: VocabOptions,
    pub prepare: PrepareConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

/// Config with the seed resolved and paths anchored.
struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    force: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg: RunConfig = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(cfg.seed).ok_or_else(|| {
            Error::Config("a seed is required: pass --seed or set \"seed\" in the config".into())
        })?;
        cfg.seed = Some(seed);
        if cli.data_dir.is_some() {
            cfg.data_dir = cli.data_dir.clone();
        }
        cfg.training.seed = seed;
        cfg.prepare.synthetic.seed = seed;
        cfg.eval.classifier.seed = seed;
        cfg.eval.lm.seed = seed;
        cfg.training.validate()?;
        Ok(Ctx {
            cfg,
            seed,
            out: cli.out.clone(),
            force: cli.force,
        })
    }

    fn name(&self) -> &str {
        self.cfg.name.as_deref().unwrap_or("corpus")
    }

    fn data_dir(&self) -> &Path {
        self.cfg.data_dir.as_deref().unwrap_or(&self.out)
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let p = self.out.join(name);
        if p.exists() && !self.force {
            return Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display())));
        }
        Ok(p)
    }

    fn load_data(&self) -> Result<PreparedData> {
        let dir = self.data_dir();
        PreparedData::load(dir, self.name()).map_err(|e| match e {
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => Error::Config(format!(
                "no prepared data named {:?} in {}; run `caet prepare-data` first",
                self.name(),
                dir.display()
            )),
            e => e,
        })
    }

    fn max_len(&self) -> usize {
        self.cfg.training.max_len
    }
}

fn tokenize_all(texts: &[String], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Vec<usize>>> {
    texts.iter().map(|t| tokenize(t, vocab, max_len)).collect()
}

fn average_len(texts: &[String]) -> f64 {
    if texts.is_empty() {
        return 0.0;
    }
    texts.iter().map(|t| split_words(&t.to_lowercase()).len()).sum::<usize>() as f64 / texts.len() as f64
}

/// Per-split counts and mean token lengths, one row per attribute.
pub fn statistics_table(data: &PreparedData) -> String {
    let mut s = format!(
        "{:<10} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}\n",
        "attribute", "train", "dev", "test", "len-train", "len-dev", "len-test"
    );
    for a in Attribute::BOTH {
        let parts = [Split::Train, Split::Dev, Split::Test].map(|sp| data.split(a, sp));
        s.push_str(&format!(
            "{:<10} {:>7} {:>7} {:>7} {:>9.2} {:>9.2} {:>9.2}\n",
            data.provenance.attributes[a.index()],
            parts[0].len(),
            parts[1].len(),
            parts[2].len(),
            average_len(parts[0]),
            average_len(parts[1]),
            average_len(parts[2]),
        ));
    }
    s
}

fn prepare_data(ctx: &Ctx, args: &PrepareArgs) -> Result<()> {
    let p = &ctx.cfg.prepare;
    let input = args.input.clone().or_else(|| p.input.clone());
    let corpus = if args.synthetic || input.is_none() && args.scorer.is_none() && p.input.is_none() {
        if !args.synthetic {
            return Err(Error::Config("pass --synthetic or --input <corpus>".into()));
        }
        let n = args.n.unwrap_or(p.n_per_attribute);
        make_synthetic(&p.synthetic, n)?.0
    } else {
        let input = input.ok_or_else(|| Error::Config("--input is required".into()))?;
        if !input.exists() {
            return Err(Error::Config(format!("{} does not exist", input.display())));
        }
        let format = match args.format {
            Some(FormatArg::Plain) => CorpusFormat::Plain,
            Some(FormatArg::Scored) => CorpusFormat::Scored,
            None => p.format,
        };
        let loaded = load_corpus(&input, format)?;
        if loaded.blank_lines > 0 {
            eprintln!("skipped {} blank lines", loaded.blank_lines);
        }
        let attrs = [p.attributes[0].as_str(), p.attributes[1].as_str()];
        let mut scored = Vec::new();
        let mut plain = Vec::new();
        for c in &loaded.comments {
            let pieces = if p.split_sentences { split_sentences(&c.text) } else { vec![c.text.clone()] };
            for text in pieces {
                match c.score {
                    Some(score) => scored.push(ScoredSentence { text, score }),
                    None => plain.push(text),
                }
            }
        }
        let mut corpus = match format {
            CorpusFormat::Scored => polarize_scored(scored, p.hi, p.lo, attrs, "human scores")?,
            CorpusFormat::Plain => {
                let (Some(scorer), Some(scorer_vocab)) = (&args.scorer, &args.scorer_vocab) else {
                    return Err(Error::Config(
                        "plain-text corpora need --scorer <eval_models.bin> and --scorer-vocab <vocab.txt>".into(),
                    ));
                };
                let vocab = Vocabulary::load(scorer_vocab, attrs)?;
                let models = EvalModels::load(scorer, &vocab)?;
                let scorer = TextScorer {
                    classifier: &models.classifier,
                    vocab: &vocab,
                    max_len: ctx.max_len(),
                };
                polarize(&plain, &scorer, p.hi, p.lo, attrs)?
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        corpus.first.shuffle(&mut rng);
        corpus.second.shuffle(&mut rng);
        corpus.provenance.seed = Some(ctx.seed);
        corpus.set_splits(p.dev_fraction, p.test_fraction)?;
        corpus
    };
    check_attributes(&corpus)?;
    let vocab = build_vocab(&corpus, &ctx.cfg.vocab)?;
    write_prepared(&ctx.out, ctx.name(), &corpus, &vocab, ctx.force)?;
    let data = PreparedData::load(&ctx.out, ctx.name())?;
    println!(
        "kept {} + {} of {} sentences ({} discarded); vocabulary {}",
        corpus.provenance.counts[0],
        corpus.provenance.counts[1],
        corpus.provenance.input_sentences,
        corpus.provenance.discarded,
        vocab.len()
    );
    print!("{}", statistics_table(&data));
    Ok(())
}

fn check_attributes(corpus: &PolarizedCorpus) -> Result<()> {
    let [a, b] = &corpus.provenance.attributes;
    if a.trim().is_empty() || b.trim().is_empty() || a == b {
        return Err(Error::Config("two distinct, non-empty attribute names are required".into()));
    }
    Ok(())
}

fn train_eval_models(ctx: &Ctx) -> Result<()> {
    let data = ctx.load_data()?;
    let out = ctx.out_file(EVAL_MODELS_FILE)?;
    let vocab = &data.vocab;
    let first = tokenize_all(data.split(Attribute::First, Split::Train), vocab, ctx.max_len())?;
    let second = tokenize_all(data.split(Attribute::Second, Split::Train), vocab, ctx.max_len())?;

    let mut classifier = Classifier::new(ctx.cfg.eval.classifier.clone(), vocab.len())?;
    let clf_losses = classifier.train(&first, &second)?;
    let mut lm_cfg = ctx.cfg.eval.lm.clone();
    lm_cfg.max_positions = lm_cfg.max_positions.max(ctx.max_len());
    let mut lm = FluencyLm::new(lm_cfg, vocab.len())?;
    let both: Vec<Vec<usize>> = first.iter().chain(&second).cloned().collect();
    let lm_losses = lm.train(&both)?;

    let mut correct = 0;
    let mut total = 0;
    for a in Attribute::BOTH {
        for s in tokenize_all(data.split(a, Split::Dev), vocab, ctx.max_len())? {
            total += 1;
            correct += usize::from(classifier.label(&s)? == Some(a));
        }
    }
    let models = EvalModels {
        classifier,
        lm,
        vocab_sha256: vocab.content_hash(),
        centered_embeddings: ctx.cfg.eval.centered_embeddings,
    };
    models.save(&out)?;
    println!(
        "classifier loss {:.4}; LM loss {:.4}",
        clf_losses.last().copied().unwrap_or(f32::NAN),
        lm_losses.last().copied().unwrap_or(f32::NAN)
    );
    if total > 0 {
        println!("classifier dev accuracy {:.4} ({correct}/{total})", correct as f64 / total as f64);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let data = ctx.load_data()?;
    let mut tc = ctx.cfg.training.clone();
    if let Some(steps) = args.steps {
        tc.steps = steps;
    }
    tc.validate()?;
    let ckpt = ctx.out_file(CHECKPOINT_FILE)?;
    let log_path = ctx.out_file(TRAIN_LOG_FILE)?;
    let vocab = data.vocab.clone();
    let first = tokenize_all(data.split(Attribute::First, Split::Train), &vocab, tc.max_len)?;
    let second = tokenize_all(data.split(Attribute::Second, Split::Train), &vocab, tc.max_len)?;
    let mc = ModelConfig {
        vocab_size: vocab.len(),
        ..ctx.cfg.model.clone()
    };
    let model = CaeModel::new(mc, ctx.seed)?;
    let mut trainer = Trainer::new(model, tc.clone(), vocab, first, second)?;
    let mut log = BufWriter::new(File::create(&log_path)?);
    let ckpt_dir = ctx.out.join("checkpoints");
    if tc.checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir)?;
    }
    let report_every = (tc.steps / 20).max(1);
    while trainer.steps_done() < tc.steps {
        let l = trainer.step()?;
        writeln!(log, "{}", l.log_line())?;
        if tc.checkpoint_every > 0 && l.step % tc.checkpoint_every == 0 {
            trainer.save(&ckpt_dir.join(format!("step-{:06}.ckpt", l.step)))?;
        }
        if l.step % report_every == 0 {
            eprintln!("step {:>6}  dae {:.4}  cc {:.4}  total {:.4}", l.step, l.dae, l.cc, l.total);
        }
    }
    log.flush()?;
    trainer.save(&ckpt)?;
    println!("wrote {} and {}", ckpt.display(), log_path.display());
    Ok(())
}

fn checkpoint_path(ctx: &Ctx, explicit: &Option<PathBuf>) -> Result<PathBuf> {
    let p = explicit.clone().unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
    if !p.exists() {
        return Err(Error::Config(format!(
            "checkpoint {} not found; run `caet train` first",
            p.display()
        )));
    }
    Ok(p)
}

/// Greedy transfer of raw text; blank input gives blank output.
pub fn transfer_text(
    model: &CaeModel,
    vocab: &Vocabulary,
    text: &str,
    to: Attribute,
    max_len: usize,
) -> Result<String> {
    if text.trim().is_empty() {
        return Ok(String::new());
    }
    let ids = tokenize(text, vocab, max_len)?;
    let gen_len = crate::training::pseudo_transfer_len(model, vocab, max_len);
    Ok(vocab.decode(&model.generate(&ids, to, vocab, gen_len)?))
}

fn transfer(ctx: &Ctx, args: &TransferArgs) -> Result<()> {
    let ck = load_checkpoint(&checkpoint_path(ctx, &args.checkpoint)?)?;
    let to = ck.vocab.attribute(&args.to)?;
    let max_len = ck.training.as_ref().map_or(ctx.max_len(), |t| t.max_len);
    let lines: Vec<String> = match (&args.text, &args.input) {
        (Some(t), None) => vec![t.clone()],
        (None, Some(p)) => fs::read_to_string(p)?.lines().map(str::to_string).collect(),
        _ => return Err(Error::Config("pass exactly one of --text or --input".into())),
    };
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    for line in &lines {
        let out = transfer_text(&ck.model, &ck.vocab, line, to, max_len)?;
        if args.both {
            writeln!(w, "{line}\t{out}")?;
        } else {
            writeln!(w, "{out}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn load_eval_models(ctx: &Ctx, explicit: &Option<PathBuf>, vocab: &Vocabulary) -> Result<EvalModels> {
    let p = explicit.clone().unwrap_or_else(|| ctx.out.join(EVAL_MODELS_FILE));
    if !p.exists() {
        return Err(Error::Config(format!(
            "evaluation models {} not found; run `caet train-eval-models` first",
            p.display()
        )));
    }
    EvalModels::load(&p, vocab)
}

fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let data = ctx.load_data()?;
    let vocab = &data.vocab;
    let models = load_eval_models(ctx, &args.eval_models, vocab)?;
    let max_len = ctx.max_len();
    let seq = |text: &str, a: Attribute| -> Result<TokenSequence> {
        Ok(TokenSequence::new(tokenize(text, vocab, max_len)?, a))
    };
    let mut pairs = Vec::new();
    let label;
    if let Some(path) = &args.pairs {
        let from = vocab.attribute(args.from.as_deref().unwrap_or_default())?;
        label = args.label.clone().unwrap_or_else(|| stem(path));
        for (i, line) in fs::read_to_string(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    msg: "expected source<TAB>output[<TAB>reference]".into(),
                });
            }
            let reference = cols.get(2).map(|r| seq(r, from.other())).transpose()?;
            pairs.push(TransferPair::new(seq(cols[0], from)?, seq(cols[1], from.other())?.ids, reference));
        }
    } else {
        let ck = load_checkpoint(&checkpoint_path(ctx, &args.checkpoint)?)?;
        label = args.label.clone().unwrap_or_else(|| "cae".into());
        let split = match args.split {
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        };
        for a in Attribute::BOTH {
            for text in data.split(a, split) {
                let out = transfer_text(&ck.model, &ck.vocab, text, a.other(), max_len)?;
                let out_ids = if out.trim().is_empty() {
                    vec![crate::text::EOS]
                } else {
                    tokenize(&out, vocab, max_len)?
                };
                pairs.push(TransferPair::new(seq(text, a)?, out_ids, None));
            }
        }
    }
    let embedder = models.embedder();
    let report = evaluate(&pairs, &models.classifier, &models.lm, &embedder)?;
    let out = ctx.out_file(REPORT_FILE)?;
    fs::write(&out, report.to_json()? + "\n")?;
    print!("{}", render_table(&[(label.as_str(), &report)]));
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn report(args: &ReportArgs) -> Result<()> {
    let mut rows: BTreeMap<String, EvalReport> = BTreeMap::new();
    let mut order = Vec::new();
    for p in &args.reports {
        let r: EvalReport = serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
        let mut name = stem(p);
        if name == "eval_report" {
            name = p
                .parent()
                .and_then(|d| d.file_name())
                .map_or(name, |d| d.to_string_lossy().into_owned());
        }
        order.push(name.clone());
        rows.insert(name, r);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        let table: Vec<(&str, &EvalReport)> = order.iter().map(|n| (n.as_str(), &rows[n])).collect();
        print!("{}", render_table(&table));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Report(args) = &cli.command {
        return report(args);
    }
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::PrepareData(a) => prepare_data(&ctx, a),
        Command::TrainEvalModels => train_eval_models(&ctx),
        Command::Train(a) => train(&ctx, a),
        Command::Transfer(a) => transfer(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Report(_) => unreachable!(),
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
