//! Command-line front end: data preparation, training, evaluation,
//! generation and tagging.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::{
    consolidate, corpus_stats, filter_by_cues, kfold_split, load_consolidated, load_corpus, load_raw, read_jsonl_lines,
    split_sentences, write_consolidated, ConsolidatedSentence, CorpusError, CueLexicon, VaguenessClass,
};
use crate::discriminator::{DiscConfig, DiscVariant, Discriminator, GanMode, DISCRIMINATOR_KIND};
use crate::embeddings::{load_embeddings, save_embeddings, train_skipgram, EmbeddingError, SkipGramConfig, Vocabulary};
use crate::evaluation::{
    aggregate_folds, binary_prf, confusion, roc_auc, roc_per_class, weighted_prf, EvalError, FoldAggregation,
};
use crate::gan_trainer::{
    labeled_from, majority_baseline, train_acgan, train_baseline, GanConfig, MajorityClassifier, MAJORITY_KIND,
};
use crate::generator::{pretrain_lm, sample_classes, GeneratorConfig, LmGenerator};
use crate::harness::{make_synthetic, reproduce, HarnessError, ReproduceOptions, SyntheticCorpusSpec, TARGETS};
use crate::nn::ModelError;
use crate::tensor::Rng;
use crate::word_tagger::{
    tag_sentence, train_tagger, TaggerConfig, WordModel, WordModelKind, AGNOSTIC_KIND, AWARE_KIND,
};

const DEFAULT_MAX_VOCAB: usize = 10_000;
const DEFAULT_FOLDS: usize = 5;
const DEFAULT_VAL_FRACTION: f64 = 0.1;
const DEFAULT_ANNOTATOR_THRESHOLD: usize = 2;
const DEFAULT_SAMPLES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DivergenceDetected(_) => CliError::Divergence(e.to_string()),
            ModelError::ConfigInvalid(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::SpecInvalid(_) | HarnessError::TargetUnknown(_) => CliError::Usage(e.to_string()),
            HarnessError::Model(m) => m.into(),
            HarnessError::Corpus(c) => c.into(),
            HarnessError::Eval(v) => v.into(),
        }
    }
}

/// Sentence-model training recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SentenceMode {
    Full,
    VaguenessOnly,
    BaselineCnn,
    BaselineLstm,
    Majority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cnn,
    Lstm,
}

impl From<VariantArg> for DiscVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Cnn => DiscVariant::Cnn,
            VariantArg::Lstm => DiscVariant::Lstm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Clear,
    SomewhatClear,
    Vague,
    ExtremelyVague,
}

impl From<ClassArg> for VaguenessClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Clear => VaguenessClass::Clear,
            ClassArg::SomewhatClear => VaguenessClass::SomewhatClear,
            ClassArg::Vague => VaguenessClass::Vague,
            ClassArg::ExtremelyVague => VaguenessClass::ExtremelyVague,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Aware,
    Agnostic,
}

impl From<KindArg> for WordModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Aware => WordModelKind::Aware,
            KindArg::Agnostic => WordModelKind::Agnostic,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "vagueness",
    version,
    about = "Vague word and sentence detection for privacy-policy text"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Settings file (TOML, or JSON when the name ends in .json); flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the seeds in the settings file
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Derive gold word labels and sentence classes from an annotated corpus
    Consolidate {
        /// Annotated corpus (JSONL)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Consolidated gold file (JSONL)
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Minimum number of distinct annotators for a vague word
        #[arg(long)]
        threshold: Option<usize>,
        /// Cue lexicon; when given, only sentences containing a cue word are kept
        #[arg(long, value_name = "PATH")]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Agreement and distribution statistics of an annotated corpus
    Stats {
        /// Annotated corpus (JSONL)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Report file (JSON); stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Minimum number of distinct annotators for a vague word
        #[arg(long)]
        threshold: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Seeded k-fold split of any JSONL file into train/val/test files
    Split {
        /// Input records (JSONL)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Output directory; receives fold-<i>/{train,val,test}.jsonl and folds.json
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of folds
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train skip-gram word embeddings on raw sentences
    TrainEmbed {
        /// Raw sentences (JSONL with id and tokens)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Embedding file (word2vec text format)
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a vague-word classifier
    TrainWord {
        /// Consolidated gold training file (JSONL)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Model checkpoint
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Context-aware BiLSTM tagger or context-agnostic classifier
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Validation file for model selection (JSONL)
        #[arg(long, value_name = "PATH")]
        val: Option<PathBuf>,
        /// Pretrained embeddings (word2vec text format)
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a sentence vagueness classifier
    TrainSentence {
        /// Consolidated gold training file (JSONL)
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Classifier checkpoint
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Training recipe
        #[arg(long, value_enum)]
        mode: Option<SentenceMode>,
        /// Discriminator body for the adversarial modes
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Gumbel-softmax temperature for generated sentences
        #[arg(long)]
        tau: Option<f64>,
        /// Cue lexicon used to initialize the generator's vagueness bias
        #[arg(long, value_name = "PATH")]
        lexicon: Option<PathBuf>,
        /// Validation file for model selection (JSONL)
        #[arg(long, value_name = "PATH")]
        val: Option<PathBuf>,
        /// Raw sentences for language-model pretraining (JSONL)
        #[arg(long, value_name = "PATH")]
        raw: Option<PathBuf>,
        /// Pretrained embeddings (word2vec text format)
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Checkpoint for the trained generator
        #[arg(long, value_name = "PATH")]
        generator_out: Option<PathBuf>,
        /// Per-step loss log (CSV)
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions, a checkpoint, or a cross-validated recipe
    Eval {
        /// Gold file (JSONL) for --model or cross-validation
        #[arg(long = "in", value_name = "PATH")]
        input: Option<PathBuf>,
        /// Predicted classes (JSONL with a "class" field)
        #[arg(long, value_name = "PATH")]
        pred: Option<PathBuf>,
        /// Gold classes (JSONL with a "class" field)
        #[arg(long, value_name = "PATH")]
        gold: Option<PathBuf>,
        /// Word or sentence checkpoint to score on --in
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Cross-validate the --mode recipe on --in with this many folds
        #[arg(long)]
        folds: Option<usize>,
        /// Training recipe for cross-validation
        #[arg(long, value_enum)]
        mode: Option<SentenceMode>,
        /// Discriminator body for the adversarial modes
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Gumbel-softmax temperature for generated sentences
        #[arg(long)]
        tau: Option<f64>,
        /// Cue lexicon used to initialize the generator's vagueness bias
        #[arg(long, value_name = "PATH")]
        lexicon: Option<PathBuf>,
        /// ROC points (CSV) of the scored checkpoint
        #[arg(long, value_name = "PATH")]
        roc: Option<PathBuf>,
        /// Report file (JSON); stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample sentences from a trained generator
    Generate {
        /// Generator checkpoint
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Vagueness class to condition on; uniform over classes when absent
        #[arg(long, value_enum)]
        class: Option<ClassArg>,
        /// Number of sentences
        #[arg(long)]
        n: Option<usize>,
        /// Gumbel-softmax temperature
        #[arg(long)]
        tau: Option<f64>,
        /// Output file (JSONL); stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Tag vague words and sentences in raw text
    Tag {
        /// Word-model checkpoint
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Sentence-classifier checkpoint
        #[arg(long, value_name = "PATH")]
        sentence_model: Option<PathBuf>,
        /// Text to tag
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// Plain-text file to tag
        #[arg(long = "in", value_name = "PATH")]
        input: Option<PathBuf>,
        /// Probability at or above which a word is labelled vague
        #[arg(long)]
        threshold: Option<f64>,
        /// Print sentences with vague words highlighted instead of JSON
        #[arg(long)]
        highlight: bool,
        /// Report file (JSON); stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic annotated corpus with planted vague words
    Synth {
        /// Annotated corpus (JSONL)
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Planted gold labels (consolidated JSONL)
        #[arg(long, value_name = "PATH")]
        gold_out: Option<PathBuf>,
        /// Number of sentences
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a desk-scale reproduction target and report pass/fail
    Reproduce {
        /// Target name, or "all"
        #[arg(long)]
        target: String,
        /// Report file (JSON); stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Settings file contents. Every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    /// Minimum distinct annotators for a vague word.
    pub threshold: Option<usize>,
    pub folds: Option<usize>,
    pub val_fraction: Option<f64>,
    pub max_vocab: Option<usize>,
    pub mode: Option<SentenceMode>,
    pub variant: Option<DiscVariant>,
    pub kind: Option<WordModelKind>,
    pub tau: Option<f64>,
    pub class: Option<VaguenessClass>,
    pub n: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub aggregation: FoldAggregation,
    pub tagger: TaggerConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscConfig,
    pub gan: GanConfig,
    pub skipgram: SkipGramConfig,
    pub synthetic: SyntheticCorpusSpec,
    pub reproduce: ReproduceOptions,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    fn resolve(common: &Common) -> Result<(Self, u64), CliError> {
        let mut s = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let seed = common.seed.or(s.seed);
        if let Some(seed) = seed {
            s.tagger.seed = seed;
            s.generator.seed = seed;
            s.discriminator.seed = seed;
            s.gan.seed = seed;
            s.synthetic.seed = seed;
            s.reproduce.seed = seed;
        }
        Ok((s, seed.unwrap_or(0)))
    }

    fn lexicon(&self, flag: Option<&PathBuf>) -> Result<CueLexicon, CliError> {
        match flag.or(self.lexicon.as_ref()) {
            Some(p) => Ok(CueLexicon::load(p)?),
            None => Ok(CueLexicon::default_lexicon()),
        }
    }
}

/// clap's command definition, for help rendering and documentation checks.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes `text` to `path`, or to `stdout` when no path is given.
fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn token_lists(sentences: &[ConsolidatedSentence]) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.text.clone()).collect())
        .collect()
}

fn optional_gold(path: Option<&PathBuf>) -> Result<Vec<ConsolidatedSentence>, CliError> {
    Ok(match path {
        Some(p) => load_consolidated(p)?,
        None => Vec::new(),
    })
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Consolidate {
            input,
            out,
            threshold,
            lexicon,
            common,
        } => {
            let (settings, _) = Settings::resolve(&common)?;
            let threshold = threshold.or(settings.threshold).unwrap_or(DEFAULT_ANNOTATOR_THRESHOLD);
            let mut corpus = load_corpus(&input)?;
            let total = corpus.len();
            if let Some(p) = lexicon.as_ref().or(settings.lexicon.as_ref()) {
                corpus = filter_by_cues(&corpus, &CueLexicon::load(p)?);
            }
            let gold = corpus
                .iter()
                .map(|s| consolidate(s, threshold))
                .collect::<Result<Vec<_>, _>>()?;
            write_consolidated(&out, &gold)?;
            emit(None, &pretty(&json!({"read": total, "written": gold.len()})), stdout)
        }
        Command::Stats {
            input,
            out,
            threshold,
            common,
        } => {
            let (settings, _) = Settings::resolve(&common)?;
            let threshold = threshold.or(settings.threshold).unwrap_or(DEFAULT_ANNOTATOR_THRESHOLD);
            let report = corpus_stats(&load_corpus(&input)?, threshold)?;
            emit(out.as_deref(), &pretty(&report), stdout)
        }
        Command::Split {
            input,
            out,
            folds,
            common,
        } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let k = folds.or(settings.folds).unwrap_or(DEFAULT_FOLDS);
            let val_fraction = settings.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
            let text = fs::read_to_string(&input).map_err(|e| io_error(&input, e))?;
            let lines: Vec<&str> = read_jsonl_lines(&text).map(|(_, l)| l).collect();
            let split = kfold_split(lines.len(), k, val_fraction, seed)?;
            for (i, fold) in split.iter().enumerate() {
                let dir = out.join(format!("fold-{i}"));
                fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
                for (name, idx) in [("train", &fold.train), ("val", &fold.val), ("test", &fold.test)] {
                    let body: String = idx.iter().map(|&j| format!("{}\n", lines[j])).collect();
                    write_file(&dir.join(format!("{name}.jsonl")), body.as_bytes())?;
                }
            }
            write_file(&out.join("folds.json"), pretty(&split).as_bytes())?;
            emit(None, &pretty(&json!({"records": lines.len(), "folds": k})), stdout)
        }
        Command::TrainEmbed { input, out, common } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let corpus: Vec<Vec<String>> = load_raw(&input)?.into_iter().map(|r| r.tokens).collect();
            let vocab = Vocabulary::build(&corpus, settings.max_vocab.unwrap_or(DEFAULT_MAX_VOCAB))?;
            let mut rng = Rng::new(seed);
            let report = train_skipgram(&corpus, &vocab, &settings.skipgram, &mut rng)?;
            save_embeddings(&report.embeddings, &vocab, &out)?;
            let summary = json!({
                "vocab_size": vocab.len(),
                "dim": report.embeddings.dim(),
                "heldout_loss": report.heldout_loss,
            });
            emit(None, &pretty(&summary), stdout)
        }
        Command::TrainWord {
            input,
            out,
            kind,
            val,
            embeddings,
            common,
        } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let kind = kind
                .map(WordModelKind::from)
                .or(settings.kind)
                .unwrap_or(WordModelKind::Aware);
            let train = load_consolidated(&input)?;
            let val = optional_gold(val.as_ref())?;
            let vocab = Vocabulary::build(&token_lists(&train), settings.max_vocab.unwrap_or(DEFAULT_MAX_VOCAB))?;
            let mut model = WordModel::new(kind, vocab, settings.tagger.clone())?;
            if let Some(p) = &embeddings {
                let e = load_embeddings(p, &model.vocab, Some(model.config.dim), &mut Rng::new(seed).fork(5))?;
                model.set_embeddings(&e)?;
            }
            let log = train_tagger(&mut model, &train, &val)?;
            model.to_checkpoint().save(&out)?;
            emit(None, &pretty(&log), stdout)
        }
        Command::TrainSentence {
            input,
            out,
            mode,
            variant,
            tau,
            lexicon,
            val,
            raw,
            embeddings,
            generator_out,
            log,
            common,
        } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let recipe = Recipe::new(&settings, mode, variant, tau, lexicon.as_ref(), seed)?;
            let train = load_consolidated(&input)?;
            let val = optional_gold(val.as_ref())?;
            let lm = match &raw {
                Some(p) => load_raw(p)?.into_iter().map(|r| r.tokens).collect(),
                None => token_lists(&train),
            };
            let trained = recipe.train(&train, &val, &lm, embeddings.as_deref())?;
            trained.model.to_checkpoint().save(&out)?;
            match (&generator_out, &trained.generator) {
                (Some(p), Some(g)) => g.to_checkpoint().save(p)?,
                (Some(_), None) => {
                    return Err(CliError::Usage(format!(
                        "--generator-out needs an adversarial mode, got {:?}",
                        recipe.mode
                    )))
                }
                _ => {}
            }
            if let Some(p) = &log {
                write_file(p, trained.log_csv.as_bytes())?;
            }
            emit(None, &pretty(&trained.summary), stdout)
        }
        Command::Eval {
            input,
            pred,
            gold,
            model,
            folds,
            mode,
            variant,
            tau,
            lexicon,
            roc,
            out,
            common,
        } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let report = match (pred, gold, model, input) {
                (Some(p), Some(g), None, None) => eval_predictions(&p, &g)?,
                (None, None, Some(m), Some(i)) => eval_checkpoint(&m, &i, roc.as_deref())?,
                (None, None, None, Some(i)) => {
                    let recipe = Recipe::new(&settings, mode, variant, tau, lexicon.as_ref(), seed)?;
                    let k = folds.or(settings.folds).unwrap_or(DEFAULT_FOLDS);
                    let val_fraction = settings.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
                    cross_validate(
                        &recipe,
                        &load_consolidated(&i)?,
                        k,
                        val_fraction,
                        seed,
                        settings.aggregation,
                    )?
                }
                _ => {
                    return Err(CliError::Usage(
                        "eval needs --pred with --gold, --model with --in, or --in with a --mode recipe".into(),
                    ))
                }
            };
            emit(out.as_deref(), &pretty(&report), stdout)
        }
        Command::Generate {
            model,
            class,
            n,
            tau,
            out,
            common,
        } => {
            let (settings, seed) = Settings::resolve(&common)?;
            let ckpt = Checkpoint::load(&model)?;
            let gen = LmGenerator::from_checkpoint(&ckpt)?;
            let n = n.or(settings.n).unwrap_or(DEFAULT_SAMPLES);
            let tau = tau.or(settings.tau).unwrap_or(gen.config.tau);
            let mut rng = Rng::new(seed);
            let classes = match class.map(VaguenessClass::from).or(settings.class) {
                Some(c) => vec![c; n],
                None => sample_classes(n, None, &mut rng),
            };
            let mut text = String::new();
            for s in gen.generate_batch(&classes, tau, &mut rng)? {
                let line = json!({"class": s.class, "tokens": gen.words(&s)});
                text.push_str(&line.to_string());
                text.push('\n');
            }
            emit(out.as_deref(), &text, stdout)
        }
        Command::Tag {
            model,
            sentence_model,
            text,
            input,
            threshold,
            highlight,
            out,
            common,
        } => {
            Settings::resolve(&common)?;
            let raw = match (text, input) {
                (Some(t), None) => t,
                (None, Some(p)) => fs::read_to_string(&p).map_err(|e| io_error(&p, e))?,
                _ => return Err(CliError::Usage("tag needs --text or --in".into())),
            };
            let word = WordModel::from_checkpoint(&Checkpoint::load(&model)?)?;
            let sentence = match &sentence_model {
                Some(p) => Some(SentenceModel::from_checkpoint(&Checkpoint::load(p)?)?),
                None => None,
            };
            let threshold = threshold.unwrap_or(word.config.threshold);
            let report = tag_report(&word, sentence.as_ref(), &raw, threshold)?;
            if highlight {
                emit(None, &render_highlighted(&report), stdout)?;
                if let Some(p) = &out {
                    write_file(p, pretty(&report).as_bytes())?;
                }
                Ok(())
            } else {
                emit(out.as_deref(), &pretty(&report), stdout)
            }
        }
        Command::Synth {
            out,
            gold_out,
            n,
            common,
        } => {
            let (mut settings, _) = Settings::resolve(&common)?;
            if let Some(n) = n.or(settings.n) {
                settings.synthetic.n_sentences = n;
            }
            let corpus = make_synthetic(&settings.synthetic)?;
            write_file(&out, corpus.to_jsonl().as_bytes())?;
            if let Some(p) = &gold_out {
                write_consolidated(p, &corpus.gold)?;
            }
            emit(None, &pretty(&json!({"sentences": corpus.annotated.len()})), stdout)
        }
        Command::Reproduce { target, out, common } => {
            let (settings, _) = Settings::resolve(&common)?;
            let text = if target == "all" {
                let reports = TARGETS
                    .iter()
                    .map(|t| reproduce(t, &settings.reproduce))
                    .collect::<Result<Vec<_>, _>>()?;
                pretty(&reports)
            } else {
                pretty(&reproduce(&target, &settings.reproduce)?)
            };
            emit(out.as_deref(), &text, stdout)
        }
    }
}

#[derive(Deserialize)]
struct ClassOnly {
    class: VaguenessClass,
}

fn read_classes(path: &Path) -> Result<Vec<VaguenessClass>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    read_jsonl_lines(&text)
        .map(|(line, l)| {
            serde_json::from_str::<ClassOnly>(l)
                .map(|r| r.class)
                .map_err(|e| CliError::Data(format!("{} line {line}: {e}", path.display())))
        })
        .collect()
}

fn eval_predictions(pred: &Path, gold: &Path) -> Result<serde_json::Value, CliError> {
    let pred = read_classes(pred)?;
    let truth = read_classes(gold)?;
    Ok(json!({
        "weighted": weighted_prf(&truth, &pred)?,
        "confusion": confusion(&truth, &pred)?,
    }))
}

fn roc_csv(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("curve,fpr,tpr\n");
    for (name, points) in curves {
        for (x, y) in points {
            s.push_str(&format!("{name},{x},{y}\n"));
        }
    }
    s
}

fn eval_checkpoint(model: &Path, input: &Path, roc: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let ckpt = Checkpoint::load(model)?;
    let gold = load_consolidated(input)?;
    if ckpt.kind == AWARE_KIND || ckpt.kind == AGNOSTIC_KIND {
        let word = WordModel::from_checkpoint(&ckpt)?;
        let (mut truth, mut pred, mut probs) = (Vec::new(), Vec::new(), Vec::new());
        for s in &gold {
            let t = tag_sentence(&word, &s.texts(), word.config.threshold)?;
            truth.extend_from_slice(&s.word_labels);
            pred.extend(t.labels);
            probs.extend(t.probs);
        }
        let labels: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
        let curve = roc_auc(&labels, &probs)?;
        if let Some(p) = roc {
            write_file(p, roc_csv(&[("vague".into(), curve.points.clone())]).as_bytes())?;
        }
        return Ok(json!({
            "kind": ckpt.kind,
            "tokens": truth.len(),
            "word": binary_prf(&truth, &pred)?,
            "auc": curve.auc,
        }));
    }
    let model = SentenceModel::from_checkpoint(&ckpt)?;
    let truth: Vec<VaguenessClass> = gold.iter().map(|s| s.class).collect();
    let tokens = token_lists(&gold);
    let probs = model.class_probabilities(&tokens)?;
    let pred = model.predict(&tokens)?;
    let curves: Vec<(String, Vec<(f64, f64)>)> = roc_per_class(&truth, &probs)?
        .into_iter()
        .map(|(c, r)| (c.name().to_string(), r.points))
        .collect();
    if let Some(p) = roc {
        write_file(p, roc_csv(&curves).as_bytes())?;
    }
    let aucs: Vec<serde_json::Value> = roc_per_class(&truth, &probs)?
        .into_iter()
        .map(|(c, r)| json!({"class": c, "auc": r.auc}))
        .collect();
    Ok(json!({
        "kind": ckpt.kind,
        "weighted": weighted_prf(&truth, &pred)?,
        "confusion": confusion(&truth, &pred)?,
        "auc": aucs,
    }))
}

/// A trained sentence classifier of any recipe.
pub enum SentenceModel {
    Discriminator(Box<Discriminator>),
    Majority(MajorityClassifier),
}

impl SentenceModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CliError> {
        match ckpt.kind.as_str() {
            DISCRIMINATOR_KIND => Ok(Self::Discriminator(Box::new(Discriminator::from_checkpoint(ckpt)?))),
            MAJORITY_KIND => Ok(Self::Majority(MajorityClassifier::from_checkpoint(ckpt)?)),
            other => Err(CliError::Data(format!(
                "checkpoint mismatch: expected a sentence model, found {other:?}"
            ))),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Self::Discriminator(d) => d.to_checkpoint(),
            Self::Majority(m) => m.to_checkpoint(),
        }
    }

    pub fn class_probabilities(&self, sentences: &[Vec<String>]) -> Result<Vec<[f64; 4]>, CliError> {
        match self {
            Self::Discriminator(d) => {
                let seqs: Vec<Vec<usize>> = sentences.iter().map(|s| d.vocab.encode(s)).collect();
                Ok(d.class_probabilities(&seqs)?)
            }
            Self::Majority(m) => {
                let mut p = [0.0; 4];
                p[m.class.index()] = 1.0;
                Ok(vec![p; sentences.len()])
            }
        }
    }

    pub fn predict(&self, sentences: &[Vec<String>]) -> Result<Vec<VaguenessClass>, CliError> {
        match self {
            Self::Discriminator(d) => Ok(d.predict(sentences)?),
            Self::Majority(m) => Ok(m.predict(sentences.len())),
        }
    }
}

/// Sentence-model recipe with its resolved settings.
struct Recipe {
    mode: SentenceMode,
    disc: DiscConfig,
    generator: GeneratorConfig,
    gan: GanConfig,
    lexicon: CueLexicon,
    max_vocab: usize,
    seed: u64,
}

struct Trained {
    model: SentenceModel,
    generator: Option<LmGenerator>,
    summary: serde_json::Value,
    log_csv: String,
}

impl Recipe {
    fn new(
        settings: &Settings,
        mode: Option<SentenceMode>,
        variant: Option<VariantArg>,
        tau: Option<f64>,
        lexicon: Option<&PathBuf>,
        seed: u64,
    ) -> Result<Self, CliError> {
        let mode = mode.or(settings.mode).unwrap_or(SentenceMode::Full);
        let variant = variant.map(DiscVariant::from).or(settings.variant);
        let mut disc = settings.discriminator.clone();
        disc.variant = match (mode, variant) {
            (SentenceMode::BaselineCnn, Some(DiscVariant::Lstm))
            | (SentenceMode::BaselineLstm, Some(DiscVariant::Cnn)) => {
                return Err(CliError::Usage(format!("--variant conflicts with --mode {mode:?}")))
            }
            (SentenceMode::BaselineCnn, _) => DiscVariant::Cnn,
            (SentenceMode::BaselineLstm, _) => DiscVariant::Lstm,
            (_, Some(v)) => v,
            (_, None) => disc.variant,
        };
        let mut gan = settings.gan.clone();
        gan.mode = match mode {
            SentenceMode::VaguenessOnly => GanMode::VaguenessOnly,
            _ => GanMode::Full,
        };
        if let Some(t) = tau.or(settings.tau) {
            gan.tau = t;
        }
        Ok(Self {
            mode,
            disc,
            generator: settings.generator.clone(),
            gan,
            lexicon: settings.lexicon(lexicon)?,
            max_vocab: settings.max_vocab.unwrap_or(DEFAULT_MAX_VOCAB),
            seed,
        })
    }

    fn train(
        &self,
        train: &[ConsolidatedSentence],
        val: &[ConsolidatedSentence],
        lm: &[Vec<String>],
        embeddings: Option<&Path>,
    ) -> Result<Trained, CliError> {
        if self.mode == SentenceMode::Majority {
            let classes: Vec<VaguenessClass> = train.iter().map(|s| s.class).collect();
            let m = majority_baseline(&classes)?;
            return Ok(Trained {
                summary: json!({"mode": self.mode, "class": m.class}),
                model: SentenceModel::Majority(m),
                generator: None,
                log_csv: String::new(),
            });
        }
        let mut all = token_lists(train);
        let adversarial = matches!(self.mode, SentenceMode::Full | SentenceMode::VaguenessOnly);
        if adversarial {
            all.extend(lm.iter().cloned());
        }
        let vocab = Vocabulary::build(&all, self.max_vocab)?;
        let mut disc = Discriminator::new(vocab.clone(), self.disc.clone())?;
        if let Some(p) = embeddings {
            let e = load_embeddings(p, &vocab, Some(self.disc.dim), &mut Rng::new(self.seed).fork(5))?;
            disc.set_embeddings(&e)?;
        }
        let train_l = labeled_from(&vocab, train);
        let val_l = labeled_from(&vocab, val);
        if !adversarial {
            let log = train_baseline(&mut disc, &train_l, &val_l, &self.gan)?;
            return Ok(Trained {
                summary: json!({"mode": self.mode, "val_f1": log.val_f1, "best_epoch": log.best_epoch}),
                log_csv: log.to_csv(),
                model: SentenceModel::Discriminator(Box::new(disc)),
                generator: None,
            });
        }
        let mut gen = LmGenerator::new(vocab.clone(), self.generator.clone(), Some(&self.lexicon))?;
        if let Some(p) = embeddings {
            let e = load_embeddings(p, &vocab, Some(self.generator.dim), &mut Rng::new(self.seed).fork(6))?;
            gen.set_embeddings(&e)?;
        }
        let lm_log = pretrain_lm(&mut gen, lm, &[] as &[Vec<String>])?;
        let log = train_acgan(&mut gen, &mut disc, &train_l, &val_l, &self.gan)?;
        Ok(Trained {
            summary: json!({
                "mode": self.mode,
                "lm_perplexity": lm_log.perplexity,
                "val_f1": log.val_f1,
                "best_epoch": log.best_epoch,
            }),
            log_csv: log.to_csv(),
            model: SentenceModel::Discriminator(Box::new(disc)),
            generator: Some(gen),
        })
    }
}

fn cross_validate(
    recipe: &Recipe,
    data: &[ConsolidatedSentence],
    k: usize,
    val_fraction: f64,
    seed: u64,
    aggregation: FoldAggregation,
) -> Result<serde_json::Value, CliError> {
    let folds = kfold_split(data.len(), k, val_fraction, seed)?;
    let pick = |idx: &[usize]| -> Vec<ConsolidatedSentence> { idx.iter().map(|&i| data[i].clone()).collect() };
    let mut results = Vec::new();
    for fold in &folds {
        let (train, val, test) = (pick(&fold.train), pick(&fold.val), pick(&fold.test));
        let trained = recipe.train(&train, &val, &token_lists(&train), None)?;
        let truth: Vec<VaguenessClass> = test.iter().map(|s| s.class).collect();
        results.push((truth, trained.model.predict(&token_lists(&test))?));
    }
    let summary = aggregate_folds(&results, aggregation)?;
    Ok(json!({"mode": recipe.mode, "folds": k, "summary": summary}))
}

/// Class distribution in class order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub clear: f64,
    #[serde(rename = "somewhat-clear")]
    pub somewhat_clear: f64,
    pub vague: f64,
    #[serde(rename = "extremely-vague")]
    pub extremely_vague: f64,
}

impl From<[f64; 4]> for ClassDistribution {
    fn from(p: [f64; 4]) -> Self {
        Self {
            clear: p[0],
            somewhat_clear: p[1],
            vague: p[2],
            extremely_vague: p[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<ClassDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<VaguenessClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub sentences: Vec<TaggedSentence>,
}

/// Splits `text` into sentences and tags each with the word model and,
/// when given, the sentence model.
pub fn tag_report(
    word: &WordModel,
    sentence: Option<&SentenceModel>,
    text: &str,
    threshold: f64,
) -> Result<TagReport, CliError> {
    let sentences = split_sentences(text);
    let dists = match sentence {
        Some(m) if !sentences.is_empty() => Some(m.class_probabilities(&sentences)?),
        _ => None,
    };
    let mut out = Vec::with_capacity(sentences.len());
    for (i, tokens) in sentences.iter().enumerate() {
        let t = tag_sentence(word, tokens, threshold)?;
        let p = dists.as_ref().map(|d| d[i]);
        out.push(TaggedSentence {
            tokens: t.tokens,
            probs: t.probs,
            labels: t.labels,
            class_probs: p.map(ClassDistribution::from),
            class: p.map(|p| VaguenessClass::ALL[crate::tensor::argmax(&p)]),
        });
    }
    Ok(TagReport { sentences: out })
}

/// One line per sentence with vague tokens in bold red, followed by the
/// predicted class when present.
pub fn render_highlighted(report: &TagReport) -> String {
    let mut s = String::new();
    for t in &report.sentences {
        let words: Vec<String> = t
            .tokens
            .iter()
            .zip(&t.labels)
            .map(|(w, &l)| {
                if l == 1 {
                    format!("\x1b[1;31m{w}\x1b[0m")
                } else {
                    w.clone()
                }
            })
            .collect();
        s.push_str(&words.join(" "));
        if let Some(c) = t.class {
            s.push_str(&format!("  [{}]", c.name()));
        }
        s.push('\n');
    }
    s
}
