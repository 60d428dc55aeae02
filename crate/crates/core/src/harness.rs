//! Synthetic annotated corpora with a planted vague lexicon, and the
//! end-to-end reproduction targets run on them.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{
    consolidate, tokens_from, AnnotatedSentence, AnnotatorWordSelection, ConsolidatedSentence, CorpusError,
    CorpusRecord, CueLexicon, SentenceAnnotation, VaguenessClass,
};
use crate::discriminator::{DiscConfig, DiscVariant, Discriminator, GanMode};
use crate::embeddings::{Vocabulary, EOS};
use crate::evaluation::{labels_from_counts, pearson, roc_auc, roc_per_class, weighted_prf, EvalError, RocCurve};
use crate::gan_trainer::{labeled_from, majority_baseline, train_acgan, train_baseline, GanConfig, LabeledSentence};
use crate::generator::{pretrain_lm, GeneratorConfig, LmGenerator};
use crate::nn::ModelError;
use crate::tensor::{argmax, Rng};
use crate::word_tagger::{train_tagger, word_f1, TaggerConfig, WordModel, WordModelKind};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid synthetic corpus spec: {0}")]
    SpecInvalid(String),
    #[error("unknown reproduce target {0:?}")]
    TargetUnknown(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Sentence-class shares from the annotated corpus, clearest first.
pub const CORPUS_CLASS_PRIOR: [f64; 4] = [0.269, 0.5077, 0.205, 0.0183];

/// Class counts per 10 000 sentences behind [`CORPUS_CLASS_PRIOR`].
pub const CORPUS_CLASS_COUNTS: [usize; 4] = [2690, 5077, 2050, 183];

const TEMPLATES: &[&[&str]] = &[
    &["we", "collect", "*"],
    &["we", "share", "*", "with", "*"],
    &["*", "is", "used", "to", "provide", "*"],
    &["you", "request", "*"],
    &["we", "retain", "*", "for", "*"],
    &["*", "is", "stored", "on", "*"],
    &["we", "use", "*", "to", "improve", "*"],
    &["your", "*", "is", "protected", "by", "*"],
];

const FILLERS: &[&str] = &[
    "data",
    "information",
    "cookies",
    "records",
    "services",
    "partners",
    "advertisers",
    "affiliates",
    "servers",
    "accounts",
    "emails",
    "devices",
    "logs",
    "payments",
    "profiles",
    "content",
    "analytics",
    "vendors",
    "locations",
    "contacts",
    "identifiers",
    "browsers",
    "backups",
    "reports",
];

/// Vague terms planted by default; all are in the default cue lexicon.
pub const DEFAULT_PLANTED: &[&str] = &[
    "generally",
    "typically",
    "certain",
    "various",
    "reasonable",
    "appropriate",
    "approximately",
    "periodically",
    "potentially",
    "usually",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub n_sentences: usize,
    /// Number of distinct slot-filler words.
    pub vocab_size: usize,
    pub planted: Vec<String>,
    /// Inclusive planted-word count range per class, clearest first.
    pub count_ranges: [(usize, usize); 4],
    pub class_prior: [f64; 4],
    /// Inclusive range of template clauses per sentence.
    pub clauses: (usize, usize),
    pub annotators: usize,
    /// Per-annotator miss rate on planted words and score-noise rate;
    /// spurious selections of other words occur at a quarter of it.
    pub disagreement: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_sentences: 400,
            vocab_size: 24,
            planted: DEFAULT_PLANTED.iter().map(|s| s.to_string()).collect(),
            count_ranges: [(0, 0), (1, 1), (2, 2), (3, 4)],
            class_prior: CORPUS_CLASS_PRIOR,
            clauses: (1, 2),
            annotators: 5,
            disagreement: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::SpecInvalid(m.into()));
        if self.n_sentences == 0 || self.vocab_size == 0 || self.planted.is_empty() {
            return bad("n_sentences, vocab_size and planted must be non-empty");
        }
        if self.annotators < 2 {
            return bad("at least two annotators are needed");
        }
        if !(0.0..=1.0).contains(&self.disagreement) {
            return bad("disagreement must lie in [0, 1]");
        }
        if self.clauses.0 == 0 || self.clauses.0 > self.clauses.1 {
            return bad("clause range must be non-empty and start at 1 or more");
        }
        if self.class_prior.iter().any(|&p| p < 0.0) || self.class_prior.iter().sum::<f64>() <= 0.0 {
            return bad("class prior must be non-negative with positive mass");
        }
        for (i, &(lo, hi)) in self.count_ranges.iter().enumerate() {
            if lo > hi || hi > crate::corpus::MAX_SPAN_LEN {
                return bad("count ranges must satisfy lo <= hi <= 5");
            }
            if i > 0 && lo <= self.count_ranges[i - 1].1 {
                return bad("count ranges must be disjoint and increasing");
            }
        }
        let fillers = fillers(self.vocab_size);
        if self
            .planted
            .iter()
            .any(|p| fillers.contains(p) || TEMPLATES.iter().any(|t| t.contains(&p.as_str())))
        {
            return bad("planted terms must not occur in templates or fillers");
        }
        Ok(())
    }

    /// Consolidated score of a sentence with `count` planted words; lands
    /// in the middle of the class bucket.
    pub fn gold_score(count: usize) -> f64 {
        (1.0 + count as f64 + 0.5).clamp(1.0, 5.0)
    }
}

fn fillers(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match FILLERS.get(i) {
            Some(w) => w.to_string(),
            None => format!("item{i}"),
        })
        .collect()
}

/// Largest-remainder allocation of `n` items to `prior`.
pub fn quota_counts(n: usize, prior: &[f64; 4]) -> [usize; 4] {
    let total: f64 = prior.iter().sum();
    let exact: Vec<f64> = prior.iter().map(|p| p / total * n as f64).collect();
    let mut counts = [0usize; 4];
    for i in 0..4 {
        counts[i] = exact[i].floor() as usize;
    }
    let mut rest: Vec<usize> = (0..4).collect();
    rest.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub annotated: Vec<AnnotatedSentence>,
    /// Planted truth, in the same order.
    pub gold: Vec<ConsolidatedSentence>,
}

impl SyntheticCorpus {
    /// Annotated-corpus JSONL, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.annotated {
            out.push_str(&serde_json::to_string(&CorpusRecord::from(s)).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn token_lists(&self) -> Vec<Vec<String>> {
        self.gold
            .iter()
            .map(|s| s.tokens.iter().map(|t| t.text.clone()).collect())
            .collect()
    }
}

/// Builds template sentences, inserts a contiguous run of planted words
/// whose length sets the class, and simulates noisy annotators.
pub fn make_synthetic(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus, HarnessError> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut rng = root.fork(1);
    let mut noise = root.fork(2);
    let fill = fillers(spec.vocab_size);
    let counts = quota_counts(spec.n_sentences, &spec.class_prior);
    let mut classes = labels_from_counts(counts);
    rng.shuffle(&mut classes);

    let mut annotated = Vec::with_capacity(spec.n_sentences);
    let mut gold = Vec::with_capacity(spec.n_sentences);
    for (i, class) in classes.into_iter().enumerate() {
        let n_clauses = spec.clauses.0 + rng.below(spec.clauses.1 - spec.clauses.0 + 1);
        let mut words: Vec<String> = Vec::new();
        for c in 0..n_clauses {
            if c > 0 {
                words.push("and".into());
            }
            let t = TEMPLATES[rng.below(TEMPLATES.len())];
            for &w in t {
                words.push(if w == "*" {
                    fill[rng.below(fill.len())].clone()
                } else {
                    w.to_string()
                });
            }
        }
        let (lo, hi) = spec.count_ranges[class.index()];
        let k = lo + rng.below(hi - lo + 1);
        let at = rng.below(words.len() + 1);
        let run: Vec<String> = (0..k)
            .map(|_| spec.planted[rng.below(spec.planted.len())].clone())
            .collect();
        words.splice(at..at, run);
        let labels: Vec<u8> = (0..words.len()).map(|j| u8::from(j >= at && j < at + k)).collect();

        let id = format!("syn-{i:05}");
        let score = SyntheticCorpusSpec::gold_score(k);
        let mut selections = Vec::new();
        let mut scores = Vec::new();
        for a in 0..spec.annotators {
            let ann = format!("a{}", a + 1);
            for (j, &l) in labels.iter().enumerate() {
                let picked = if l == 1 {
                    !noise.bernoulli(spec.disagreement)
                } else {
                    noise.bernoulli(spec.disagreement / 4.0)
                };
                if picked {
                    selections.push(AnnotatorWordSelection::new(&ann, j, j + 1));
                }
            }
            let shift = if noise.bernoulli(spec.disagreement) {
                if noise.bernoulli(0.5) {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            };
            scores.push(SentenceAnnotation {
                annotator_id: ann,
                score: (score + shift).clamp(1.0, 5.0),
            });
        }
        let tokens = tokens_from(&words);
        annotated.push(AnnotatedSentence {
            id: id.clone(),
            tokens: tokens.clone(),
            word_selections: selections,
            sentence_annotations: scores,
        });
        gold.push(ConsolidatedSentence {
            id,
            tokens,
            word_labels: labels,
            mean_score: score,
            class,
        });
    }
    Ok(SyntheticCorpus { annotated, gold })
}

/// Fraction of word labels and of sentence classes that consolidation
/// recovers from the simulated annotations.
pub fn recovery(corpus: &SyntheticCorpus, threshold: usize) -> Result<(f64, f64), HarnessError> {
    let (mut words, mut words_ok, mut sent_ok) = (0usize, 0usize, 0usize);
    for (a, g) in corpus.annotated.iter().zip(&corpus.gold) {
        let c = consolidate(a, threshold)?;
        words += g.word_labels.len();
        words_ok += c.word_labels.iter().zip(&g.word_labels).filter(|(x, y)| x == y).count();
        sent_ok += usize::from(c.class == g.class);
    }
    Ok((
        words_ok as f64 / words as f64,
        sent_ok as f64 / corpus.gold.len() as f64,
    ))
}

/// One-sided Welch t-test of `mean(a) > mean(b)`: `(t, df, p)`.
pub fn welch_one_sided(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let p = if ma > mb { 0.0 } else { 1.0 };
        return (f64::INFINITY.copysign(ma - mb), f64::INFINITY, p);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (t, df, 1.0 - dist.cdf(t))
}

pub const TARGETS: &[&str] = &[
    "majority-baseline",
    "roc-shape",
    "correlation",
    "overfit-word",
    "overfit-sentence",
    "conditioning",
    "lm-perplexity",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub target: String,
    pub measured: Value,
    pub expected: Value,
    pub tolerance: Value,
    pub pass: bool,
}

/// Model sizes and corpus sizes for the reproduce targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReproduceOptions {
    pub seed: u64,
    pub dim: usize,
    pub hidden: usize,
    pub filters: usize,
    pub sentences: usize,
    pub epochs: usize,
    /// Generated sentences per condition in the conditioning target.
    pub samples: usize,
    /// Sentences in the language-model corpus.
    pub lm_sentences: usize,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 16,
            hidden: 32,
            filters: 16,
            sentences: 400,
            epochs: 30,
            samples: 500,
            lm_sentences: 2000,
        }
    }
}

pub fn reproduce(target: &str, opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    match target {
        "majority-baseline" => majority_target(),
        "roc-shape" => roc_shape(opts),
        "correlation" => correlation(opts),
        "overfit-word" => overfit_word(opts),
        "overfit-sentence" => overfit_sentence(opts),
        "conditioning" => conditioning(opts),
        "lm-perplexity" => lm_perplexity(opts),
        other => Err(HarnessError::TargetUnknown(other.to_string())),
    }
}

fn report(target: &str, measured: Value, expected: Value, tolerance: Value, pass: bool) -> ReproduceReport {
    ReproduceReport {
        target: target.into(),
        measured,
        expected,
        tolerance,
        pass,
    }
}

/// Weighted P/R/F of the majority classifier on the corpus class counts.
pub fn majority_target() -> Result<ReproduceReport, HarnessError> {
    let truth = labels_from_counts(CORPUS_CLASS_COUNTS);
    let m = majority_baseline(&truth)?;
    let r = weighted_prf(&truth, &m.predict(truth.len()))?;
    let measured = [r.precision, r.recall, r.f1];
    let expected = [25.77, 50.77, 34.19];
    let tol = 0.05;
    let pass = measured.iter().zip(expected).all(|(m, e)| (m - e).abs() <= tol);
    Ok(report(
        "majority-baseline",
        json!({"precision": r.precision, "recall": r.recall, "f1": r.f1, "predicted": m.class}),
        json!({"precision": 25.77, "recall": 50.77, "f1": 34.19}),
        json!(tol),
        pass,
    ))
}

fn corpus(opts: &ReproduceOptions, n: usize, disagreement: f64) -> Result<SyntheticCorpus, HarnessError> {
    make_synthetic(&SyntheticCorpusSpec {
        n_sentences: n,
        disagreement,
        seed: opts.seed,
        ..SyntheticCorpusSpec::default()
    })
}

fn vocab_of(c: &SyntheticCorpus) -> Result<Vocabulary, HarnessError> {
    Vocabulary::build(&c.token_lists(), 10_000).map_err(|e| HarnessError::SpecInvalid(e.to_string()))
}

/// Pearson correlation of consolidated score and vague-word count.
pub fn correlation(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.sentences, 0.0)?;
    let mut scores = Vec::new();
    let mut counts = Vec::new();
    for a in &c.annotated {
        let s = consolidate(a, 2)?;
        scores.push(s.mean_score);
        counts.push(s.vague_word_count() as f64);
    }
    let r = pearson(&scores, &counts)?;
    Ok(report(
        "correlation",
        json!({"pearson": r}),
        json!({"min": 0.99}),
        Value::Null,
        r >= 0.99,
    ))
}

fn tagger_config(opts: &ReproduceOptions) -> TaggerConfig {
    TaggerConfig {
        dim: opts.dim,
        hidden: opts.hidden,
        lr: 0.01,
        epochs: opts.epochs,
        batch: 16,
        seed: opts.seed,
        ..TaggerConfig::default()
    }
}

/// Word F1 of the BiLSTM tagger on its own training corpus.
pub fn overfit_word(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.sentences, 0.0)?;
    let mut model = WordModel::new(WordModelKind::Aware, vocab_of(&c)?, tagger_config(opts))?;
    let log = train_tagger(&mut model, &c.gold, &[])?;
    let f1 = word_f1(&model, &c.gold, model.config.threshold)? / 100.0;
    Ok(report(
        "overfit-word",
        json!({"word_f1": f1, "epochs_run": log.train_loss.len()}),
        json!({"min": 0.95}),
        Value::Null,
        f1 >= 0.95,
    ))
}

fn disc_config(opts: &ReproduceOptions, variant: DiscVariant) -> DiscConfig {
    DiscConfig {
        variant,
        dim: opts.dim,
        hidden: opts.hidden,
        filters: opts.filters,
        widths: vec![3, 4, 5],
        seed: opts.seed,
    }
}

fn gen_config(opts: &ReproduceOptions, epochs: usize) -> GeneratorConfig {
    GeneratorConfig {
        dim: opts.dim,
        hidden: opts.hidden,
        max_len: 24,
        lr: 0.01,
        epochs,
        batch: 16,
        seed: opts.seed,
        ..GeneratorConfig::default()
    }
}

fn accuracy(disc: &Discriminator, data: &[LabeledSentence]) -> Result<f64, HarnessError> {
    let seqs: Vec<Vec<usize>> = data.iter().map(|s| s.ids.clone()).collect();
    let probs = disc.class_probabilities(&seqs)?;
    let hits = probs
        .iter()
        .zip(data)
        .filter(|(p, s)| argmax(&p[..]) == s.class.index())
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Class accuracy on the training corpus of the CNN and LSTM baselines and
/// of the vagueness-only AC-GAN discriminator.
pub fn overfit_sentence(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.sentences, 0.0)?;
    let vocab = vocab_of(&c)?;
    let data = labeled_from(&vocab, &c.gold);
    let cfg = GanConfig {
        epochs: opts.epochs,
        batch: 16,
        d_lr: 0.01,
        g_lr: 0.001,
        seed: opts.seed,
        patience: 0,
        ..GanConfig::default()
    };
    let mut measured = serde_json::Map::new();
    for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
        let mut disc = Discriminator::new(vocab.clone(), disc_config(opts, variant))?;
        train_baseline(&mut disc, &data, &[], &cfg)?;
        measured.insert(format!("baseline-{}", variant.name()), json!(accuracy(&disc, &data)?));
    }
    let mut gen = LmGenerator::new(
        vocab.clone(),
        gen_config(opts, 2),
        Some(&CueLexicon::from_terms(DEFAULT_PLANTED)?),
    )?;
    pretrain_lm(&mut gen, &c.token_lists(), &[])?;
    let mut disc = Discriminator::new(vocab, disc_config(opts, DiscVariant::Cnn))?;
    train_acgan(
        &mut gen,
        &mut disc,
        &data,
        &[],
        &GanConfig {
            mode: GanMode::VaguenessOnly,
            ..cfg
        },
    )?;
    measured.insert("acgan-vagueness-only".into(), json!(accuracy(&disc, &data)?));
    let pass = measured.values().all(|v| v.as_f64().is_some_and(|a| a >= 0.95));
    Ok(report(
        "overfit-sentence",
        Value::Object(measured),
        json!({"min": 0.95}),
        Value::Null,
        pass,
    ))
}

fn curve_ok(c: &RocCurve) -> bool {
    let monotone = c.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
    monotone && c.points.first() == Some(&(0.0, 0.0)) && c.points.last() == Some(&(1.0, 1.0))
}

/// Word and sentence ROC curves on held-out noisy synthetic data: curves
/// must run monotonically from (0,0) to (1,1) and beat chance.
pub fn roc_shape(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.sentences, 0.2)?;
    let vocab = vocab_of(&c)?;
    let consolidated = c
        .annotated
        .iter()
        .map(|a| consolidate(a, 2))
        .collect::<Result<Vec<_>, _>>()?;
    let cut = consolidated.len() * 4 / 5;
    let (train, test) = consolidated.split_at(cut);
    let epochs = opts.epochs.min(10);

    let mut tagger = WordModel::new(
        WordModelKind::Aware,
        vocab.clone(),
        TaggerConfig {
            epochs,
            ..tagger_config(opts)
        },
    )?;
    train_tagger(&mut tagger, train, &[])?;
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for s in test {
        labels.extend(s.word_labels.iter().map(|&l| l == 1));
        scores.extend(tagger.probabilities(&s.texts())?);
    }
    let word = roc_auc(&labels, &scores)?;

    let mut disc = Discriminator::new(vocab.clone(), disc_config(opts, DiscVariant::Cnn))?;
    let cfg = GanConfig {
        epochs,
        d_lr: 0.01,
        seed: opts.seed,
        patience: 0,
        ..GanConfig::default()
    };
    train_baseline(&mut disc, &labeled_from(&vocab, train), &[], &cfg)?;
    let test_l = labeled_from(&vocab, test);
    let probs = disc.class_probabilities(&test_l.iter().map(|s| s.ids.clone()).collect::<Vec<_>>())?;
    let truth: Vec<VaguenessClass> = test_l.iter().map(|s| s.class).collect();
    let per_class = roc_per_class(&truth, &probs)?;
    let sentence_auc = per_class.iter().map(|(_, c)| c.auc).sum::<f64>() / per_class.len() as f64;
    let pass = curve_ok(&word) && per_class.iter().all(|(_, c)| curve_ok(c)) && word.auc > 0.5 && sentence_auc > 0.5;
    Ok(report(
        "roc-shape",
        json!({"word_auc": word.auc, "sentence_mean_auc": sentence_auc,
               "per_class_auc": per_class.iter().map(|(k, c)| (k.name(), c.auc)).collect::<std::collections::BTreeMap<_, _>>()}),
        json!({"curves": "monotone from (0,0) to (1,1)", "auc_min_exclusive": 0.5}),
        Value::Null,
        pass,
    ))
}

/// Counts default cue-lexicon tokens in generated sentences at λ = 2 and
/// λ = −1 after LM pretraining and one round of AC-GAN training.
pub fn conditioning(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.sentences, 0.0)?;
    let vocab = vocab_of(&c)?;
    let lexicon = CueLexicon::default_lexicon();
    let mut gen = LmGenerator::new(vocab.clone(), gen_config(opts, 3), Some(&lexicon))?;
    pretrain_lm(&mut gen, &c.token_lists(), &[])?;
    let mut disc = Discriminator::new(vocab.clone(), disc_config(opts, DiscVariant::Cnn))?;
    let data = labeled_from(&vocab, &c.gold);
    train_acgan(
        &mut gen,
        &mut disc,
        &data,
        &[],
        &GanConfig {
            epochs: 1,
            d_lr: 0.01,
            g_lr: 0.001,
            seed: opts.seed,
            ..GanConfig::default()
        },
    )?;
    let mut rng = Rng::new(opts.seed).fork(21);
    let count = |class: VaguenessClass, rng: &mut Rng| -> Result<Vec<f64>, HarnessError> {
        let out = gen.generate_batch(&vec![class; opts.samples], gen.config.tau, rng)?;
        Ok(out
            .iter()
            .map(|s| {
                s.hard_tokens
                    .iter()
                    .filter(|&&t| t != EOS && lexicon.contains(vocab.token(t)))
                    .count() as f64
            })
            .collect())
    };
    let high = count(VaguenessClass::ExtremelyVague, &mut rng)?;
    let low = count(VaguenessClass::Clear, &mut rng)?;
    let (t, df, p) = welch_one_sided(&high, &low);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(report(
        "conditioning",
        json!({"mean_cues_lambda_2": mean(&high), "mean_cues_lambda_minus_1": mean(&low),
               "t": t, "df": df, "p": p, "samples": opts.samples}),
        json!({"p_max_exclusive": 0.01}),
        Value::Null,
        mean(&high) > mean(&low) && p < 0.01,
    ))
}

/// Held-out perplexity after LM pretraining relative to before.
pub fn lm_perplexity(opts: &ReproduceOptions) -> Result<ReproduceReport, HarnessError> {
    let c = corpus(opts, opts.lm_sentences, 0.0)?;
    let vocab = vocab_of(&c)?;
    let sents = c.token_lists();
    let cut = sents.len() * 9 / 10;
    let mut gen = LmGenerator::new(vocab, gen_config(opts, 2), None)?;
    let log = pretrain_lm(&mut gen, &sents[..cut], &sents[cut..])?;
    let first = log.perplexity[0];
    let last = *log.perplexity.last().expect("entry 0 exists");
    Ok(report(
        "lm-perplexity",
        json!({"initial": first, "final": last, "ratio": last / first, "per_epoch": log.perplexity}),
        json!({"ratio_max_exclusive": 0.7}),
        Value::Null,
        last < 0.7 * first,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_corpus_round_trips() {
        let c = make_synthetic(&SyntheticCorpusSpec::default()).unwrap();
        assert_eq!(recovery(&c, 2).unwrap(), (1.0, 1.0));
        for (a, g) in c.annotated.iter().zip(&c.gold) {
            assert_eq!(consolidate(a, 2).unwrap(), *g);
        }
    }

    #[test]
    fn noisy_annotators_still_recover_words() {
        for seed in 0..3 {
            let c = make_synthetic(&SyntheticCorpusSpec {
                disagreement: 0.2,
                seed,
                ..SyntheticCorpusSpec::default()
            })
            .unwrap();
            let (w, _) = recovery(&c, 2).unwrap();
            assert!(w >= 0.95, "{w}");
        }
    }

    #[test]
    fn class_shares_follow_prior() {
        let spec = SyntheticCorpusSpec {
            n_sentences: 1000,
            ..SyntheticCorpusSpec::default()
        };
        let c = make_synthetic(&spec).unwrap();
        for k in VaguenessClass::ALL {
            let share = c.gold.iter().filter(|s| s.class == k).count() as f64 / 1000.0;
            assert!((share - spec.class_prior[k.index()]).abs() <= 0.02);
        }
    }

    #[test]
    fn same_spec_same_bytes() {
        let spec = SyntheticCorpusSpec {
            disagreement: 0.1,
            seed: 4,
            ..SyntheticCorpusSpec::default()
        };
        let a = make_synthetic(&spec).unwrap().to_jsonl();
        assert_eq!(a, make_synthetic(&spec).unwrap().to_jsonl());
        assert_eq!(crate::corpus::parse_corpus(&a).unwrap().len(), spec.n_sentences);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = SyntheticCorpusSpec {
            count_ranges: [(0, 1), (1, 2), (3, 3), (4, 4)],
            ..SyntheticCorpusSpec::default()
        };
        assert!(matches!(make_synthetic(&bad), Err(HarnessError::SpecInvalid(_))));
        let bad = SyntheticCorpusSpec {
            planted: vec!["data".into()],
            ..SyntheticCorpusSpec::default()
        };
        assert!(matches!(make_synthetic(&bad), Err(HarnessError::SpecInvalid(_))));
    }

    #[test]
    fn quota_is_exact() {
        assert_eq!(quota_counts(10_000, &CORPUS_CLASS_PRIOR), CORPUS_CLASS_COUNTS);
        assert_eq!(quota_counts(7, &[1.0, 1.0, 1.0, 1.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn welch_matches_hand_computation() {
        let a = [2.0, 4.0, 6.0];
        let b = [1.0, 2.0, 3.0];
        let (t, df, p) = welch_one_sided(&a, &b);
        // var a = 4, var b = 1; se² = 5/3
        assert!((t - 2.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let df_hand = (5.0f64 / 3.0).powi(2) / ((4.0f64 / 3.0).powi(2) / 2.0 + (1.0f64 / 3.0).powi(2) / 2.0);
        assert!((df - df_hand).abs() < 1e-12);
        assert!(p > 0.05 && p < 0.5);
        assert_eq!(welch_one_sided(&[1.0, 1.0], &[0.0, 0.0]).2, 0.0);
    }

    #[test]
    fn unknown_target_rejected() {
        assert!(matches!(
            reproduce("no-such-target", &ReproduceOptions::default()),
            Err(HarnessError::TargetUnknown(_))
        ));
    }

    #[test]
    fn majority_target_passes() {
        let r = majority_target().unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn correlation_target_passes() {
        let r = correlation(&ReproduceOptions::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
