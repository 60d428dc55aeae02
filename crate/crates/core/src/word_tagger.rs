//! Binary vague-word classifiers: a context-agnostic feedforward model over
//! single embeddings and a context-aware bidirectional LSTM tagger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::ConsolidatedSentence;
use crate::embeddings::{EmbeddingMatrix, Vocabulary};
use crate::evaluation::binary_prf;
use crate::nn::{finite_loss, restore, snapshot, stacked_row, time_major, Linear, LstmCell, ModelError};
use crate::tensor::{
    sigmoid_scalar, xavier_init, Adam, AdamConfig, Graph, NodeId, ParamId, ParamStore, Rng, TensorError,
};

pub const AWARE_KIND: &str = "word-aware";
pub const AGNOSTIC_KIND: &str = "word-agnostic";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordModelKind {
    Aware,
    Agnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub pos_weight: f64,
    pub clip: f64,
    pub threshold: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            hidden: 512,
            lr: 1e-3,
            epochs: 10,
            batch: 16,
            seed: 0,
            pos_weight: 1.0,
            clip: 5.0,
            threshold: 0.5,
        }
    }
}

/// Forward and backward LSTMs whose concatenated states feed a sigmoid
/// output per token.
#[derive(Clone, Debug)]
pub struct BiLstmTagger {
    pub emb: ParamId,
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    pub out: Linear,
}

impl BiLstmTagger {
    pub fn new(
        store: &mut ParamStore,
        vocab: usize,
        dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            emb: store.add("emb", xavier_init(&[vocab, dim], rng)?)?,
            fwd: LstmCell::new(store, "fwd", dim, hidden, rng)?,
            bwd: LstmCell::new(store, "bwd", dim, hidden, rng)?,
            out: Linear::new(store, "out", 2 * hidden, 1, rng)?,
        })
    }

    /// Logits `[N, 1]` for every token of every sentence, sentence-major.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<usize>]) -> Result<NodeId, TensorError> {
        let batch = seqs.len();
        let e = g.param(store, self.emb);
        let reversed: Vec<Vec<usize>> = seqs.iter().map(|s| s.iter().rev().copied().collect()).collect();
        let mut xf = Vec::new();
        for ids in time_major(seqs) {
            xf.push(g.gather(e, &ids)?);
        }
        let mut xb = Vec::new();
        for ids in time_major(&reversed) {
            xb.push(g.gather(e, &ids)?);
        }
        let hf = self.fwd.run(g, store, &xf)?;
        let hb = self.bwd.run(g, store, &xb)?;
        let hf = g.concat(&hf, 0)?;
        let hb = g.concat(&hb, 0)?;
        let mut rows_f = Vec::new();
        let mut rows_b = Vec::new();
        for (b, s) in seqs.iter().enumerate() {
            for t in 0..s.len() {
                rows_f.push(stacked_row(t, b, batch));
                rows_b.push(stacked_row(s.len() - 1 - t, b, batch));
            }
        }
        let f = g.gather(hf, &rows_f)?;
        let bk = g.gather(hb, &rows_b)?;
        let z = g.concat(&[f, bk], 1)?;
        self.out.forward(g, store, z)
    }
}

/// Logistic regression on one word embedding; no context enters.
#[derive(Clone, Debug)]
pub struct AgnosticClassifier {
    pub emb: ParamId,
    pub out: Linear,
}

impl AgnosticClassifier {
    pub fn new(store: &mut ParamStore, vocab: usize, dim: usize, rng: &mut Rng) -> Result<Self, TensorError> {
        Ok(Self {
            emb: store.add("emb", xavier_init(&[vocab, dim], rng)?)?,
            out: Linear::new(store, "out", dim, 1, rng)?,
        })
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<usize>]) -> Result<NodeId, TensorError> {
        let e = g.param(store, self.emb);
        let ids: Vec<usize> = seqs.iter().flatten().copied().collect();
        let x = g.gather(e, &ids)?;
        self.out.forward(g, store, x)
    }
}

#[derive(Clone, Debug)]
pub enum WordNet {
    Aware(BiLstmTagger),
    Agnostic(AgnosticClassifier),
}

/// A word classifier with its vocabulary and parameters.
#[derive(Clone, Debug)]
pub struct WordModel {
    pub kind: WordModelKind,
    pub config: TaggerConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub net: WordNet,
}

impl WordModel {
    pub fn new(kind: WordModelKind, vocab: Vocabulary, config: TaggerConfig) -> Result<Self, ModelError> {
        if config.dim == 0 || (kind == WordModelKind::Aware && config.hidden == 0) {
            return Err(ModelError::ConfigInvalid("dim and hidden must be positive".into()));
        }
        let mut rng = Rng::new(config.seed);
        let mut params = ParamStore::new();
        let net = match kind {
            WordModelKind::Aware => WordNet::Aware(BiLstmTagger::new(
                &mut params,
                vocab.len(),
                config.dim,
                config.hidden,
                &mut rng,
            )?),
            WordModelKind::Agnostic => {
                WordNet::Agnostic(AgnosticClassifier::new(&mut params, vocab.len(), config.dim, &mut rng)?)
            }
        };
        Ok(Self {
            kind,
            config,
            vocab,
            params,
            net,
        })
    }

    pub fn emb(&self) -> ParamId {
        match &self.net {
            WordNet::Aware(m) => m.emb,
            WordNet::Agnostic(m) => m.emb,
        }
    }

    /// Replaces the embedding table with pretrained vectors.
    pub fn set_embeddings(&mut self, e: &EmbeddingMatrix) -> Result<(), ModelError> {
        let id = self.emb();
        if e.matrix.shape() != self.params.value(id).shape() {
            return Err(ModelError::VocabularyMismatch(format!(
                "embedding {:?} vs model {:?}",
                e.matrix.shape(),
                self.params.value(id).shape()
            )));
        }
        *self.params.value_mut(id) = e.matrix.clone();
        Ok(())
    }

    pub fn logits_with(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<usize>]) -> Result<NodeId, TensorError> {
        match &self.net {
            WordNet::Aware(m) => m.logits(g, store, seqs),
            WordNet::Agnostic(m) => m.logits(g, store, seqs),
        }
    }

    /// Mean per-token binary cross-entropy over a batch.
    pub fn loss_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seqs: &[Vec<usize>],
        labels: &[Vec<u8>],
    ) -> Result<NodeId, TensorError> {
        let logits = self.logits_with(g, store, seqs)?;
        let targets: Vec<f64> = labels.iter().flatten().map(|&l| f64::from(l)).collect();
        let w = vec![1.0 / targets.len() as f64; targets.len()];
        g.bce_with_logits(logits, &targets, &w, self.config.pos_weight)
    }

    /// Vague-word probability for each token.
    pub fn probabilities<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>, ModelError> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let ids = self.vocab.encode(tokens);
        let mut g = Graph::new();
        let logits = self.logits_with(&mut g, &self.params, &[ids])?;
        Ok(g.value(logits).data().iter().map(|&x| sigmoid_scalar(x)).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let kind = match self.kind {
            WordModelKind::Aware => AWARE_KIND,
            WordModelKind::Agnostic => AGNOSTIC_KIND,
        };
        Checkpoint::from_stores(
            kind,
            serde_json::to_value(&self.config).expect("config serializes"),
            self.vocab.tokens().to_vec(),
            &[("", &self.params)],
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let kind = match ckpt.kind.as_str() {
            AWARE_KIND => WordModelKind::Aware,
            AGNOSTIC_KIND => WordModelKind::Agnostic,
            other => {
                return Err(ModelError::CheckpointMismatch(format!("{other} is not a word model")));
            }
        };
        let config: TaggerConfig = ckpt.config_as()?;
        let vocab =
            Vocabulary::from_tokens(ckpt.vocab.clone()).map_err(|e| ModelError::VocabularyMismatch(e.to_string()))?;
        let mut model = Self::new(kind, vocab, config)?;
        ckpt.fill_store("", &mut model.params)
            .map_err(|e| ModelError::VocabularyMismatch(e.to_string()))?;
        Ok(model)
    }
}

/// `(probability, label)` per token; label is 1 iff probability ≥ threshold.
pub fn predict_word_labels<S: AsRef<str>>(
    model: &WordModel,
    tokens: &[S],
    threshold: f64,
) -> Result<Vec<(f64, u8)>, ModelError> {
    Ok(model
        .probabilities(tokens)?
        .into_iter()
        .map(|p| (p, u8::from(p >= threshold)))
        .collect())
}

/// Unique lowercased tokens labelled 1 if vague in any sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct UniqueWordDataset {
    pub entries: Vec<(String, u8)>,
}

impl UniqueWordDataset {
    pub fn positives(&self) -> usize {
        self.entries.iter().filter(|e| e.1 == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.entries.len() - self.positives()
    }

    /// Positive-to-negative ratio.
    pub fn ratio(&self) -> f64 {
        self.positives() as f64 / self.negatives().max(1) as f64
    }
}

pub fn build_unique_word_dataset(train: &[ConsolidatedSentence]) -> Result<UniqueWordDataset, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut labels: BTreeMap<String, u8> = BTreeMap::new();
    for s in train {
        for (tok, &l) in s.tokens.iter().zip(&s.word_labels) {
            let e = labels.entry(tok.lower()).or_insert(0);
            *e = (*e).max(l);
        }
    }
    Ok(UniqueWordDataset {
        entries: labels.into_iter().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerLog {
    pub train_loss: Vec<f64>,
    /// Token-level F1 (percent) on the validation sentences per epoch.
    pub val_f1: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Token-level F1 (percent) of `model` on `data`.
pub fn word_f1(model: &WordModel, data: &[ConsolidatedSentence], threshold: f64) -> Result<f64, ModelError> {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for s in data {
        let texts = s.texts();
        for ((_, l), &t) in predict_word_labels(model, &texts, threshold)?
            .iter()
            .zip(&s.word_labels)
        {
            pred.push(*l);
            truth.push(t);
        }
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(binary_prf(&truth, &pred).map_err(|_| ModelError::EmptyInput)?.f1)
}

/// Trains with Adam on per-token BCE and keeps the epoch with the best
/// validation F1 (training F1 when `val` is empty). The agnostic model
/// trains on the unique-word dataset built from `train`.
pub fn train_tagger(
    model: &mut WordModel,
    train: &[ConsolidatedSentence],
    val: &[ConsolidatedSentence],
) -> Result<TaggerLog, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let cfg = model.config.clone();
    if cfg.batch == 0 {
        return Err(ModelError::ConfigInvalid("batch must be positive".into()));
    }
    let (seqs, labels): (Vec<Vec<usize>>, Vec<Vec<u8>>) = match model.kind {
        WordModelKind::Aware => train
            .iter()
            .map(|s| (model.vocab.encode(&s.texts()), s.word_labels.clone()))
            .unzip(),
        WordModelKind::Agnostic => build_unique_word_dataset(train)?
            .entries
            .iter()
            .map(|(t, l)| (vec![model.vocab.id(t)], vec![*l]))
            .unzip(),
    };
    let select_on = if val.is_empty() { train } else { val };

    let mut rng = Rng::new(cfg.seed).fork(1);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut log = TaggerLog {
        train_loss: Vec::new(),
        val_f1: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<(f64, Vec<crate::tensor::Tensor>)> = None;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let bs: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let bl: Vec<Vec<u8>> = chunk.iter().map(|&i| labels[i].clone()).collect();
            let mut g = Graph::new();
            let loss = model.loss_with(&mut g, &model.params, &bs, &bl)?;
            total += finite_loss(g.value(loss).item())? * chunk.len() as f64;
            g.backward(loss, &mut [&mut model.params])?;
            model.params.clip_grads(cfg.clip);
            adam.step(&mut model.params)?;
        }
        log.train_loss.push(total / seqs.len() as f64);
        let f1 = word_f1(model, select_on, cfg.threshold)?;
        log.val_f1.push(f1);
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, snapshot(&model.params)));
            log.best_epoch = Some(epoch);
        }
    }
    if let Some((_, values)) = best {
        restore(&mut model.params, &values);
    }
    Ok(log)
}

/// Tagging output for one sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tagging {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
}

pub fn tag_sentence<S: AsRef<str>>(model: &WordModel, tokens: &[S], threshold: f64) -> Result<Tagging, ModelError> {
    let pl = predict_word_labels(model, tokens, threshold)?;
    Ok(Tagging {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        probs: pl.iter().map(|p| p.0).collect(),
        labels: pl.iter().map(|p| p.1).collect(),
    })
}
