//! Alternating generator/discriminator training, the plain supervised
//! sentence classifiers it is compared with, and the majority baseline.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{ConsolidatedSentence, VaguenessClass};
use crate::discriminator::{loss_discriminator, loss_generator, Discriminator, GanMode};
use crate::embeddings::Vocabulary;
use crate::evaluation::weighted_prf;
use crate::generator::{sample_classes, LmGenerator};
use crate::nn::{finite_loss, restore, snapshot, ModelError};
use crate::tensor::{Adam, AdamConfig, Graph, Rng, Tensor};

pub const MAJORITY_KIND: &str = "majority";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub mode: GanMode,
    pub d_steps: usize,
    pub g_steps: usize,
    pub batch: usize,
    pub d_lr: f64,
    pub g_lr: f64,
    pub tau: f64,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub clip: f64,
    /// Skips generator updates; fakes are still sampled.
    pub freeze_generator: bool,
    /// Class prior for fake sentences; uniform when absent.
    pub fake_class_prior: Option<[f64; 4]>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            mode: GanMode::Full,
            d_steps: 1,
            g_steps: 1,
            batch: 16,
            d_lr: 1e-3,
            g_lr: 1e-3,
            tau: 0.5,
            seed: 0,
            epochs: 10,
            patience: 5,
            clip: 5.0,
            freeze_generator: false,
            fake_class_prior: None,
        }
    }
}

impl GanConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.d_steps == 0 || self.batch == 0 {
            return Err(ModelError::ConfigInvalid("d_steps and batch must be positive".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(ModelError::ConfigInvalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Token ids of a sentence (without EOS) and its class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSentence {
    pub ids: Vec<usize>,
    pub class: VaguenessClass,
}

/// Encodes consolidated sentences with `vocab`.
pub fn labeled_from(vocab: &Vocabulary, sentences: &[ConsolidatedSentence]) -> Vec<LabeledSentence> {
    sentences
        .iter()
        .map(|s| LabeledSentence {
            ids: vocab.encode(&s.texts()),
            class: s.class,
        })
        .collect()
}

/// Mean log-likelihoods recorded at one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_c: f64,
    pub l_s: f64,
    pub l_c_gen: Option<f64>,
    pub l_s_gen: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    /// Weighted F (percent) of the class head on the selection set per epoch.
    pub val_f1: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn best_val_f1(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_f1[e])
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("step,l_c,l_s,l_c_gen,l_s_gen\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step,
                s.l_c,
                s.l_s,
                opt(s.l_c_gen),
                opt(s.l_s_gen)
            ));
        }
        out
    }
}

/// Weighted F (percent) of `disc`'s class head on `data`.
pub fn class_f1(disc: &Discriminator, data: &[LabeledSentence]) -> Result<f64, ModelError> {
    let seqs: Vec<Vec<usize>> = data.iter().map(|s| s.ids.clone()).collect();
    let pred: Vec<VaguenessClass> = disc
        .class_probabilities(&seqs)?
        .iter()
        .map(|p| VaguenessClass::ALL[crate::tensor::argmax(p)])
        .collect();
    let truth: Vec<VaguenessClass> = data.iter().map(|s| s.class).collect();
    Ok(weighted_prf(&truth, &pred).map_err(|_| ModelError::EmptyInput)?.f1)
}

/// One discriminator update on `real` plus an equal number of fakes.
/// Returns `(L_C, L_S)`.
pub fn discriminator_step(
    gen: &LmGenerator,
    disc: &mut Discriminator,
    adam: &mut Adam,
    real: &[LabeledSentence],
    cfg: &GanConfig,
    rng: &mut Rng,
) -> Result<(f64, f64), ModelError> {
    let fake_classes = sample_classes(real.len(), cfg.fake_class_prior.as_ref(), rng);
    let (soft, lengths) = {
        let mut g = Graph::new();
        let u = gen.unroll(&mut g, &gen.params, &fake_classes, cfg.tau, rng)?;
        let rows = u.soft_rows(&mut g)?;
        (g.value(rows).clone(), u.lengths())
    };
    let mut g = Graph::new();
    let seqs: Vec<Vec<usize>> = real.iter().map(|s| s.ids.clone()).collect();
    let real_classes: Vec<VaguenessClass> = real.iter().map(|s| s.class).collect();
    let ri = disc.real_input(&mut g, &disc.params, &seqs)?;
    let rl = disc.forward(&mut g, &disc.params, &ri)?;
    let soft = g.input(soft);
    let fi = disc.soft_input(&mut g, &disc.params, soft, lengths)?;
    let fl = disc.forward(&mut g, &disc.params, &fi)?;
    let loss = loss_discriminator(&mut g, &rl, &real_classes, &fl, &fake_classes, cfg.mode)?;
    finite_loss(g.value(loss.total).item())?;
    g.backward(loss.total, &mut [&mut disc.params])?;
    disc.params.clip_grads(cfg.clip);
    adam.step(&mut disc.params)?;
    Ok((loss.class_ll, loss.source_ll))
}

/// One generator update through the soft path on `n` fakes. Only the
/// generator's parameters receive gradients. Returns `(L_C′, L_S′)`.
pub fn generator_step(
    gen: &mut LmGenerator,
    disc: &Discriminator,
    adam: &mut Adam,
    n: usize,
    cfg: &GanConfig,
    rng: &mut Rng,
) -> Result<(f64, f64), ModelError> {
    let classes = sample_classes(n, cfg.fake_class_prior.as_ref(), rng);
    let mut g = Graph::new();
    let u = gen.unroll(&mut g, &gen.params, &classes, cfg.tau, rng)?;
    let rows = u.soft_rows(&mut g)?;
    let fi = disc.soft_input(&mut g, &disc.params, rows, u.lengths())?;
    let fl = disc.forward(&mut g, &disc.params, &fi)?;
    let loss = loss_generator(&mut g, &fl, &classes, cfg.mode)?;
    finite_loss(g.value(loss.total).item())?;
    g.backward(loss.total, &mut [&mut gen.params])?;
    gen.params.clip_grads(cfg.clip);
    adam.step(&mut gen.params)?;
    Ok((loss.class_ll, loss.source_ll))
}

struct Selection {
    best: Option<(f64, Vec<Tensor>)>,
    since_best: usize,
}

impl Selection {
    /// Records an epoch's score; returns true when patience is exhausted.
    fn update(&mut self, log: &mut TrainLog, disc: &Discriminator, f1: f64, patience: usize) -> bool {
        let epoch = log.val_f1.len();
        log.val_f1.push(f1);
        if self.best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            self.best = Some((f1, snapshot(&disc.params)));
            log.best_epoch = Some(epoch);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        patience > 0 && self.since_best >= patience
    }

    fn finish(self, disc: &mut Discriminator) {
        if let Some((_, values)) = self.best {
            restore(&mut disc.params, &values);
        }
    }
}

/// Alternates `d_steps` discriminator and `g_steps` generator updates per
/// real batch. Keeps the discriminator from the epoch with the best weighted
/// F on `val` (on `train` when `val` is empty); stops after `patience`
/// epochs without improvement.
pub fn train_acgan(
    gen: &mut LmGenerator,
    disc: &mut Discriminator,
    train: &[LabeledSentence],
    val: &[LabeledSentence],
    cfg: &GanConfig,
) -> Result<TrainLog, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if gen.vocab != disc.vocab {
        return Err(ModelError::VocabularyMismatch(
            "generator and discriminator vocabularies differ".into(),
        ));
    }
    let select_on = if val.is_empty() { train } else { val };
    let root = Rng::new(cfg.seed);
    let mut order_rng = root.fork(11);
    let mut d_rng = root.fork(12);
    let mut g_rng = root.fork(13);
    let mut adam_d = Adam::new(
        AdamConfig {
            lr: cfg.d_lr,
            ..AdamConfig::default()
        },
        &disc.params,
    );
    let mut adam_g = Adam::new(
        AdamConfig {
            lr: cfg.g_lr,
            ..AdamConfig::default()
        },
        &gen.params,
    );
    let mut log = TrainLog::default();
    let mut sel = Selection {
        best: None,
        since_best: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let real: Vec<LabeledSentence> = chunk.iter().map(|&i| train[i].clone()).collect();
            let mut d_terms = (0.0, 0.0);
            for _ in 0..cfg.d_steps {
                d_terms = discriminator_step(gen, disc, &mut adam_d, &real, cfg, &mut d_rng)?;
            }
            let mut g_terms = None;
            if !cfg.freeze_generator {
                for _ in 0..cfg.g_steps {
                    g_terms = Some(generator_step(gen, disc, &mut adam_g, real.len(), cfg, &mut g_rng)?);
                }
            }
            log.steps.push(StepLog {
                step: log.steps.len(),
                l_c: d_terms.0,
                l_s: d_terms.1,
                l_c_gen: g_terms.map(|t| t.0),
                l_s_gen: g_terms.map(|t| t.1),
            });
        }
        let f1 = class_f1(disc, select_on)?;
        if sel.update(&mut log, disc, f1, cfg.patience) {
            break;
        }
    }
    sel.finish(disc);
    Ok(log)
}

/// Supervised 4-way cross-entropy on the class head alone. Uses the batch,
/// `d_lr`, epochs, patience, clip and seed fields of `cfg`.
pub fn train_baseline(
    disc: &mut Discriminator,
    train: &[LabeledSentence],
    val: &[LabeledSentence],
    cfg: &GanConfig,
) -> Result<TrainLog, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let select_on = if val.is_empty() { train } else { val };
    let mut rng = Rng::new(cfg.seed).fork(11);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.d_lr,
            ..AdamConfig::default()
        },
        &disc.params,
    );
    let mut log = TrainLog::default();
    let mut sel = Selection {
        best: None,
        since_best: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| train[i].ids.clone()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| train[i].class.index()).collect();
            let mut g = Graph::new();
            let input = disc.real_input(&mut g, &disc.params, &seqs)?;
            let rep = disc.represent(&mut g, &disc.params, &input)?;
            let logits = disc.class_head.forward(&mut g, &disc.params, rep)?;
            let loss = g.cross_entropy(logits, &targets)?;
            let value = finite_loss(g.value(loss).item())?;
            g.backward(loss, &mut [&mut disc.params])?;
            disc.params.clip_grads(cfg.clip);
            adam.step(&mut disc.params)?;
            log.steps.push(StepLog {
                step: log.steps.len(),
                l_c: -value,
                l_s: 0.0,
                l_c_gen: None,
                l_s_gen: None,
            });
        }
        let f1 = class_f1(disc, select_on)?;
        if sel.update(&mut log, disc, f1, cfg.patience) {
            break;
        }
    }
    sel.finish(disc);
    Ok(log)
}

/// Constant classifier predicting the most frequent training class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityClassifier {
    pub class: VaguenessClass,
}

impl MajorityClassifier {
    pub fn predict(&self, n: usize) -> Vec<VaguenessClass> {
        vec![self.class; n]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: MAJORITY_KIND.into(),
            config: serde_json::to_value(self).expect("serializes"),
            vocab: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        ckpt.expect_kind(MAJORITY_KIND)?;
        Ok(ckpt.config_as()?)
    }
}

/// Modal class of `train_classes`; ties go to the clearer class.
pub fn majority_baseline(train_classes: &[VaguenessClass]) -> Result<MajorityClassifier, ModelError> {
    if train_classes.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut counts = [0usize; 4];
    for c in train_classes {
        counts[c.index()] += 1;
    }
    let best = (0..4).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    Ok(MajorityClassifier {
        class: VaguenessClass::ALL[best],
    })
}
