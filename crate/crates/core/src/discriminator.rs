//! Sentence classifier with a 4-way vagueness head and a real/fake source
//! head over a shared CNN or LSTM representation.
//!
//! Real sentences enter as exact embedding rows; generated sentences enter as
//! expected embeddings `soft · E`, so the discriminator is differentiable in
//! the generator's soft distributions.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::VaguenessClass;
use crate::embeddings::{EmbeddingMatrix, Vocabulary, EOS, PAD};
use crate::nn::{stacked_row, Linear, LstmCell, ModelError};
use crate::tensor::{softmax_rows, xavier_init, Graph, NodeId, ParamId, ParamStore, Rng, Tensor, TensorError};

/// Class and source distributions of one sentence.
pub type HeadDistributions = ([f64; 4], [f64; 2]);

pub const DISCRIMINATOR_KIND: &str = "discriminator";
pub const SOURCE_REAL: usize = 0;
pub const SOURCE_FAKE: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscVariant {
    Cnn,
    Lstm,
}

impl DiscVariant {
    pub fn name(self) -> &'static str {
        match self {
            DiscVariant::Cnn => "cnn",
            DiscVariant::Lstm => "lstm",
        }
    }
}

/// Whether the source head takes part in the adversarial losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanMode {
    #[default]
    Full,
    VaguenessOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscConfig {
    pub variant: DiscVariant,
    pub dim: usize,
    pub hidden: usize,
    pub filters: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            variant: DiscVariant::Cnn,
            dim: 100,
            hidden: 512,
            filters: 128,
            widths: vec![3, 4, 5],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvFilter {
    pub width: usize,
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub enum Body {
    Cnn(Vec<ConvFilter>),
    Lstm(LstmCell),
}

/// Embedded sentences stacked sentence-major: `x` is `[Σ lengths, d]`.
#[derive(Clone, Debug)]
pub struct DiscInput {
    pub x: NodeId,
    pub lengths: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadLogits {
    /// `[batch, 4]`
    pub class: NodeId,
    /// `[batch, 2]`
    pub source: NodeId,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub config: DiscConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub emb: ParamId,
    pub body: Body,
    pub class_head: Linear,
    pub source_head: Linear,
}

impl Discriminator {
    pub fn new(vocab: Vocabulary, config: DiscConfig) -> Result<Self, ModelError> {
        if config.dim == 0 {
            return Err(ModelError::ConfigInvalid("dim must be positive".into()));
        }
        let mut rng = Rng::new(config.seed).fork(7);
        let mut params = ParamStore::new();
        let emb = params.add("emb", xavier_init(&[vocab.len(), config.dim], &mut rng)?)?;
        let (body, rep) = match config.variant {
            DiscVariant::Cnn => {
                if config.filters == 0 || config.widths.is_empty() || config.widths.contains(&0) {
                    return Err(ModelError::ConfigInvalid(
                        "CNN needs filters and positive widths".into(),
                    ));
                }
                let mut convs = Vec::new();
                for &width in &config.widths {
                    let w = params.add(
                        &format!("conv{width}.w"),
                        xavier_init(&[width * config.dim, config.filters], &mut rng)?,
                    )?;
                    let b = params.add(&format!("conv{width}.b"), Tensor::zeros(&[config.filters]))?;
                    convs.push(ConvFilter { width, w, b });
                }
                (Body::Cnn(convs), config.filters * config.widths.len())
            }
            DiscVariant::Lstm => {
                if config.hidden == 0 {
                    return Err(ModelError::ConfigInvalid("hidden must be positive".into()));
                }
                let cell = LstmCell::new(&mut params, "lstm", config.dim, config.hidden, &mut rng)?;
                (Body::Lstm(cell), config.hidden)
            }
        };
        let class_head = Linear::new(&mut params, "class", rep, 4, &mut rng)?;
        let source_head = Linear::new(&mut params, "source", rep, 2, &mut rng)?;
        // untrained heads predict uniformly
        params.value_mut(class_head.w).fill(0.0);
        params.value_mut(source_head.w).fill(0.0);
        Ok(Self {
            config,
            vocab,
            params,
            emb,
            body,
            class_head,
            source_head,
        })
    }

    pub fn representation_dim(&self) -> usize {
        self.class_head.input
    }

    pub fn set_embeddings(&mut self, e: &EmbeddingMatrix) -> Result<(), ModelError> {
        if e.matrix.shape() != self.params.value(self.emb).shape() {
            return Err(ModelError::VocabularyMismatch(format!(
                "embedding {:?} vs discriminator {:?}",
                e.matrix.shape(),
                self.params.value(self.emb).shape()
            )));
        }
        *self.params.value_mut(self.emb) = e.matrix.clone();
        Ok(())
    }

    /// Exact embedding rows of each sentence with trailing PAD removed and
    /// EOS appended.
    pub fn real_input(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<usize>]) -> Result<DiscInput, TensorError> {
        let mut ids = Vec::new();
        let mut lengths = Vec::with_capacity(seqs.len());
        for s in seqs {
            let end = s.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
            ids.extend_from_slice(&s[..end]);
            ids.push(EOS);
            lengths.push(end + 1);
        }
        let e = g.param(store, self.emb);
        let x = g.gather(e, &ids)?;
        Ok(DiscInput { x, lengths })
    }

    /// Expected embeddings of sentence-major soft rows `[Σ lengths, |V|]`.
    pub fn soft_input(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        soft_rows: NodeId,
        lengths: Vec<usize>,
    ) -> Result<DiscInput, TensorError> {
        let e = g.param(store, self.emb);
        let x = g.matmul(soft_rows, e)?;
        Ok(DiscInput { x, lengths })
    }

    /// Shared sentence representation, `[batch, representation_dim]`.
    pub fn represent(&self, g: &mut Graph, store: &ParamStore, input: &DiscInput) -> Result<NodeId, ModelError> {
        if input.lengths.is_empty() || input.lengths.contains(&0) {
            return Err(ModelError::EmptyInput);
        }
        match &self.body {
            Body::Cnn(convs) => Ok(self.cnn(g, store, convs, input)?),
            Body::Lstm(cell) => Ok(self.lstm(g, store, cell, input)?),
        }
    }

    fn cnn(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        convs: &[ConvFilter],
        input: &DiscInput,
    ) -> Result<NodeId, TensorError> {
        let d = self.config.dim;
        let max_w = convs.iter().map(|c| c.width).max().unwrap_or(1);
        let mut reps = Vec::with_capacity(input.lengths.len());
        let mut off = 0;
        for &len in &input.lengths {
            let mut seg = g.slice_rows(input.x, off, off + len)?;
            off += len;
            if len < max_w {
                let pad = g.input(Tensor::zeros(&[max_w - len, d]));
                seg = g.concat(&[seg, pad], 0)?;
            }
            let mut pooled = Vec::with_capacity(convs.len());
            for c in convs {
                let w = g.param(store, c.w);
                let b = g.param(store, c.b);
                let y = g.conv1d(seg, w)?;
                let y = g.add_row(y, b)?;
                let y = g.relu(y)?;
                // windows made only of padding are excluded
                pooled.push(g.max_rows(y, len.max(c.width) - c.width + 1)?);
            }
            reps.push(g.concat(&pooled, 1)?);
        }
        g.concat(&reps, 0)
    }

    fn lstm(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        cell: &LstmCell,
        input: &DiscInput,
    ) -> Result<NodeId, TensorError> {
        let batch = input.lengths.len();
        let total: usize = input.lengths.iter().sum();
        let zero = g.input(Tensor::zeros(&[1, self.config.dim]));
        let x = g.concat(&[input.x, zero], 0)?;
        let starts: Vec<usize> = input
            .lengths
            .iter()
            .scan(0, |acc, &l| {
                let s = *acc;
                *acc += l;
                Some(s)
            })
            .collect();
        let steps = input.lengths.iter().copied().max().unwrap_or(0);
        let mut inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let ids: Vec<usize> = (0..batch)
                .map(|b| if t < input.lengths[b] { starts[b] + t } else { total })
                .collect();
            inputs.push(g.gather(x, &ids)?);
        }
        let hs = cell.run(g, store, &inputs)?;
        let stacked = g.concat(&hs, 0)?;
        let last: Vec<usize> = (0..batch)
            .map(|b| stacked_row(input.lengths[b] - 1, b, batch))
            .collect();
        g.gather(stacked, &last)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: &DiscInput) -> Result<HeadLogits, ModelError> {
        let rep = self.represent(g, store, input)?;
        Ok(HeadLogits {
            class: self.class_head.forward(g, store, rep)?,
            source: self.source_head.forward(g, store, rep)?,
        })
    }

    /// Class distributions for token-id sentences, no gradient.
    pub fn class_probabilities(&self, seqs: &[Vec<usize>]) -> Result<Vec<[f64; 4]>, ModelError> {
        Ok(self.head_probabilities(seqs)?.into_iter().map(|(c, _)| c).collect())
    }

    /// Class and source distributions for token-id sentences, no gradient.
    pub fn head_probabilities(&self, seqs: &[Vec<usize>]) -> Result<Vec<HeadDistributions>, ModelError> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(64) {
            let mut g = Graph::new();
            let input = self.real_input(&mut g, &self.params, chunk)?;
            let h = self.forward(&mut g, &self.params, &input)?;
            let pc = softmax_rows(g.value(h.class), 1.0);
            let ps = softmax_rows(g.value(h.source), 1.0);
            for b in 0..chunk.len() {
                out.push((
                    pc.row_slice(b).try_into().expect("4 classes"),
                    ps.row_slice(b).try_into().expect("2 sources"),
                ));
            }
        }
        Ok(out)
    }

    pub fn predict<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<Vec<VaguenessClass>, ModelError> {
        let seqs: Vec<Vec<usize>> = sentences.iter().map(|s| self.vocab.encode(s)).collect();
        Ok(self
            .class_probabilities(&seqs)?
            .iter()
            .map(|p| VaguenessClass::ALL[crate::tensor::argmax(p)])
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_stores(
            DISCRIMINATOR_KIND,
            serde_json::to_value(&self.config).expect("config serializes"),
            self.vocab.tokens().to_vec(),
            &[("", &self.params)],
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        ckpt.expect_kind(DISCRIMINATOR_KIND)?;
        let config: DiscConfig = ckpt.config_as()?;
        let vocab =
            Vocabulary::from_tokens(ckpt.vocab.clone()).map_err(|e| ModelError::VocabularyMismatch(e.to_string()))?;
        let mut d = Self::new(vocab, config)?;
        ckpt.fill_store("", &mut d.params)
            .map_err(|e| ModelError::CheckpointMismatch(e.to_string()))?;
        Ok(d)
    }
}

/// Loss node plus the mean log-likelihood terms it is built from.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: NodeId,
    /// Mean `log P(C = c | X)`.
    pub class_ll: f64,
    /// Summed mean source log-likelihoods; 0 when the source head is off.
    pub source_ll: f64,
}

fn class_targets(classes: &[VaguenessClass]) -> Vec<usize> {
    classes.iter().map(|c| c.index()).collect()
}

/// `−(L_C + L_S)` with `L_C` over real ∪ fake and
/// `L_S = mean log P(real | X_real) + mean log P(fake | X_fake)`.
pub fn loss_discriminator(
    g: &mut Graph,
    real: &HeadLogits,
    real_classes: &[VaguenessClass],
    fake: &HeadLogits,
    fake_classes: &[VaguenessClass],
    mode: GanMode,
) -> Result<LossTerms, ModelError> {
    if real_classes.is_empty() || fake_classes.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let logits = g.concat(&[real.class, fake.class], 0)?;
    let targets: Vec<usize> = class_targets(real_classes)
        .into_iter()
        .chain(class_targets(fake_classes))
        .collect();
    let ce_c = g.cross_entropy(logits, &targets)?;
    let class_ll = -g.value(ce_c).item();
    if mode == GanMode::VaguenessOnly {
        return Ok(LossTerms {
            total: ce_c,
            class_ll,
            source_ll: 0.0,
        });
    }
    let ce_r = g.cross_entropy(real.source, &vec![SOURCE_REAL; real_classes.len()])?;
    let ce_f = g.cross_entropy(fake.source, &vec![SOURCE_FAKE; fake_classes.len()])?;
    let ce_s = g.add(ce_r, ce_f)?;
    let total = g.add(ce_c, ce_s)?;
    Ok(LossTerms {
        total,
        class_ll,
        source_ll: -g.value(ce_s).item(),
    })
}

/// Non-saturating `−(L_C′ + L_S′)` with `L_S′ = mean log P(real | X_fake)`.
pub fn loss_generator(
    g: &mut Graph,
    fake: &HeadLogits,
    fake_classes: &[VaguenessClass],
    mode: GanMode,
) -> Result<LossTerms, ModelError> {
    if fake_classes.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let ce_c = g.cross_entropy(fake.class, &class_targets(fake_classes))?;
    let class_ll = -g.value(ce_c).item();
    if mode == GanMode::VaguenessOnly {
        return Ok(LossTerms {
            total: ce_c,
            class_ll,
            source_ll: 0.0,
        });
    }
    let ce_s = g.cross_entropy(fake.source, &vec![SOURCE_REAL; fake_classes.len()])?;
    let total = g.add(ce_c, ce_s)?;
    Ok(LossTerms {
        total,
        class_ll,
        source_ll: -g.value(ce_s).item(),
    })
}

/// Head outputs for one sentence and its target class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadProbs {
    pub class: [f64; 4],
    pub source: [f64; 2],
    pub label: VaguenessClass,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Discriminator loss from probabilities instead of logits.
pub fn discriminator_objective(real: &[HeadProbs], fake: &[HeadProbs], mode: GanMode) -> f64 {
    let l_c = mean(real.iter().chain(fake).map(|h| h.class[h.label.index()].ln()));
    let l_s = match mode {
        GanMode::Full => {
            mean(real.iter().map(|h| h.source[SOURCE_REAL].ln()))
                + mean(fake.iter().map(|h| h.source[SOURCE_FAKE].ln()))
        }
        GanMode::VaguenessOnly => 0.0,
    };
    -(l_c + l_s)
}

/// Generator loss from probabilities instead of logits.
pub fn generator_objective(fake: &[HeadProbs], mode: GanMode) -> f64 {
    let l_c = mean(fake.iter().map(|h| h.class[h.label.index()].ln()));
    let l_s = match mode {
        GanMode::Full => mean(fake.iter().map(|h| h.source[SOURCE_REAL].ln())),
        GanMode::VaguenessOnly => 0.0,
    };
    -(l_c + l_s)
}

/// Reads head probabilities out of evaluated logits.
pub fn head_probs(g: &Graph, logits: &HeadLogits, labels: &[VaguenessClass]) -> Vec<HeadProbs> {
    let pc = softmax_rows(g.value(logits.class), 1.0);
    let ps = softmax_rows(g.value(logits.source), 1.0);
    labels
        .iter()
        .enumerate()
        .map(|(b, &label)| HeadProbs {
            class: pc.row_slice(b).try_into().expect("4 classes"),
            source: ps.row_slice(b).try_into().expect("2 sources"),
            label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use VaguenessClass::*;

    fn vocab() -> Vocabulary {
        let c = vec!["we may share some data with partners"
            .split(' ')
            .map(String::from)
            .collect::<Vec<_>>()];
        Vocabulary::build(&c, 100).unwrap()
    }

    fn disc(variant: DiscVariant, seed: u64) -> Discriminator {
        let mut d = Discriminator::new(
            vocab(),
            DiscConfig {
                variant,
                dim: 4,
                hidden: 5,
                filters: 3,
                widths: vec![3, 4, 5],
                seed,
            },
        )
        .unwrap();
        let mut rng = Rng::new(seed + 100);
        for p in [d.class_head.w, d.source_head.w] {
            let shape = d.params.value(p).shape().to_vec();
            *d.params.value_mut(p) = xavier_init(&shape, &mut rng).unwrap();
        }
        d
    }

    fn eval(d: &Discriminator, seqs: &[Vec<usize>]) -> (Tensor, Tensor) {
        let mut g = Graph::new();
        let input = d.real_input(&mut g, &d.params, seqs).unwrap();
        let h = d.forward(&mut g, &d.params, &input).unwrap();
        (g.value(h.class).clone(), g.value(h.source).clone())
    }

    #[test]
    fn zero_heads_are_uniform() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            let d = Discriminator::new(
                vocab(),
                DiscConfig {
                    variant,
                    dim: 4,
                    hidden: 5,
                    filters: 3,
                    ..DiscConfig::default()
                },
            )
            .unwrap();
            let probs = d.head_probabilities(&[vec![3, 4], vec![5]]).unwrap();
            for (c, s) in probs {
                assert!(c.iter().all(|&p| (p - 0.25).abs() < 1e-12));
                assert!(s.iter().all(|&p| (p - 0.5).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn short_sentence_has_full_representation() {
        let d = Discriminator::new(
            vocab(),
            DiscConfig {
                dim: 4,
                ..DiscConfig::default()
            },
        )
        .unwrap();
        let mut g = Graph::new();
        let input = d.real_input(&mut g, &d.params, &[vec![3, 4]]).unwrap();
        assert_eq!(input.lengths, vec![3]);
        let r = d.represent(&mut g, &d.params, &input).unwrap();
        assert_eq!(g.value(r).shape(), &[1, 384]);
    }

    #[test]
    fn one_hot_soft_input_matches_real() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            let d = disc(variant, 1);
            let seqs = vec![vec![3, 4, 5, 6], vec![7]];
            let (c1, s1) = eval(&d, &seqs);
            let mut g = Graph::new();
            let v = d.vocab.len();
            let mut rows = Vec::new();
            let mut lengths = Vec::new();
            for s in &seqs {
                for &t in s.iter().chain([EOS].iter()) {
                    let mut r = vec![0.0; v];
                    r[t] = 1.0;
                    rows.push(r);
                }
                lengths.push(s.len() + 1);
            }
            let soft = g.input(Tensor::from_rows(&rows).unwrap());
            let input = d.soft_input(&mut g, &d.params, soft, lengths).unwrap();
            let h = d.forward(&mut g, &d.params, &input).unwrap();
            for (a, b) in g.value(h.class).data().iter().zip(c1.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in g.value(h.source).data().iter().zip(s1.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trailing_pads_do_not_change_output() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            let d = disc(variant, 2);
            let (a, _) = eval(&d, &[vec![3, 4]]);
            let (b, _) = eval(&d, &[vec![3, 4, PAD, PAD, PAD]]);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn batching_does_not_change_output() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            let d = disc(variant, 3);
            let (batched, _) = eval(&d, &[vec![3, 4, 5, 6, 7, 8], vec![4]]);
            let (one, _) = eval(&d, &[vec![4]]);
            for (x, y) in batched.row_slice(1).iter().zip(one.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn objectives_match_hand_arithmetic() {
        let perfect = HeadProbs {
            class: [0.0, 1.0, 0.0, 0.0],
            source: [1.0, 0.0],
            label: SomewhatClear,
        };
        let fake_perfect = HeadProbs {
            source: [0.0, 1.0],
            ..perfect
        };
        assert_eq!(discriminator_objective(&[perfect], &[fake_perfect], GanMode::Full), 0.0);
        assert_eq!(generator_objective(&[perfect], GanMode::Full), 0.0);

        let uniform = |label| HeadProbs {
            class: [0.25; 4],
            source: [0.5; 2],
            label,
        };
        let real: Vec<_> = [Clear, SomewhatClear].map(uniform).to_vec();
        let fake: Vec<_> = [Vague, ExtremelyVague].map(uniform).to_vec();
        let d = discriminator_objective(&real, &fake, GanMode::Full);
        assert!((d - (4f64.ln() + 2.0 * 2f64.ln())).abs() < 1e-12);
        assert!((discriminator_objective(&real, &fake, GanMode::VaguenessOnly) - 4f64.ln()).abs() < 1e-12);

        let one = HeadProbs {
            class: [0.25, 0.25, 0.3, 0.2],
            source: [0.5, 0.5],
            label: Clear,
        };
        assert!((generator_objective(&[one], GanMode::Full) + (0.25f64.ln() + 0.5f64.ln())).abs() < 1e-12);
        assert!((generator_objective(&[one], GanMode::VaguenessOnly) + 0.25f64.ln()).abs() < 1e-12);

        let a = HeadProbs {
            class: [0.1, 0.6, 0.2, 0.1],
            source: [0.7, 0.3],
            label: SomewhatClear,
        };
        let b = HeadProbs {
            class: [0.3, 0.3, 0.3, 0.1],
            source: [0.4, 0.6],
            label: ExtremelyVague,
        };
        let hand = -((0.6f64.ln() + 0.1f64.ln()) / 2.0 + 0.7f64.ln() + 0.6f64.ln());
        assert!((discriminator_objective(&[a], &[b], GanMode::Full) - hand).abs() < 1e-12);
    }

    fn loss_pair(
        d: &Discriminator,
        g: &mut Graph,
        s: &ParamStore,
        real: &[Vec<usize>],
        soft: &Tensor,
        lengths: &[usize],
    ) -> Result<(HeadLogits, HeadLogits), ModelError> {
        let ri = d.real_input(g, s, real)?;
        let rl = d.forward(g, s, &ri)?;
        let sr = g.input(soft.clone());
        let fi = d.soft_input(g, s, sr, lengths.to_vec())?;
        let fl = d.forward(g, s, &fi)?;
        Ok((rl, fl))
    }

    #[test]
    fn graph_losses_match_objectives_and_gradients() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            for seed in 0..2 {
                let d = disc(variant, seed);
                let mut rng = Rng::new(seed + 10);
                let v = d.vocab.len();
                let real = vec![vec![3, 4, 5], vec![6]];
                let lengths = [2, 4];
                let soft = softmax_rows(
                    &Tensor::new(vec![6, v], (0..6 * v).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap(),
                    1.0,
                );
                let rc = [Clear, Vague];
                let fc = [ExtremelyVague, SomewhatClear];
                for mode in [GanMode::Full, GanMode::VaguenessOnly] {
                    let mut g = Graph::new();
                    let (rl, fl) = loss_pair(&d, &mut g, &d.params, &real, &soft, &lengths).unwrap();
                    let dl = loss_discriminator(&mut g, &rl, &rc, &fl, &fc, mode).unwrap();
                    let gl = loss_generator(&mut g, &fl, &fc, mode).unwrap();
                    let rp = head_probs(&g, &rl, &rc);
                    let fp = head_probs(&g, &fl, &fc);
                    assert!((g.value(dl.total).item() - discriminator_objective(&rp, &fp, mode)).abs() < 1e-10);
                    assert!((g.value(gl.total).item() - generator_objective(&fp, mode)).abs() < 1e-10);

                    let mut store = d.params.clone();
                    let r = grad_check(&mut store, 1e-5, |g, s| {
                        let (rl, fl) = loss_pair(&d, g, s, &real, &soft, &lengths).map_err(into_tensor)?;
                        let dl = loss_discriminator(g, &rl, &rc, &fl, &fc, mode).map_err(into_tensor)?;
                        let gl = loss_generator(g, &fl, &fc, mode).map_err(into_tensor)?;
                        g.add(dl.total, gl.total)
                    })
                    .unwrap();
                    assert!(r.max_relative_error <= 1e-4, "{variant:?} {mode:?} {r:?}");
                }
            }
        }
    }

    fn into_tensor(e: ModelError) -> TensorError {
        match e {
            ModelError::Tensor(t) => t,
            other => TensorError::BadShape(other.to_string()),
        }
    }

    #[test]
    fn vagueness_only_leaves_source_head_untouched() {
        let d = disc(DiscVariant::Cnn, 4);
        let mut store = d.params.clone();
        let mut g = Graph::new();
        let ri = d.real_input(&mut g, &store, &[vec![3, 4]]).unwrap();
        let rl = d.forward(&mut g, &store, &ri).unwrap();
        let fi = d.real_input(&mut g, &store, &[vec![5]]).unwrap();
        let fl = d.forward(&mut g, &store, &fi).unwrap();
        let l = loss_discriminator(&mut g, &rl, &[Clear], &fl, &[Vague], GanMode::VaguenessOnly).unwrap();
        g.backward(l.total, &mut [&mut store]).unwrap();
        for p in [d.source_head.w, d.source_head.b] {
            assert!(store.grad(p).data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn empty_batches_rejected() {
        let d = disc(DiscVariant::Cnn, 0);
        let mut g = Graph::new();
        let ri = d.real_input(&mut g, &d.params, &[vec![3]]).unwrap();
        let rl = d.forward(&mut g, &d.params, &ri).unwrap();
        assert!(matches!(
            loss_discriminator(&mut g, &rl, &[Clear], &rl, &[], GanMode::Full),
            Err(ModelError::EmptyInput)
        ));
        assert!(matches!(
            loss_generator(&mut g, &rl, &[], GanMode::Full),
            Err(ModelError::EmptyInput)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        for variant in [DiscVariant::Cnn, DiscVariant::Lstm] {
            let d = disc(variant, 5);
            let back = Discriminator::from_checkpoint(&Checkpoint::from_bytes(&d.to_checkpoint().to_bytes()).unwrap())
                .unwrap();
            assert!(back.params.same_values(&d.params));
            assert_eq!(back.config, d.config);
        }
    }
}
