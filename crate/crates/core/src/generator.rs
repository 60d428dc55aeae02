//! LSTM language model with class-conditional sampling.
//!
//! At each step the generator forms `a + z + λ_C·v` from its logits `a`,
//! Gumbel noise `z` and the vagueness-bias vector `v`. The argmax of that
//! sum is the hard token fed back into the recurrence as a constant; its
//! tempered softmax is the differentiable soft distribution handed to the
//! discriminator.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{CueLexicon, VaguenessClass};
use crate::embeddings::{EmbeddingMatrix, Vocabulary, EOS};
use crate::nn::{finite_loss, stacked_row, time_major, Linear, LstmCell, LstmState, ModelError};
use crate::tensor::{
    argmax, sample_gumbel, softmax_rows, xavier_init, Adam, AdamConfig, Graph, NodeId, ParamId, ParamStore, Rng,
    Tensor, TensorError,
};

pub const GENERATOR_KIND: &str = "generator";

/// Default per-class bias coefficients, clearest to vaguest.
pub const DEFAULT_LAMBDA: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub dim: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub tau: f64,
    pub lambda: [f64; 4],
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub clip: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            hidden: 512,
            max_len: 50,
            tau: 0.5,
            lambda: DEFAULT_LAMBDA,
            lr: 1e-3,
            epochs: 10,
            batch: 16,
            seed: 0,
            clip: 5.0,
        }
    }
}

/// Trainable vocabulary-length vector `v` and the per-class coefficients.
#[derive(Clone, Debug)]
pub struct VaguenessBias {
    pub v: ParamId,
    pub lambda: [f64; 4],
}

impl VaguenessBias {
    pub fn lambda_for(&self, class: VaguenessClass) -> f64 {
        self.lambda[class.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSentence {
    /// Token ids, ending with EOS unless truncated at `max_len`.
    pub hard_tokens: Vec<usize>,
    /// One probability vector per step.
    pub soft_dists: Vec<Vec<f64>>,
    pub class: VaguenessClass,
}

/// Output of one sampling step for a batch.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `a + z + λ·v`, `[batch, |V|]`.
    pub scores: NodeId,
    /// `softmax(scores / τ)`.
    pub soft: NodeId,
    pub hard: Vec<usize>,
    pub next: LstmState,
}

/// A batch of sampled sentences still attached to its graph.
#[derive(Clone, Debug)]
pub struct Unrolled {
    pub steps: Vec<NodeId>,
    pub tokens: Vec<Vec<usize>>,
    pub classes: Vec<VaguenessClass>,
}

impl Unrolled {
    pub fn lengths(&self) -> Vec<usize> {
        self.tokens.iter().map(Vec::len).collect()
    }

    /// Soft distributions of every kept step, sentence-major: `[N, |V|]`.
    pub fn soft_rows(&self, g: &mut Graph) -> Result<NodeId, TensorError> {
        let batch = self.tokens.len();
        let stacked = g.concat(&self.steps, 0)?;
        let rows: Vec<usize> = self
            .tokens
            .iter()
            .enumerate()
            .flat_map(|(b, toks)| (0..toks.len()).map(move |t| stacked_row(t, b, batch)))
            .collect();
        g.gather(stacked, &rows)
    }
}

#[derive(Clone, Debug)]
pub struct LmGenerator {
    pub config: GeneratorConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub emb: ParamId,
    pub bos: ParamId,
    pub cell: LstmCell,
    pub proj: Linear,
    pub bias: VaguenessBias,
}

impl LmGenerator {
    /// `v` starts at 1 for cue-lexicon tokens and 0 elsewhere.
    pub fn new(vocab: Vocabulary, config: GeneratorConfig, lexicon: Option<&CueLexicon>) -> Result<Self, ModelError> {
        if config.dim == 0 || config.hidden == 0 || config.max_len == 0 {
            return Err(ModelError::ConfigInvalid(
                "dim, hidden and max_len must be positive".into(),
            ));
        }
        if config.tau.is_nan() || config.tau <= 0.0 {
            return Err(TensorError::NonPositiveTemperature(config.tau).into());
        }
        let mut rng = Rng::new(config.seed);
        let mut params = ParamStore::new();
        let n = vocab.len();
        let emb = params.add("emb", xavier_init(&[n, config.dim], &mut rng)?)?;
        let bos = params.add("bos", xavier_init(&[1, config.dim], &mut rng)?)?;
        let cell = LstmCell::new(&mut params, "lstm", config.dim, config.hidden, &mut rng)?;
        let proj = Linear::new(&mut params, "proj", config.hidden, n, &mut rng)?;
        let v_init: Vec<f64> = vocab
            .tokens()
            .iter()
            .map(|t| f64::from(u8::from(lexicon.is_some_and(|l| l.contains(t)))))
            .collect();
        let v = params.add("bias.v", Tensor::new(vec![n], v_init)?)?;
        let lambda = config.lambda;
        Ok(Self {
            config,
            vocab,
            params,
            emb,
            bos,
            cell,
            proj,
            bias: VaguenessBias { v, lambda },
        })
    }

    pub fn set_embeddings(&mut self, e: &EmbeddingMatrix) -> Result<(), ModelError> {
        if e.matrix.shape() != self.params.value(self.emb).shape() {
            return Err(ModelError::VocabularyMismatch(format!(
                "embedding {:?} vs generator {:?}",
                e.matrix.shape(),
                self.params.value(self.emb).shape()
            )));
        }
        *self.params.value_mut(self.emb) = e.matrix.clone();
        Ok(())
    }

    /// State after consuming the BOS embedding.
    pub fn start(&self, g: &mut Graph, store: &ParamStore, batch: usize) -> Result<LstmState, TensorError> {
        let bos = g.param(store, self.bos);
        let x0 = g.gather(bos, &vec![0; batch])?;
        let zero = self.cell.zero_state(g, batch);
        self.cell.step(g, store, x0, zero)
    }

    /// Unconditional next-token logits `a = W·h + b`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, state: LstmState) -> Result<NodeId, TensorError> {
        self.proj.forward(g, store, state.h)
    }

    /// Scores, soft distribution and hard tokens for one step with explicit
    /// Gumbel noise `z` (`[batch, |V|]`) and per-row coefficients `lambdas`.
    pub fn score_step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: LstmState,
        lambdas: &[f64],
        z: Tensor,
        tau: f64,
    ) -> Result<(NodeId, NodeId, Vec<usize>), TensorError> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(TensorError::NonPositiveTemperature(tau));
        }
        let batch = lambdas.len();
        let a = self.logits(g, store, state)?;
        let z = g.input(z);
        let az = g.add(a, z)?;
        let v = g.param(store, self.bias.v);
        let v_row = g.reshape(v, &[1, self.vocab.len()])?;
        let lam = g.input(Tensor::new(vec![batch, 1], lambdas.to_vec())?);
        let shift = g.matmul(lam, v_row)?;
        let scores = g.add(az, shift)?;
        let hard: Vec<usize> = (0..batch).map(|b| argmax(g.value(scores).row_slice(b))).collect();
        let soft = g.softmax_t(scores, tau)?;
        Ok((scores, soft, hard))
    }

    /// [`Self::score_step`] followed by feeding the hard tokens back in.
    pub fn conditional_step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: LstmState,
        lambdas: &[f64],
        z: Tensor,
        tau: f64,
    ) -> Result<StepOutput, TensorError> {
        let (scores, soft, hard) = self.score_step(g, store, state, lambdas, z, tau)?;
        let next = self.advance(g, store, state, &hard)?;
        Ok(StepOutput {
            scores,
            soft,
            hard,
            next,
        })
    }

    /// Feeds `tokens` into the recurrence as constants.
    pub fn advance(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: LstmState,
        tokens: &[usize],
    ) -> Result<LstmState, TensorError> {
        let table = store.value(self.emb);
        let d = table.shape()[1];
        let mut rows = Vec::with_capacity(tokens.len() * d);
        for &t in tokens {
            rows.extend_from_slice(table.row_slice(t));
        }
        let x = g.input(Tensor::new(vec![tokens.len(), d], rows)?);
        self.cell.step(g, store, x, state)
    }

    /// Samples one sentence per class until EOS or `max_len`.
    pub fn unroll(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        classes: &[VaguenessClass],
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Unrolled, TensorError> {
        let batch = classes.len();
        let lambdas: Vec<f64> = classes.iter().map(|&c| self.bias.lambda_for(c)).collect();
        let mut state = self.start(g, store, batch)?;
        let mut steps = Vec::new();
        let mut tokens = vec![Vec::new(); batch];
        let mut done = vec![false; batch];
        for _ in 0..self.config.max_len {
            let z = sample_gumbel(&[batch, self.vocab.len()], rng);
            let out = self.conditional_step(g, store, state, &lambdas, z, tau)?;
            steps.push(out.soft);
            for b in 0..batch {
                if !done[b] {
                    tokens[b].push(out.hard[b]);
                    done[b] = out.hard[b] == EOS;
                }
            }
            state = out.next;
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(Unrolled {
            steps,
            tokens,
            classes: classes.to_vec(),
        })
    }

    pub fn generate_batch(
        &self,
        classes: &[VaguenessClass],
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Vec<GeneratedSentence>, ModelError> {
        if classes.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let u = self.unroll(&mut g, &self.params, classes, tau, rng)?;
        Ok(u.tokens
            .iter()
            .enumerate()
            .map(|(b, toks)| GeneratedSentence {
                hard_tokens: toks.clone(),
                soft_dists: (0..toks.len())
                    .map(|t| g.value(u.steps[t]).row_slice(b).to_vec())
                    .collect(),
                class: classes[b],
            })
            .collect())
    }

    /// Token strings of a generated sentence without the trailing EOS.
    pub fn words(&self, s: &GeneratedSentence) -> Vec<String> {
        s.hard_tokens
            .iter()
            .filter(|&&t| t != EOS)
            .map(|&t| self.vocab.token(t).to_string())
            .collect()
    }

    /// Mean teacher-forced cross-entropy of each sentence followed by EOS.
    pub fn lm_loss(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<usize>]) -> Result<NodeId, TensorError> {
        let batch = seqs.len();
        let seqs: Vec<Vec<usize>> = seqs
            .iter()
            .map(|s| s[..s.len().min(self.config.max_len - 1)].to_vec())
            .collect();
        let e = g.param(store, self.emb);
        let mut state = self.start(g, store, batch)?;
        let mut hs = vec![state.h];
        for ids in time_major(&seqs) {
            let x = g.gather(e, &ids)?;
            state = self.cell.step(g, store, x, state)?;
            hs.push(state.h);
        }
        let stacked = g.concat(&hs, 0)?;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (b, s) in seqs.iter().enumerate() {
            for t in 0..=s.len() {
                rows.push(stacked_row(t, b, batch));
                targets.push(if t < s.len() { s[t] } else { EOS });
            }
        }
        let h = g.gather(stacked, &rows)?;
        let logits = self.proj.forward(g, store, h)?;
        g.cross_entropy(logits, &targets)
    }

    /// `exp` of the mean per-token cross-entropy, EOS included.
    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<f64, ModelError> {
        let seqs: Vec<Vec<usize>> = sentences.iter().map(|s| self.vocab.encode(s)).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in seqs.chunks(64) {
            let mut g = Graph::new();
            let loss = self.lm_loss(&mut g, &self.params, chunk)?;
            let n: usize = chunk.iter().map(|s| s.len().min(self.config.max_len - 1) + 1).sum();
            total += g.value(loss).item() * n as f64;
            count += n;
        }
        if count == 0 {
            return Err(ModelError::EmptyInput);
        }
        Ok((total / count as f64).exp())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_stores(
            GENERATOR_KIND,
            serde_json::to_value(&self.config).expect("config serializes"),
            self.vocab.tokens().to_vec(),
            &[("", &self.params)],
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        ckpt.expect_kind(GENERATOR_KIND)?;
        Self::from_checkpoint_prefixed(ckpt, "")
    }

    pub(crate) fn from_checkpoint_prefixed(ckpt: &Checkpoint, prefix: &str) -> Result<Self, ModelError> {
        let config: GeneratorConfig = match ckpt.config.get("generator") {
            Some(c) if !prefix.is_empty() => {
                serde_json::from_value(c.clone()).map_err(|e| ModelError::CheckpointMismatch(e.to_string()))?
            }
            _ => ckpt.config_as()?,
        };
        let vocab =
            Vocabulary::from_tokens(ckpt.vocab.clone()).map_err(|e| ModelError::VocabularyMismatch(e.to_string()))?;
        let mut gen = Self::new(vocab, config, None)?;
        ckpt.fill_store(prefix, &mut gen.params)
            .map_err(|e| ModelError::CheckpointMismatch(e.to_string()))?;
        Ok(gen)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmLog {
    pub train_loss: Vec<f64>,
    /// Held-out perplexity; entry 0 is before training.
    pub perplexity: Vec<f64>,
}

/// Teacher-forced next-token training with Adam.
pub fn pretrain_lm<S: AsRef<str>>(
    gen: &mut LmGenerator,
    train: &[Vec<S>],
    heldout: &[Vec<S>],
) -> Result<LmLog, ModelError> {
    let seqs: Vec<Vec<usize>> = train
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| gen.vocab.encode(s))
        .collect();
    if seqs.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let cfg = gen.config.clone();
    if cfg.batch == 0 {
        return Err(ModelError::ConfigInvalid("batch must be positive".into()));
    }
    let heldout: Vec<&[S]> = heldout.iter().map(Vec::as_slice).collect();
    let held_ppl = |gen: &LmGenerator| -> Result<f64, ModelError> {
        if heldout.is_empty() {
            gen.perplexity(train)
        } else {
            let owned: Vec<Vec<&str>> = heldout.iter().map(|s| s.iter().map(AsRef::as_ref).collect()).collect();
            gen.perplexity(&owned)
        }
    };
    let mut log = LmLog {
        train_loss: Vec::new(),
        perplexity: vec![held_ppl(gen)?],
    };
    let mut rng = Rng::new(cfg.seed).fork(2);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &gen.params,
    );
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let mut g = Graph::new();
            let loss = gen.lm_loss(&mut g, &gen.params, &batch)?;
            total += finite_loss(g.value(loss).item())? * chunk.len() as f64;
            g.backward(loss, &mut [&mut gen.params])?;
            gen.params.clip_grads(cfg.clip);
            adam.step(&mut gen.params)?;
        }
        log.train_loss.push(total / seqs.len() as f64);
        log.perplexity.push(held_ppl(gen)?);
    }
    Ok(log)
}

/// Classes for fake sentences: uniform, or drawn from `prior`.
pub fn sample_classes(n: usize, prior: Option<&[f64; 4]>, rng: &mut Rng) -> Vec<VaguenessClass> {
    (0..n)
        .map(|_| {
            let i = match prior {
                Some(p) => rng.categorical(p),
                None => rng.below(4),
            };
            VaguenessClass::ALL[i]
        })
        .collect()
}

/// `softmax(scores / τ)` on plain values, for inspecting a step.
pub fn tempered(scores: &Tensor, tau: f64) -> Tensor {
    softmax_rows(scores, tau)
}
