//! Layers shared by the word, sentence and language models, plus the error
//! type their training loops report.

use crate::checkpoint::CheckpointError;
use crate::embeddings::PAD;
use crate::tensor::{xavier_init, Graph, NodeId, ParamId, ParamStore, Rng, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("empty input")]
    EmptyInput,
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Tensor(TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NumericalOverflow(what) => ModelError::DivergenceDetected(what),
            other => ModelError::Tensor(other),
        }
    }
}

/// Checks a loss value and turns a non-finite one into a divergence error.
pub fn finite_loss(value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::DivergenceDetected(format!("loss {value}")))
    }
}

/// Affine map `x·W + b` with `W: [input, output]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self, TensorError> {
        let w = store.add(&format!("{name}.w"), xavier_init(&[input, output], rng)?)?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[output]))?;
        Ok(Self { w, b, input, output })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId, TensorError> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// LSTM cell with fused gate weights `W: [input + hidden, 4·hidden]` in
/// input, forget, candidate, output order.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Hidden and cell state, each `[batch, hidden]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self, TensorError> {
        let w = store.add(&format!("{name}.w"), xavier_init(&[input + hidden, 4 * hidden], rng)?)?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[4 * hidden]))?;
        Ok(Self { w, b, input, hidden })
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        LstmState {
            h: g.input(Tensor::zeros(&[batch, self.hidden])),
            c: g.input(Tensor::zeros(&[batch, self.hidden])),
        }
    }

    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        state: LstmState,
    ) -> Result<LstmState, TensorError> {
        let h = self.hidden;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xh = g.concat(&[x, state.h], 1)?;
        let z = g.matmul(xh, w)?;
        let z = g.add_row(z, b)?;
        let zi = g.slice_cols(z, 0, h)?;
        let zf = g.slice_cols(z, h, 2 * h)?;
        let zg = g.slice_cols(z, 2 * h, 3 * h)?;
        let zo = g.slice_cols(z, 3 * h, 4 * h)?;
        let i = g.sigmoid(zi)?;
        let f = g.sigmoid(zf)?;
        let cand = g.tanh(zg)?;
        let o = g.sigmoid(zo)?;
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// Unrolls over `inputs` (each `[batch, input]`) from a zero state and
    /// returns every hidden state.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, inputs: &[NodeId]) -> Result<Vec<NodeId>, TensorError> {
        let Some(&first) = inputs.first() else {
            return Ok(Vec::new());
        };
        let batch = g.value(first).matrix_dims().0;
        let mut state = self.zero_state(g, batch);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(g, store, x, state)?;
            out.push(state.h);
        }
        Ok(out)
    }
}

/// Time-major id matrix for a batch of sequences, PAD past each end.
pub fn time_major(seqs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let t = seqs.iter().map(Vec::len).max().unwrap_or(0);
    (0..t)
        .map(|i| seqs.iter().map(|s| s.get(i).copied().unwrap_or(PAD)).collect())
        .collect()
}

/// Row-major index into a `[T·B, ·]` stack of time-major states.
pub fn stacked_row(t: usize, b: usize, batch: usize) -> usize {
    t * batch + b
}

/// Copies parameter values so they can be restored later.
pub fn snapshot(store: &ParamStore) -> Vec<Tensor> {
    store.ids().map(|id| store.value(id).clone()).collect()
}

pub fn restore(store: &mut ParamStore, values: &[Tensor]) {
    let ids: Vec<ParamId> = store.ids().collect();
    for (id, v) in ids.into_iter().zip(values) {
        *store.value_mut(id) = v.clone();
    }
}
