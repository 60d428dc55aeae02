//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order, so the backward sweep simply walks the tape
//! in reverse. Parameters enter through [`Graph::param`] and remember which
//! [`ParamStore`] they came from; [`Graph::backward`] adds their gradients to
//! whichever of the supplied stores owns them and ignores the rest.

use std::collections::HashMap;

use super::array::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{ParamId, ParamStore, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Elementwise derivative rule for [`Graph::map`]: `df(input, output)`.
pub type ElementwiseGrad = fn(f64, f64) -> f64;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Relu(NodeId),
    Softmax(NodeId, f64),
    LogSoftmax(NodeId),
    MaxRows {
        x: NodeId,
        arg: Vec<usize>,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    Conv1d {
        x: NodeId,
        w: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
        axis: usize,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    Pick {
        x: NodeId,
        idx: Vec<usize>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    Bce {
        x: NodeId,
        targets: Vec<f64>,
        weights: Vec<f64>,
        pos_weight: f64,
    },
    Map {
        x: NodeId,
        df: ElementwiseGrad,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<(u64, ParamId)>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    param_nodes: HashMap<(u64, ParamId), NodeId>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NumericalOverflow(format!("{op:?}")));
        }
        self.nodes.push(Node { value, op, param: None });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant input; receives a gradient but belongs to no store.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Parameter leaf. Repeated calls for the same parameter return the same
    /// node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let key = (store.uid(), id);
        if let Some(&n) = self.param_nodes.get(&key) {
            return n;
        }
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: Op::Leaf,
            param: Some(key),
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(key, n);
        n
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient from the most recent [`Graph::backward`]; leaves accumulate
    /// across calls.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        self.value(id).matrix_dims()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 || self.value(b).shape().len() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "{what} {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the row `b` (any shape with `cols` elements) to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (n, m) = self.dims(x);
        if self.value(b).len() != m {
            return Err(TensorError::ShapeMismatch(format!(
                "add_row {:?} + {:?}",
                self.value(x).shape(),
                self.value(b).shape()
            )));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for i in 0..n {
            for (o, bv) in out.data_mut()[i * m..(i + 1) * m].iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(|a| a * s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.scale(x, -1.0)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(f64::ln);
        self.push(v, Op::Log(x))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Custom elementwise op with a caller-supplied derivative rule.
    pub fn map(&mut self, x: NodeId, f: fn(f64) -> f64, df: ElementwiseGrad) -> Result<NodeId, TensorError> {
        let v = self.value(x).map(f);
        self.push(v, Op::Map { x, df })
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.softmax_t(x, 1.0)
    }

    /// Row-wise `softmax(x / tau)`, max-shifted.
    pub fn softmax_t(&mut self, x: NodeId, tau: f64) -> Result<NodeId, TensorError> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(TensorError::NonPositiveTemperature(tau));
        }
        let v = softmax_rows(self.value(x), tau);
        self.push(v, Op::Softmax(x, tau))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let (n, m) = xv.matrix_dims();
        let mut out = xv.clone();
        for i in 0..n {
            let row = &mut out.data_mut()[i * m..(i + 1) * m];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(out, Op::LogSoftmax(x))
    }

    /// Column-wise max over the first `limit` rows; output `[1, cols]`.
    pub fn max_rows(&mut self, x: NodeId, limit: usize) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let (n, m) = xv.matrix_dims();
        if limit == 0 || limit > n {
            return Err(TensorError::ShapeMismatch(format!(
                "max_rows limit {limit} over {n} rows"
            )));
        }
        let mut arg = vec![0usize; m];
        let mut out = xv.row_slice(0).to_vec();
        for i in 1..limit {
            for (j, &v) in xv.row_slice(i).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    arg[j] = i;
                }
            }
        }
        self.push(Tensor::new(vec![1, m], out)?, Op::MaxRows { x, arg })
    }

    /// Rows of `table` selected by `ids`; output `[ids.len(), cols]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        let tv = self.value(table);
        let (n, m) = tv.matrix_dims();
        if ids.is_empty() {
            return Err(TensorError::ShapeMismatch("gather with no ids".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            if id >= n {
                return Err(TensorError::IndexOutOfRange { index: id, len: n });
            }
            out.extend_from_slice(tv.row_slice(id));
        }
        self.push(
            Tensor::new(vec![ids.len(), m], out)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Valid-padding 1-D convolution along the row (token) axis.
    ///
    /// `x` is `[T, d]`; `w` is `[k·d, F]` whose row `j·d + c` weights channel
    /// `c` at window offset `j`. Output `[T-k+1, F]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId, TensorError> {
        let (t, d) = self.dims(x);
        let (kd, f) = self.dims(w);
        if kd % d != 0 || kd / d > t {
            return Err(TensorError::ShapeMismatch(format!(
                "conv1d input {:?} with filter {:?}",
                self.value(x).shape(),
                self.value(w).shape()
            )));
        }
        let k = kd / d;
        let windows = t - k + 1;
        let mut out = vec![0.0; windows * f];
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        for s in 0..windows {
            matmul_acc(&xd[s * d..s * d + kd], wd, &mut out[s * f..(s + 1) * f], 1, kd, f);
        }
        self.push(Tensor::new(vec![windows, f], out)?, Op::Conv1d { x, w })
    }

    /// Concatenation along `axis` 0 (rows) or 1 (columns); rank-1 inputs are
    /// single rows.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        if parts.is_empty() || axis > 1 {
            return Err(TensorError::ShapeMismatch("concat needs parts, axis 0|1".into()));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect();
        let value = if axis == 0 {
            let m = dims[0].1;
            if dims.iter().any(|d| d.1 != m) {
                return Err(TensorError::ShapeMismatch(format!("concat rows {dims:?}")));
            }
            let data: Vec<f64> = parts
                .iter()
                .flat_map(|&p| self.value(p).data().iter().copied())
                .collect();
            let n = dims.iter().map(|d| d.0).sum();
            Tensor::new(vec![n, m], data)?
        } else {
            let n = dims[0].0;
            if dims.iter().any(|d| d.0 != n) {
                return Err(TensorError::ShapeMismatch(format!("concat cols {dims:?}")));
            }
            let m: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(n * m);
            for i in 0..n {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(i));
                }
            }
            Tensor::new(vec![n, m], data)?
        };
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let (n, m) = self.dims(x);
        if start >= end || end > m {
            return Err(TensorError::ShapeMismatch(format!("slice_cols {start}..{end} of {m}")));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&xv.row_slice(i)[start..end]);
        }
        self.push(Tensor::new(vec![n, end - start], data)?, Op::SliceCols { x, start })
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let (n, m) = self.dims(x);
        if start >= end || end > n {
            return Err(TensorError::ShapeMismatch(format!("slice_rows {start}..{end} of {n}")));
        }
        let data = self.value(x).data()[start * m..end * m].to_vec();
        self.push(Tensor::new(vec![end - start, m], data)?, Op::SliceRows { x, start })
    }

    pub fn row(&mut self, x: NodeId, i: usize) -> Result<NodeId, TensorError> {
        self.slice_rows(x, i, i + 1)
    }

    /// `out[i] = x[i, idx[i]]`; output rank-1 of length `rows`.
    pub fn pick(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let (n, m) = self.dims(x);
        if idx.len() != n {
            return Err(TensorError::ShapeMismatch(format!(
                "pick {} indices for {n} rows",
                idx.len()
            )));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(n);
        for (i, &j) in idx.iter().enumerate() {
            if j >= m {
                return Err(TensorError::IndexOutOfRange { index: j, len: m });
            }
            data.push(xv.get(i, j));
        }
        self.push(Tensor::new(vec![n], data)?, Op::Pick { x, idx: idx.to_vec() })
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let v = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(v, Op::Mean(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        let v = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push(v, Op::Reshape(x))
    }

    /// Mean cross-entropy of row-wise softmax(`logits`) against `targets`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, TensorError> {
        let lp = self.log_softmax(logits)?;
        let picked = self.pick(lp, targets)?;
        let m = self.mean(picked)?;
        self.neg(m)
    }

    /// Weighted binary cross-entropy on logits, summed over elements:
    /// `Σ wᵢ·(pw·yᵢ·softplus(-xᵢ) + (1-yᵢ)·softplus(xᵢ))`.
    pub fn bce_with_logits(
        &mut self,
        x: NodeId,
        targets: &[f64],
        weights: &[f64],
        pos_weight: f64,
    ) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        if targets.len() != xv.len() || weights.len() != xv.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "bce over {} logits with {} targets / {} weights",
                xv.len(),
                targets.len(),
                weights.len()
            )));
        }
        let total: f64 = xv
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (pos_weight * y * softplus(-x) + (1.0 - y) * softplus(x)))
            .sum();
        self.push(
            Tensor::scalar(total),
            Op::Bce {
                x,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                pos_weight,
            },
        )
    }

    /// Reverse sweep from scalar `loss`. Parameter gradients are added to the
    /// owning store among `stores`; others are dropped.
    pub fn backward(&mut self, loss: NodeId, stores: &mut [&mut ParamStore]) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        self.grads.resize_with(self.nodes.len(), || None);
        for (i, fresh) in grads.into_iter().enumerate() {
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf) {
                self.grads[i] = fresh;
                continue;
            }
            let Some(fresh) = fresh else { continue };
            if let Some((uid, pid)) = node.param {
                if let Some(store) = stores.iter_mut().find(|s| s.uid() == uid) {
                    store.grad_mut(pid).add_assign(&fresh);
                }
            }
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&fresh),
                slot => *slot = Some(fresh),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        macro_rules! with_grad {
            ($p:expr, |$t:ident| $body:expr) => {{
                let shape = self.nodes[$p.0].value.shape();
                let $t: &mut Tensor = grads[$p.0].get_or_insert_with(|| Tensor::zeros(shape));
                $body
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.dims(*a);
                let m = self.dims(*b).1;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                with_grad!(*a, |t| matmul_bt_acc(g.data(), bv, t.data_mut(), n, k, m));
                with_grad!(*b, |t| matmul_at_acc(av, g.data(), t.data_mut(), n, k, m));
            }
            Op::Add(a, b) => {
                with_grad!(*a, |t| t.add_assign(g));
                with_grad!(*b, |t| t.add_assign(g));
            }
            Op::Sub(a, b) => {
                with_grad!(*a, |t| t.add_assign(g));
                with_grad!(*b, |t| {
                    for (o, &v) in t.data_mut().iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                });
            }
            Op::AddRow(x, b) => {
                with_grad!(*x, |t| t.add_assign(g));
                let (n, m) = g.matrix_dims();
                with_grad!(*b, |t| {
                    let td = t.data_mut();
                    for r in 0..n {
                        for (o, &v) in td.iter_mut().zip(&g.data()[r * m..(r + 1) * m]) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                with_grad!(*a, |t| {
                    for ((o, &gv), &y) in t.data_mut().iter_mut().zip(g.data()).zip(bv) {
                        *o += gv * y;
                    }
                });
                with_grad!(*b, |t| {
                    for ((o, &gv), &x) in t.data_mut().iter_mut().zip(g.data()).zip(av) {
                        *o += gv * x;
                    }
                });
            }
            Op::Scale(x, s) => with_grad!(*x, |t| {
                for (o, &gv) in t.data_mut().iter_mut().zip(g.data()) {
                    *o += gv * s;
                }
            }),
            Op::Sigmoid(x) => with_grad!(*x, |t| {
                for ((o, &gv), &y) in t.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *o += gv * y * (1.0 - y);
                }
            }),
            Op::Tanh(x) => with_grad!(*x, |t| {
                for ((o, &gv), &y) in t.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *o += gv * (1.0 - y * y);
                }
            }),
            Op::Exp(x) => with_grad!(*x, |t| {
                for ((o, &gv), &y) in t.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *o += gv * y;
                }
            }),
            Op::Log(x) => {
                let xv = self.value(*x).data();
                with_grad!(*x, |t| {
                    for ((o, &gv), &a) in t.data_mut().iter_mut().zip(g.data()).zip(xv) {
                        *o += gv / a;
                    }
                })
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                with_grad!(*x, |t| {
                    for ((o, &gv), &a) in t.data_mut().iter_mut().zip(g.data()).zip(xv) {
                        if a > 0.0 {
                            *o += gv;
                        }
                    }
                })
            }
            Op::Map { x, df } => {
                let xv = self.value(*x).data();
                with_grad!(*x, |t| {
                    for (((o, &gv), &a), &y) in t.data_mut().iter_mut().zip(g.data()).zip(xv).zip(out.data()) {
                        *o += gv * df(a, y);
                    }
                })
            }
            Op::Softmax(x, tau) => {
                let (n, m) = out.matrix_dims();
                with_grad!(*x, |t| {
                    for r in 0..n {
                        let y = &out.data()[r * m..(r + 1) * m];
                        let gr = &g.data()[r * m..(r + 1) * m];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in t.data_mut()[r * m..(r + 1) * m].iter_mut().zip(y).zip(gr) {
                            *o += yv * (gv - dot) / tau;
                        }
                    }
                })
            }
            Op::LogSoftmax(x) => {
                let (n, m) = out.matrix_dims();
                with_grad!(*x, |t| {
                    for r in 0..n {
                        let lp = &out.data()[r * m..(r + 1) * m];
                        let gr = &g.data()[r * m..(r + 1) * m];
                        let gs: f64 = gr.iter().sum();
                        for ((o, &l), &gv) in t.data_mut()[r * m..(r + 1) * m].iter_mut().zip(lp).zip(gr) {
                            *o += gv - l.exp() * gs;
                        }
                    }
                })
            }
            Op::MaxRows { x, arg } => {
                let m = arg.len();
                with_grad!(*x, |t| {
                    for (j, &r) in arg.iter().enumerate() {
                        t.data_mut()[r * m + j] += g.data()[j];
                    }
                })
            }
            Op::Gather { table, ids } => {
                let m = self.dims(*table).1;
                with_grad!(*table, |t| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &gv) in t.data_mut()[id * m..(id + 1) * m]
                            .iter_mut()
                            .zip(&g.data()[r * m..(r + 1) * m])
                        {
                            *o += gv;
                        }
                    }
                })
            }
            Op::Conv1d { x, w } => {
                let d = self.dims(*x).1;
                let (kd, f) = self.dims(*w);
                let windows = out.matrix_dims().0;
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                with_grad!(*w, |t| {
                    for s in 0..windows {
                        matmul_at_acc(
                            &xv[s * d..s * d + kd],
                            &g.data()[s * f..(s + 1) * f],
                            t.data_mut(),
                            1,
                            kd,
                            f,
                        );
                    }
                });
                with_grad!(*x, |t| {
                    for s in 0..windows {
                        matmul_bt_acc(
                            &g.data()[s * f..(s + 1) * f],
                            wv,
                            &mut t.data_mut()[s * d..s * d + kd],
                            1,
                            kd,
                            f,
                        );
                    }
                });
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        with_grad!(p, |t| {
                            for (o, &gv) in t.data_mut().iter_mut().zip(&g.data()[off..off + len]) {
                                *o += gv;
                            }
                        });
                        off += len;
                    }
                } else {
                    let (n, m) = out.matrix_dims();
                    let mut col = 0;
                    for &p in parts {
                        let pm = self.dims(p).1;
                        with_grad!(p, |t| {
                            for r in 0..n {
                                for c in 0..pm {
                                    t.data_mut()[r * pm + c] += g.data()[r * m + col + c];
                                }
                            }
                        });
                        col += pm;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let m = self.dims(*x).1;
                let (n, w) = out.matrix_dims();
                with_grad!(*x, |t| {
                    for r in 0..n {
                        for c in 0..w {
                            t.data_mut()[r * m + start + c] += g.data()[r * w + c];
                        }
                    }
                })
            }
            Op::SliceRows { x, start } => {
                let m = self.dims(*x).1;
                with_grad!(*x, |t| {
                    for (o, &gv) in t.data_mut()[start * m..].iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                })
            }
            Op::Pick { x, idx } => {
                let m = self.dims(*x).1;
                with_grad!(*x, |t| {
                    for (r, &j) in idx.iter().enumerate() {
                        t.data_mut()[r * m + j] += g.data()[r];
                    }
                })
            }
            Op::Sum(x) => {
                let gv = g.item();
                with_grad!(*x, |t| t.data_mut().iter_mut().for_each(|o| *o += gv))
            }
            Op::Mean(x) => {
                let gv = g.item() / self.value(*x).len() as f64;
                with_grad!(*x, |t| t.data_mut().iter_mut().for_each(|o| *o += gv))
            }
            Op::Reshape(x) => with_grad!(*x, |t| {
                for (o, &gv) in t.data_mut().iter_mut().zip(g.data()) {
                    *o += gv;
                }
            }),
            Op::Bce {
                x,
                targets,
                weights,
                pos_weight,
            } => {
                let gv = g.item();
                let xv = self.value(*x).data();
                with_grad!(*x, |t| {
                    for (((o, &a), &y), &w) in t.data_mut().iter_mut().zip(xv).zip(targets).zip(weights) {
                        let s = sigmoid(a);
                        *o += gv * w * (pos_weight * y * (s - 1.0) + (1.0 - y) * s);
                    }
                })
            }
        }
    }
}

/// Max-shifted row-wise `softmax(x / tau)` on a plain tensor.
pub fn softmax_rows(x: &Tensor, tau: f64) -> Tensor {
    let (n, m) = x.matrix_dims();
    let mut out = x.clone();
    for i in 0..n {
        let row = &mut out.data_mut()[i * m..(i + 1) * m];
        for v in row.iter_mut() {
            *v /= tau;
        }
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}
