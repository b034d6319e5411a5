//! Dense tensors and a reverse-mode tape sized for the Tree-LSTM.
//!
//! Every forward primitive records one node on a [`Tape`]; nodes are
//! appended in evaluation order, so the node list is already a topological
//! order and [`Tape::backward`] walks it in reverse exactly once.
//! Parameters are borrowed from the caller and never copied onto the tape;
//! their gradients are accumulated into a separate [`Gradients`] buffer.

mod gradcheck;

pub use gradcheck::{grad_check, Differentiable, GradCheckReport};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Shape = (usize, usize);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { shape: Shape, len: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for {op} (size {size})")]
    OutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
}

/// Row-major dense matrix; vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::BadLength {
                shape: (rows, cols),
                len: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Column vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::vector(vec![v])
    }

    /// Uniform(-bound, bound) entries.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor { rows, cols, data }
    }

    pub fn shape(&self) -> Shape {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self * v` for a matrix `self` and a vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, TensorError> {
        if v.len() != self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| dot(row, v))
            .collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    /// One row of a parameter matrix, as a column vector.
    Row { param: usize, row: usize },
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Sum(Vec<NodeId>),
    Concat(Vec<NodeId>),
    Softmax(NodeId),
    Scale(NodeId, f64),
    Mask(NodeId, Vec<f64>),
    Ln(NodeId),
    Pick(NodeId, usize),
    SumSquares(NodeId),
    /// `-ln softmax(z)[target]`; caches the probabilities.
    NllSoftmax {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    op: Op,
    /// `None` for parameters, whose value lives in the borrowed slice.
    value: Option<Tensor>,
}

/// Recorded forward computation over a borrowed parameter set.
pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

/// Gradient of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad {
    None,
    Dense(Tensor),
    /// Sparse rows, for embedding tables addressed through [`Tape::row`].
    Rows(BTreeMap<usize, Vec<f64>>),
}

impl ParamGrad {
    /// Dense view with zeros where no gradient flowed.
    pub fn to_dense(&self, shape: Shape) -> Tensor {
        match self {
            ParamGrad::None => Tensor::zeros(shape.0, shape.1),
            ParamGrad::Dense(t) => t.clone(),
            ParamGrad::Rows(rows) => {
                let mut t = Tensor::zeros(shape.0, shape.1);
                for (&r, g) in rows {
                    t.row_mut(r).iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                t
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGrad, scale: f64) {
        match (self, other) {
            (_, ParamGrad::None) => {}
            (this @ ParamGrad::None, o) => {
                *this = o.clone();
                this.scale(scale);
            }
            (ParamGrad::Dense(a), ParamGrad::Dense(b)) => {
                a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y)
            }
            (ParamGrad::Rows(a), ParamGrad::Rows(b)) => {
                for (r, g) in b {
                    let e = a.entry(*r).or_insert_with(|| vec![0.0; g.len()]);
                    e.iter_mut().zip(g).for_each(|(x, y)| *x += scale * y);
                }
            }
            (ParamGrad::Dense(a), ParamGrad::Rows(b)) => {
                for (r, g) in b {
                    a.row_mut(*r).iter_mut().zip(g).for_each(|(x, y)| *x += scale * y);
                }
            }
            (this @ ParamGrad::Rows(_), ParamGrad::Dense(b)) => {
                let mut d = this.to_dense(b.shape());
                d.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y);
                *this = ParamGrad::Dense(d);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            ParamGrad::None => {}
            ParamGrad::Dense(t) => t.data.iter_mut().for_each(|v| *v *= s),
            ParamGrad::Rows(rows) => rows.values_mut().flatten().for_each(|v| *v *= s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<ParamGrad>,
    node_grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros(n_params: usize) -> Self {
        Gradients {
            params: vec![ParamGrad::None; n_params],
            node_grads: Vec::new(),
        }
    }

    /// Gradient with respect to an intermediate node.
    pub fn node(&self, id: NodeId) -> Option<&[f64]> {
        self.node_grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_scaled(b, scale);
        }
    }
}

fn check_same(op: &'static str, a: Shape, b: Shape) -> Result<(), TensorError> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a,
            right: b,
        });
    }
    Ok(())
}

fn map_vec(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        rows: t.rows,
        cols: t.cols,
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(v)) => v,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.value(id).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        if let Some(id) = self.param_nodes[index] {
            return id;
        }
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes[index] = Some(id);
        id
    }

    pub fn row(&mut self, param: usize, row: usize) -> Result<NodeId, TensorError> {
        let p = &self.params[param];
        if row >= p.rows {
            return Err(TensorError::OutOfRange {
                op: "row",
                index: row,
                size: p.rows,
            });
        }
        let v = Tensor::vector(p.row(row).to_vec());
        Ok(self.push(Op::Row { param, row }, v))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (mt, vt) = (self.value(m), self.value(v));
        if vt.cols != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: mt.shape(),
                right: vt.shape(),
            });
        }
        let out = Tensor::vector(mt.matvec(&vt.data)?);
        Ok(self.push(Op::MatVec(m, v), out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (at, bt) = (self.value(a), self.value(b));
        check_same("add", at.shape(), bt.shape())?;
        let data = at.data.iter().zip(&bt.data).map(|(x, y)| x + y).collect();
        let out = Tensor {
            rows: at.rows,
            cols: at.cols,
            data,
        };
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (at, bt) = (self.value(a), self.value(b));
        check_same("hadamard", at.shape(), bt.shape())?;
        let data = at.data.iter().zip(&bt.data).map(|(x, y)| x * y).collect();
        let out = Tensor {
            rows: at.rows,
            cols: at.cols,
            data,
        };
        Ok(self.push(Op::Hadamard(a, b), out))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = map_vec(self.value(a), sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = map_vec(self.value(a), f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// Element-wise sum of one or more same-shaped nodes.
    pub fn sum(&mut self, items: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = *items.first().ok_or(TensorError::OutOfRange {
            op: "sum",
            index: 0,
            size: 0,
        })?;
        let mut acc = self.value(first).clone();
        for &id in &items[1..] {
            let t = self.value(id);
            check_same("sum", acc.shape(), t.shape())?;
            acc.data.iter_mut().zip(&t.data).for_each(|(x, y)| *x += y);
        }
        Ok(self.push(Op::Sum(items.to_vec()), acc))
    }

    /// Vertical concatenation of column vectors.
    pub fn concat(&mut self, items: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut data = Vec::new();
        for &id in items {
            let t = self.value(id);
            if t.cols != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: t.shape(),
                    right: (t.rows, 1),
                });
            }
            data.extend_from_slice(&t.data);
        }
        Ok(self.push(Op::Concat(items.to_vec()), Tensor::vector(data)))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let t = self.value(a);
        let p = Tensor {
            rows: t.rows,
            cols: t.cols,
            data: softmax(&t.data),
        };
        if !p.is_finite() {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        Ok(self.push(Op::Softmax(a), p))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = map_vec(self.value(a), |v| v * s);
        self.push(Op::Scale(a, s), out)
    }

    /// Multiplies by a constant mask (used for inverted dropout).
    pub fn mask(&mut self, a: NodeId, mask: Vec<f64>) -> Result<NodeId, TensorError> {
        let t = self.value(a);
        check_same("mask", t.shape(), (mask.len(), 1))?;
        let data = t.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor {
            rows: t.rows,
            cols: t.cols,
            data,
        };
        Ok(self.push(Op::Mask(a, mask), out))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let out = map_vec(self.value(a), f64::ln);
        if !out.is_finite() {
            return Err(TensorError::NonFinite { op: "ln" });
        }
        Ok(self.push(Op::Ln(a), out))
    }

    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId, TensorError> {
        let t = self.value(a);
        let v = *t.data.get(index).ok_or(TensorError::OutOfRange {
            op: "pick",
            index,
            size: t.len(),
        })?;
        Ok(self.push(Op::Pick(a, index), Tensor::scalar(v)))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_squares();
        self.push(Op::SumSquares(a), Tensor::scalar(v))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`.
    pub fn nll_softmax(&mut self, logits: NodeId, target: usize) -> Result<NodeId, TensorError> {
        let z = &self.value(logits).data;
        if target >= z.len() {
            return Err(TensorError::OutOfRange {
                op: "nll_softmax",
                index: target,
                size: z.len(),
            });
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[target];
        if !loss.is_finite() {
            return Err(TensorError::NonFinite { op: "nll_softmax" });
        }
        let probs = z.iter().map(|v| (v - lse).exp()).collect();
        Ok(self.push(
            Op::NllSoftmax {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
        ))
    }

    /// Reverse pass from a scalar node. Returns parameter gradients and
    /// the gradient of every non-parameter node that received one.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, TensorError> {
        check_same("backward", self.shape(root), (1, 1))?;
        let mut grads = Gradients {
            params: vec![ParamGrad::None; self.params.len()],
            node_grads: vec![None; self.nodes.len()],
        };
        grads.node_grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads.node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(_) => unreachable!("parameter gradients are routed directly"),
                Op::Row { param, row } => {
                    let pg = &mut grads.params[*param];
                    if matches!(pg, ParamGrad::None) {
                        *pg = ParamGrad::Rows(BTreeMap::new());
                    }
                    if let ParamGrad::Rows(rows) = pg {
                        let e = rows.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
                        e.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                }
                Op::MatVec(m, v) => {
                    let mt = self.value(*m);
                    let vt = self.value(*v);
                    let cols = mt.cols;
                    // dv = M^T g
                    if self.wants_grad(*v) {
                        let mut dv = vec![0.0; cols];
                        for (r, gr) in g.iter().enumerate() {
                            if *gr != 0.0 {
                                dv.iter_mut().zip(mt.row(r)).for_each(|(d, w)| *d += gr * w);
                            }
                        }
                        self.accumulate(&mut grads, *v, |buf| {
                            buf.iter_mut().zip(&dv).for_each(|(a, b)| *a += b)
                        });
                    }
                    // dM = g v^T
                    self.accumulate(&mut grads, *m, |buf| {
                        for (r, gr) in g.iter().enumerate() {
                            if *gr != 0.0 {
                                buf[r * cols..(r + 1) * cols]
                                    .iter_mut()
                                    .zip(&vt.data)
                                    .for_each(|(a, x)| *a += gr * x);
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |buf| add_into(buf, &g));
                    self.accumulate(&mut grads, *b, |buf| add_into(buf, &g));
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] * bv.data[i];
                        }
                    });
                    self.accumulate(&mut grads, *b, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] * av.data[i];
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &y.expect("value").data;
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] * y[i] * (1.0 - y[i]);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &y.expect("value").data;
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] * (1.0 - y[i] * y[i]);
                        }
                    });
                }
                Op::Sum(items) => {
                    for id in items {
                        self.accumulate(&mut grads, *id, |buf| add_into(buf, &g));
                    }
                }
                Op::Concat(items) => {
                    let mut offset = 0;
                    for id in items {
                        let n = self.value(*id).len();
                        let slice = &g[offset..offset + n];
                        self.accumulate(&mut grads, *id, |buf| add_into(buf, slice));
                        offset += n;
                    }
                }
                Op::Softmax(a) => {
                    let y = &y.expect("value").data;
                    let gy = dot(&g, y);
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += y[i] * (g[i] - gy);
                        }
                    });
                }
                Op::Scale(a, s) => {
                    self.accumulate(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).for_each(|(b, x)| *b += s * x)
                    });
                }
                Op::Mask(a, mask) => {
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] * mask[i];
                        }
                    });
                }
                Op::Ln(a) => {
                    let x = &self.value(*a).data;
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += g[i] / x[i];
                        }
                    });
                }
                Op::Pick(a, index) => {
                    self.accumulate(&mut grads, *a, |buf| buf[*index] += g[0]);
                }
                Op::SumSquares(a) => {
                    let x = &self.value(*a).data;
                    self.accumulate(&mut grads, *a, |buf| {
                        for i in 0..buf.len() {
                            buf[i] += 2.0 * x[i] * g[0];
                        }
                    });
                }
                Op::NllSoftmax {
                    logits,
                    target,
                    probs,
                } => {
                    self.accumulate(&mut grads, *logits, |buf| {
                        for i in 0..buf.len() {
                            let onehot = if i == *target { 1.0 } else { 0.0 };
                            buf[i] += g[0] * (probs[i] - onehot);
                        }
                    });
                }
            }
            grads.node_grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Constants never receive gradients.
    fn wants_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Constant)
    }

    fn accumulate(&self, grads: &mut Gradients, id: NodeId, f: impl FnOnce(&mut [f64])) {
        match &self.nodes[id.0].op {
            Op::Constant => {}
            Op::Param(i) => {
                let pg = &mut grads.params[*i];
                if !matches!(pg, ParamGrad::Dense(_)) {
                    let shape = self.params[*i].shape();
                    *pg = ParamGrad::Dense(pg.to_dense(shape));
                }
                if let ParamGrad::Dense(t) = pg {
                    f(&mut t.data);
                }
            }
            _ => {
                let n = self.value(id).len();
                let slot = grads.node_grads[id.0].get_or_insert_with(|| vec![0.0; n]);
                f(slot);
            }
        }
    }
}

fn add_into(buf: &mut [f64], g: &[f64]) {
    buf.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests;
