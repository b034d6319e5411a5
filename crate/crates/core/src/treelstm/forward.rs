use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Activation, Gate, ParamId, TreeLstmParams};
use super::TreeLstmError;
use crate::features::EncodedQuestion;
use crate::nlp::DependencyTree;
use crate::tensor::{self, Differentiable, NodeId, Tape, Tensor, TensorError};

/// Memory cell, hidden state and the gate activations that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub update: Vec<f64>,
    /// Sum of the children's hidden states.
    pub child_sum: Vec<f64>,
    /// One forget gate per child, in child order.
    pub forget_gates: Vec<Vec<f64>>,
}

fn check_inputs(
    tree: &DependencyTree,
    n: usize,
    widths: impl Iterator<Item = usize>,
    want: usize,
) -> Result<(), TreeLstmError> {
    if n != tree.len() {
        return Err(TreeLstmError::DimensionMismatch {
            what: "node inputs",
            expected: tree.len(),
            found: n,
        });
    }
    for w in widths {
        if w != want {
            return Err(TreeLstmError::DimensionMismatch {
                what: "node input width",
                expected: want,
                found: w,
            });
        }
    }
    Ok(())
}

fn affine(w: &Tensor, x: &[f64], acc: &mut [f64]) {
    let cols = w.cols();
    for (r, a) in acc.iter_mut().enumerate() {
        *a += tensor::dot(&w.data()[r * cols..(r + 1) * cols], x);
    }
}

impl TreeLstmParams {
    fn gate_pre(&self, g: Gate, x: &[f64], h: Option<&[f64]>) -> Vec<f64> {
        let mut z = self.get(ParamId::Bias(g)).data().to_vec();
        affine(self.get(ParamId::InputWeights(g)), x, &mut z);
        if let Some(h) = h {
            affine(self.get(ParamId::HiddenWeights(g)), h, &mut z);
        }
        z
    }
}

/// Evaluates every node, children before parents, on full input vectors.
pub fn forward_states(
    params: &TreeLstmParams,
    tree: &DependencyTree,
    inputs: &[Vec<f64>],
) -> Result<Vec<NodeState>, TreeLstmError> {
    check_inputs(tree, inputs.len(), inputs.iter().map(Vec::len), params.dims.input)?;
    let hdim = params.dims.hidden;
    let mut states: Vec<Option<NodeState>> = vec![None; tree.len()];
    for j in tree.bottom_up_order() {
        let x = &inputs[j];
        let kids = tree.children(j);
        let mut child_sum = vec![0.0; hdim];
        for &k in kids {
            let hk = &states[k].as_ref().expect("child first").h;
            child_sum.iter_mut().zip(hk).for_each(|(a, b)| *a += b);
        }
        let hs = (!kids.is_empty()).then_some(child_sum.as_slice());
        let input_gate: Vec<f64> = params.gate_pre(Gate::Input, x, hs).into_iter().map(tensor::sigmoid).collect();
        let output_gate: Vec<f64> = params.gate_pre(Gate::Output, x, hs).into_iter().map(tensor::sigmoid).collect();
        let update: Vec<f64> = params
            .gate_pre(Gate::Update, x, hs)
            .into_iter()
            .map(|v| match params.update_activation {
                Activation::Tanh => v.tanh(),
                Activation::Sigmoid => tensor::sigmoid(v),
            })
            .collect();
        let mut c: Vec<f64> = input_gate.iter().zip(&update).map(|(i, u)| i * u).collect();
        let mut forget_gates = Vec::with_capacity(kids.len());
        if !kids.is_empty() {
            let fx = params.gate_pre(Gate::Forget, x, None);
            for &k in kids {
                let child = states[k].as_ref().expect("child first");
                let mut f = fx.clone();
                affine(params.get(ParamId::HiddenWeights(Gate::Forget)), &child.h, &mut f);
                f.iter_mut().for_each(|v| *v = tensor::sigmoid(*v));
                c.iter_mut().zip(f.iter().zip(&child.c)).for_each(|(a, (f, ck))| *a += f * ck);
                forget_gates.push(f);
            }
        }
        let h = output_gate.iter().zip(&c).map(|(o, c)| o * c.tanh()).collect();
        states[j] = Some(NodeState {
            c,
            h,
            input_gate,
            output_gate,
            update,
            child_sum,
            forget_gates,
        });
    }
    Ok(states.into_iter().map(|s| s.expect("every node visited")).collect())
}

/// Full input vectors from an encoded question, reading the embedding
/// segment from the model's own table.
pub fn materialize(params: &TreeLstmParams, enc: &EncodedQuestion) -> Vec<Vec<f64>> {
    let edim = params.dims.embedding;
    enc.embedding_rows
        .iter()
        .zip(&enc.fixed)
        .map(|(row, fixed)| {
            let mut x = Vec::with_capacity(edim + fixed.len());
            if edim > 0 {
                match (row, params.has_embedding()) {
                    (Some(r), true) => x.extend_from_slice(params.get(ParamId::Embedding).row(*r)),
                    _ => x.extend(std::iter::repeat_n(0.0, edim)),
                }
            }
            x.extend_from_slice(fixed);
            x
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Template ids in class-index order.
    pub ids: Vec<u32>,
    pub probs: Vec<f64>,
    /// Template ids by descending probability, ties by ascending id.
    pub ranked: Vec<u32>,
}

impl Prediction {
    pub fn from_logits(logits: &[f64], ids: &[u32]) -> Self {
        let probs = tensor::softmax(logits);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(ids[a].cmp(&ids[b])));
        Prediction {
            ids: ids.to_vec(),
            ranked: order.iter().map(|&i| ids[i]).collect(),
            probs,
        }
    }

    pub fn top(&self) -> u32 {
        self.ranked[0]
    }

    pub fn prob_of(&self, id: u32) -> Option<f64> {
        self.ids.iter().position(|&x| x == id).map(|i| self.probs[i])
    }
}

/// Softmax head over the root hidden state.
pub fn predict(root_h: &[f64], params: &TreeLstmParams, ids: &[u32]) -> Result<Prediction, TreeLstmError> {
    if root_h.len() != params.dims.hidden {
        return Err(TreeLstmError::DimensionMismatch {
            what: "root hidden state",
            expected: params.dims.hidden,
            found: root_h.len(),
        });
    }
    if ids.len() != params.dims.classes {
        return Err(TreeLstmError::DimensionMismatch {
            what: "template ids",
            expected: params.dims.classes,
            found: ids.len(),
        });
    }
    let mut logits = params.get(ParamId::HeadBias).data().to_vec();
    affine(params.get(ParamId::HeadWeights), root_h, &mut logits);
    Ok(Prediction::from_logits(&logits, ids))
}

/// `-ln p(gold) + lambda/2 * ||weights||^2`.
pub fn loss(pred: &Prediction, gold: u32, params: &TreeLstmParams, lambda: f64) -> Result<f64, TreeLstmError> {
    let p = pred.prob_of(gold).ok_or(TreeLstmError::UnknownTemplate(gold))?;
    Ok(-p.ln() + 0.5 * lambda * params.l2_norm_sq())
}

/// Inverted-dropout masks drawn from a caller-owned generator.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

impl<R: Rng> Dropout<'_, R> {
    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..n)
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect()
    }
}

pub struct TapeOutput {
    pub hidden: Vec<NodeId>,
    pub cells: Vec<NodeId>,
    pub root_h: NodeId,
    pub logits: NodeId,
}

/// Records the forward pass on a tape whose parameters are `params.tensors`.
pub fn forward_tape<R: Rng>(
    tape: &mut Tape,
    params: &TreeLstmParams,
    tree: &DependencyTree,
    enc: &EncodedQuestion,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<TapeOutput, TreeLstmError> {
    let dims = params.dims;
    check_inputs(tree, enc.fixed.len(), enc.fixed.iter().map(Vec::len), dims.fixed_input())?;
    if enc.embedding_rows.len() != tree.len() {
        return Err(TreeLstmError::DimensionMismatch {
            what: "embedding rows",
            expected: tree.len(),
            found: enc.embedding_rows.len(),
        });
    }
    let p = |tape: &mut Tape, id: ParamId| tape.param(id.index());
    let mut hidden: Vec<Option<NodeId>> = vec![None; tree.len()];
    let mut cells: Vec<Option<NodeId>> = vec![None; tree.len()];
    for j in tree.bottom_up_order() {
        let mut parts = Vec::with_capacity(2);
        if dims.embedding > 0 {
            parts.push(match (enc.embedding_rows[j], params.has_embedding()) {
                (Some(r), true) => tape.row(ParamId::Embedding.index(), r)?,
                _ => tape.constant(Tensor::zeros(dims.embedding, 1)),
            });
        }
        if dims.fixed_input() > 0 {
            parts.push(tape.constant(Tensor::vector(enc.fixed[j].clone())));
        }
        let mut x = if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? };
        if let Some(d) = dropout.as_mut() {
            x = tape.mask(x, d.mask(dims.input))?;
        }
        let kids = tree.children(j);
        let child_sum = if kids.is_empty() {
            None
        } else {
            let hs: Vec<NodeId> = kids.iter().map(|&k| hidden[k].expect("child first")).collect();
            Some(tape.sum(&hs)?)
        };
        let gate = |tape: &mut Tape, g: Gate| -> Result<NodeId, TensorError> {
            let (w, b) = (p(tape, ParamId::InputWeights(g)), p(tape, ParamId::Bias(g)));
            let wx = tape.matvec(w, x)?;
            let mut z = tape.add(wx, b)?;
            if let Some(hs) = child_sum {
                let u = p(tape, ParamId::HiddenWeights(g));
                let uh = tape.matvec(u, hs)?;
                z = tape.add(z, uh)?;
            }
            Ok(z)
        };
        let zi = gate(tape, Gate::Input)?;
        let zo = gate(tape, Gate::Output)?;
        let zu = gate(tape, Gate::Update)?;
        let i = tape.sigmoid(zi);
        let o = tape.sigmoid(zo);
        let u = match params.update_activation {
            Activation::Tanh => tape.tanh(zu),
            Activation::Sigmoid => tape.sigmoid(zu),
        };
        let mut c = tape.hadamard(i, u)?;
        if !kids.is_empty() {
            let (wf, bf, uf) = (
                p(tape, ParamId::InputWeights(Gate::Forget)),
                p(tape, ParamId::Bias(Gate::Forget)),
                p(tape, ParamId::HiddenWeights(Gate::Forget)),
            );
            let wx = tape.matvec(wf, x)?;
            let fx = tape.add(wx, bf)?;
            let mut terms = vec![c];
            for &k in kids {
                let uh = tape.matvec(uf, hidden[k].expect("child first"))?;
                let zf = tape.add(fx, uh)?;
                let f = tape.sigmoid(zf);
                terms.push(tape.hadamard(f, cells[k].expect("child first"))?);
            }
            c = tape.sum(&terms)?;
        }
        let tc = tape.tanh(c);
        hidden[j] = Some(tape.hadamard(o, tc)?);
        cells[j] = Some(c);
    }
    let mut root_h = hidden[tree.root()].expect("root visited");
    if let Some(d) = dropout.as_mut() {
        root_h = tape.mask(root_h, d.mask(dims.hidden))?;
    }
    let (ws, bs) = (p(tape, ParamId::HeadWeights), p(tape, ParamId::HeadBias));
    let wh = tape.matvec(ws, root_h)?;
    let logits = tape.add(wh, bs)?;
    Ok(TapeOutput {
        hidden: hidden.into_iter().map(|h| h.expect("visited")).collect(),
        cells: cells.into_iter().map(|c| c.expect("visited")).collect(),
        root_h,
        logits,
    })
}

/// Adds `lambda/2 * ||weights||^2` to `nll` on the tape.
pub fn add_l2_penalty(tape: &mut Tape, params: &TreeLstmParams, nll: NodeId, lambda: f64) -> Result<NodeId, TensorError> {
    if lambda == 0.0 {
        return Ok(nll);
    }
    let squares: Vec<NodeId> = params
        .ids()
        .into_iter()
        .filter(|id| id.regularized())
        .map(|id| {
            let w = tape.param(id.index());
            tape.sum_squares(w)
        })
        .collect();
    let total = tape.sum(&squares)?;
    let penalty = tape.scale(total, 0.5 * lambda);
    tape.add(nll, penalty)
}

/// The full regularized loss of one example as a function of the core
/// (non-embedding) parameters, for finite-difference checking.
pub struct ExampleObjective<'a> {
    pub params: &'a TreeLstmParams,
    pub tree: &'a DependencyTree,
    pub encoded: &'a EncodedQuestion,
    pub gold_index: usize,
    pub lambda: f64,
}

impl ExampleObjective<'_> {
    fn run(&self, flat: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>), TensorError> {
        let params = self.params.with_core(flat);
        let mut tape = Tape::new(&params.tensors);
        let out = forward_tape::<rand_chacha::ChaCha8Rng>(&mut tape, &params, self.tree, self.encoded, None)
            .map_err(|e| match e {
                TreeLstmError::Tensor(t) => t,
                _ => TensorError::ShapeMismatch {
                    op: "tree-lstm input",
                    left: (params.dims.input, 1),
                    right: (self.encoded.fixed.first().map_or(0, Vec::len), 1),
                },
            })?;
        let nll = tape.nll_softmax(out.logits, self.gold_index)?;
        let total = add_l2_penalty(&mut tape, &params, nll, self.lambda)?;
        let value = tape.value(total).data()[0];
        if !want_grad {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(total)?;
        let flat = grads.params[..super::params::CORE_PARAMS]
            .iter()
            .zip(&params.tensors)
            .flat_map(|(g, t)| g.to_dense(t.shape()).into_vec())
            .collect();
        Ok((value, flat))
    }
}

impl Differentiable for ExampleObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64, TensorError> {
        self.run(x, false).map(|r| r.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, TensorError> {
        self.run(x, true).map(|r| r.1)
    }
}
