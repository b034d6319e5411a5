use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{forward_states, forward_tape, materialize, predict, Dropout, Prediction};
use super::params::{Activation, ModelDims, ParamId, TreeLstmParams, CORE_PARAMS};
use super::TreeLstmError;
use crate::features::EncodedQuestion;
use crate::nlp::DependencyTree;
use crate::tensor::{Gradients, ParamGrad, Tape, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// L2 coefficient on the weight matrices.
    pub weight_decay: f64,
    pub embed_lr: f64,
    pub dropout: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    pub update_activation: Activation,
    pub freeze_embeddings: bool,
    pub seed: u64,
    /// Worker threads for per-example gradients; results do not depend on it.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 7,
            batch_size: 25,
            lr: 1e-2,
            weight_decay: 2.25e-3,
            embed_lr: 1e-2,
            dropout: 0.2,
            lr_step: 2,
            lr_decay: 0.25,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: 150,
            update_activation: Activation::Tanh,
            freeze_embeddings: false,
            seed: 1,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TreeLstmError> {
        let bad = |m: &str| Err(TreeLstmError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.lr_step == 0 || self.hidden == 0 {
            return bad("epochs, batch_size, lr_step and hidden must be positive");
        }
        if !(self.lr > 0.0 && self.embed_lr >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rates must be positive and weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("lr_decay, betas or eps out of range");
        }
        Ok(())
    }

    /// Learning-rate multiplier for a 0-based epoch.
    pub fn decay_factor(&self, epoch: usize) -> f64 {
        self.lr_decay.powi((epoch / self.lr_step) as i32)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_factor(epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub qid: String,
    pub tree: DependencyTree,
    pub encoded: EncodedQuestion,
    /// Class index into the catalog order.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training NLL under dropout plus the L2 term at epoch end.
    pub train_loss: f64,
    pub heldout_accuracy: Option<f64>,
    pub heldout_top2: Option<f64>,
}

/// Seeded initial parameters for a training run.
pub fn init_params(dims: ModelDims, config: &TrainConfig, embedding: Option<Tensor>) -> TreeLstmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    TreeLstmParams::init(dims, config.update_activation, embedding, &mut rng)
}

pub fn predict_example(params: &TreeLstmParams, ex: &TrainingExample, ids: &[u32]) -> Result<Prediction, TreeLstmError> {
    let inputs = materialize(params, &ex.encoded);
    let states = forward_states(params, &ex.tree, &inputs)?;
    predict(&states[ex.tree.root()].h, params, ids)
}

/// Top-1 and top-2 accuracy.
pub fn evaluate(params: &TreeLstmParams, examples: &[TrainingExample], ids: &[u32]) -> Result<(f64, f64), TreeLstmError> {
    if examples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut hits = [0usize; 2];
    for ex in examples {
        let p = predict_example(params, ex, ids)?;
        let gold = ids[ex.label];
        hits[0] += (p.ranked[0] == gold) as usize;
        hits[1] += p.ranked[..2.min(p.ranked.len())].contains(&gold) as usize;
    }
    let n = examples.len() as f64;
    Ok((hits[0] as f64 / n, hits[1] as f64 / n))
}

/// Unregularized NLL and its gradient for one example.
pub fn example_gradient(
    params: &TreeLstmParams,
    ex: &TrainingExample,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<(f64, Gradients), TreeLstmError> {
    let mut tape = Tape::new(&params.tensors);
    let drop = dropout
        .filter(|(rate, _)| *rate > 0.0)
        .map(|(rate, rng)| Dropout { rate, rng });
    let out = forward_tape(&mut tape, params, &ex.tree, &ex.encoded, drop)?;
    let nll = tape.nll_softmax(out.logits, ex.label)?;
    let value = tape.value(nll).data()[0];
    let grads = tape.backward(nll)?;
    Ok((value, grads))
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    fn new(params: &TreeLstmParams) -> Self {
        let zeros: Vec<Tensor> = params.tensors[..CORE_PARAMS]
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut TreeLstmParams, grads: &[Tensor], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, g) in grads.iter().enumerate() {
            let p = params.tensors[k].data_mut();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g.data()[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g.data()[i] * g.data()[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

fn dropout_rng(seed: u64, epoch: usize, n: usize, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + (epoch * n + idx) as u64);
    rng
}

/// Mini-batch Adam on the regularized loss; the embedding table (if any)
/// takes sparse SGD steps at `embed_lr`.
pub fn train(
    mut params: TreeLstmParams,
    data: &[TrainingExample],
    heldout: Option<&[TrainingExample]>,
    ids: &[u32],
    config: &TrainConfig,
) -> Result<(TreeLstmParams, Vec<EpochLog>), TreeLstmError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TreeLstmError::EmptyDataset);
    }
    if ids.len() != params.dims.classes {
        return Err(TreeLstmError::DimensionMismatch {
            what: "template ids",
            expected: params.dims.classes,
            found: ids.len(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| TreeLstmError::InvalidConfig(e.to_string()))?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let n = data.len();
    let regularized: Vec<bool> = params.ids().iter().map(|id| id.regularized()).collect();
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let embed_lr = config.embed_lr * config.decay_factor(epoch);
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let run = |&idx: &usize| {
                let mut rng = dropout_rng(config.seed, epoch, n, idx);
                example_gradient(&params, &data[idx], Some((config.dropout, &mut rng)))
            };
            let results: Vec<Result<(f64, Gradients), TreeLstmError>> = if config.jobs <= 1 {
                batch.iter().map(run).collect()
            } else {
                pool.install(|| batch.par_iter().map(run).collect())
            };
            let scale = 1.0 / batch.len() as f64;
            let mut total = Gradients::zeros(params.tensors.len());
            for (r, &idx) in results.into_iter().zip(batch) {
                let (loss, g) = r.map_err(|e| match e {
                    TreeLstmError::Tensor(TensorError::NonFinite { op }) => TreeLstmError::NonFinite {
                        epoch: epoch + 1,
                        batch: b + 1,
                        detail: format!("{op} on example {}", data[idx].qid),
                    },
                    other => other,
                })?;
                if !loss.is_finite() {
                    return Err(TreeLstmError::NonFinite {
                        epoch: epoch + 1,
                        batch: b + 1,
                        detail: format!("loss {loss} on example {}", data[idx].qid),
                    });
                }
                loss_sum += loss;
                total.add_scaled(&g, scale);
            }
            let dense: Vec<Tensor> = (0..CORE_PARAMS)
                .map(|k| {
                    let t = &params.tensors[k];
                    let mut g = total.params[k].to_dense(t.shape());
                    if regularized[k] && config.weight_decay > 0.0 {
                        g.data_mut()
                            .iter_mut()
                            .zip(t.data())
                            .for_each(|(gi, w)| *gi += config.weight_decay * w);
                    }
                    g
                })
                .collect();
            adam.step(&mut params, &dense, lr, config);
            if params.has_embedding() && !config.freeze_embeddings {
                if let ParamGrad::Rows(rows) = &total.params[ParamId::Embedding.index()] {
                    let table = params.get_mut(ParamId::Embedding);
                    for (&r, g) in rows {
                        table.row_mut(r).iter_mut().zip(g).for_each(|(w, gi)| *w -= embed_lr * gi);
                    }
                }
            }
            if !params.is_finite() {
                return Err(TreeLstmError::NonFinite {
                    epoch: epoch + 1,
                    batch: b + 1,
                    detail: "parameters became non-finite after the update".into(),
                });
            }
        }
        let train_loss = loss_sum / n as f64 + 0.5 * config.weight_decay * params.l2_norm_sq();
        let (acc, top2) = match heldout {
            Some(h) if !h.is_empty() => {
                let (a, t) = evaluate(&params, h, ids)?;
                (Some(a), Some(t))
            }
            _ => (None, None),
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            lr,
            train_loss,
            heldout_accuracy: acc,
            heldout_top2: top2,
        };
        log::info!(
            "epoch {} lr {:.4e} train loss {:.5}{}",
            entry.epoch,
            lr,
            train_loss,
            acc.map(|a| format!(" held-out acc {a:.4}")).unwrap_or_default()
        );
        logs.push(entry);
    }
    Ok((params, logs))
}
