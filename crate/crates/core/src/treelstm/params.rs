use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Input,
    Forget,
    Output,
    Update,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Update];

    fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Update => "update",
        }
    }
}

/// Nonlinearity of the candidate-cell (update) activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

/// Position of each tensor in [`TreeLstmParams::tensors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    /// Input-to-gate weights, hidden x input.
    InputWeights(Gate),
    /// Hidden-to-gate weights, hidden x hidden.
    HiddenWeights(Gate),
    Bias(Gate),
    HeadWeights,
    HeadBias,
    Embedding,
}

pub const CORE_PARAMS: usize = 14;

impl ParamId {
    pub fn index(self) -> usize {
        let gate = |g: Gate| Gate::ALL.iter().position(|&x| x == g).expect("gate") * 3;
        match self {
            ParamId::InputWeights(g) => gate(g),
            ParamId::HiddenWeights(g) => gate(g) + 1,
            ParamId::Bias(g) => gate(g) + 2,
            ParamId::HeadWeights => 12,
            ParamId::HeadBias => 13,
            ParamId::Embedding => 14,
        }
    }

    pub fn all(with_embedding: bool) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = Gate::ALL
            .iter()
            .flat_map(|&g| [ParamId::InputWeights(g), ParamId::HiddenWeights(g), ParamId::Bias(g)])
            .collect();
        ids.push(ParamId::HeadWeights);
        ids.push(ParamId::HeadBias);
        if with_embedding {
            ids.push(ParamId::Embedding);
        }
        ids
    }

    pub fn name(self) -> String {
        match self {
            ParamId::InputWeights(g) => format!("{}.input_weights", g.name()),
            ParamId::HiddenWeights(g) => format!("{}.hidden_weights", g.name()),
            ParamId::Bias(g) => format!("{}.bias", g.name()),
            ParamId::HeadWeights => "head.weights".into(),
            ParamId::HeadBias => "head.bias".into(),
            ParamId::Embedding => "embedding".into(),
        }
    }

    /// Weight matrices carry the L2 penalty; biases and embeddings do not.
    pub fn regularized(self) -> bool {
        matches!(
            self,
            ParamId::InputWeights(_) | ParamId::HiddenWeights(_) | ParamId::HeadWeights
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Full node input width, embedding segment included.
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Width of the trainable embedding segment (0 when absent).
    pub embedding: usize,
}

impl ModelDims {
    pub fn fixed_input(&self) -> usize {
        self.input - self.embedding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLstmParams {
    pub dims: ModelDims,
    pub update_activation: Activation,
    /// Ordered by [`ParamId::index`].
    pub tensors: Vec<Tensor>,
}

impl TreeLstmParams {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. The
    /// embedding table, when given, seeds the trainable embedding segment.
    pub fn init<R: Rng>(
        dims: ModelDims,
        update_activation: Activation,
        embedding: Option<Tensor>,
        rng: &mut R,
    ) -> Self {
        let (h, x, c) = (dims.hidden, dims.input, dims.classes);
        let mut tensors = Vec::with_capacity(CORE_PARAMS + 1);
        for _ in Gate::ALL {
            tensors.push(Tensor::uniform(h, x, 1.0 / (x as f64).sqrt(), rng));
            tensors.push(Tensor::uniform(h, h, 1.0 / (h as f64).sqrt(), rng));
            tensors.push(Tensor::zeros(h, 1));
        }
        tensors.push(Tensor::uniform(c, h, 1.0 / (h as f64).sqrt(), rng));
        tensors.push(Tensor::zeros(c, 1));
        if let Some(table) = embedding {
            assert_eq!(table.cols(), dims.embedding, "embedding width");
            tensors.push(table);
        }
        TreeLstmParams {
            dims,
            update_activation,
            tensors,
        }
    }

    pub fn zeros(dims: ModelDims, update_activation: Activation) -> Self {
        let (h, x, c) = (dims.hidden, dims.input, dims.classes);
        let mut tensors = Vec::new();
        for _ in Gate::ALL {
            tensors.push(Tensor::zeros(h, x));
            tensors.push(Tensor::zeros(h, h));
            tensors.push(Tensor::zeros(h, 1));
        }
        tensors.push(Tensor::zeros(c, h));
        tensors.push(Tensor::zeros(c, 1));
        TreeLstmParams {
            dims,
            update_activation,
            tensors,
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.index()]
    }

    pub fn has_embedding(&self) -> bool {
        self.tensors.len() > CORE_PARAMS
    }

    pub fn ids(&self) -> Vec<ParamId> {
        ParamId::all(self.has_embedding())
    }

    /// Sum of squares over the regularized weight matrices.
    pub fn l2_norm_sq(&self) -> f64 {
        self.ids()
            .into_iter()
            .filter(|id| id.regularized())
            .map(|id| self.get(id).sum_squares())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// All core (non-embedding) entries in index order.
    pub fn flatten_core(&self) -> Vec<f64> {
        self.tensors[..CORE_PARAMS].iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn with_core(&self, flat: &[f64]) -> Self {
        let mut out = self.clone();
        let mut off = 0;
        for t in &mut out.tensors[..CORE_PARAMS] {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const DIMS: ModelDims = ModelDims {
        input: 5,
        hidden: 4,
        classes: 3,
        embedding: 0,
    };

    #[test]
    fn ids_are_dense_and_named() {
        let ids = ParamId::all(true);
        assert_eq!(ids.iter().map(|i| i.index()).collect::<Vec<_>>(), (0..15).collect::<Vec<_>>());
        assert_eq!(ParamId::HiddenWeights(Gate::Forget).name(), "forget.hidden_weights");
        assert_eq!(ids.iter().filter(|i| i.regularized()).count(), 9);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = TreeLstmParams::init(DIMS, Activation::Tanh, None, &mut ChaCha8Rng::seed_from_u64(3));
        let b = TreeLstmParams::init(DIMS, Activation::Tanh, None, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.get(ParamId::InputWeights(Gate::Input)).data().iter().all(|v| v.abs() <= bound));
        assert!(a.get(ParamId::Bias(Gate::Output)).data().iter().all(|&v| v == 0.0));
        assert_eq!(a.get(ParamId::HeadWeights).shape(), (3, 4));
        let flat = a.flatten_core();
        assert_eq!(flat.len(), 4 * (20 + 16 + 4) + 12 + 3);
        assert_eq!(a.with_core(&flat), a);
    }
}
