//! Child-sum Tree-LSTM template classifier.

mod bundle;
mod fit;
mod forward;
mod params;
mod train;

pub use bundle::{BundleError, ModelBundle, BUNDLE_FORMAT_VERSION, MAGIC};
pub use fit::{fit_bundle, random_gradient_checks, FitError, GradCheckSpec, Labeled};
pub use forward::{
    add_l2_penalty, forward_states, forward_tape, loss, materialize, predict, Dropout, ExampleObjective,
    NodeState, Prediction, TapeOutput,
};
pub use params::{Activation, Gate, ModelDims, ParamId, TreeLstmParams, CORE_PARAMS};
pub use train::{evaluate, example_gradient, init_params, predict_example, train, EpochLog, TrainConfig, TrainingExample};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TreeLstmError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("template {0} is not one of the model's classes")]
    UnknownTemplate(u32),
    #[error("non-finite value in epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
}
