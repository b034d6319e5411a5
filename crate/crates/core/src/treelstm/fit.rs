use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    init_params, train, Activation, BundleError, EpochLog, ExampleObjective, ModelBundle, ModelDims, TrainConfig,
    TrainingExample, TreeLstmError, TreeLstmParams,
};
use crate::features::{build_vocab, EmbeddingStore, FeatureError, FeatureVariant, Featurizer};
use crate::nlp::{build_tree, ParsedQuestion, Token};
use crate::tensor::{grad_check, GradCheckReport, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] TreeLstmError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("variant {0} needs word embeddings")]
    MissingEmbeddings(FeatureVariant),
    #[error("question {qid}: template {template} is not in the catalog")]
    UnknownTemplate { qid: String, template: u32 },
}

/// A parse with its gold template id.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub parse: ParsedQuestion,
    pub template: u32,
}

fn examples(
    items: &[Labeled],
    featurizer: &Featurizer,
    store: Option<&EmbeddingStore>,
    ids: &[u32],
) -> Result<Vec<TrainingExample>, FitError> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let qid = item.parse.qid.clone().unwrap_or_else(|| format!("#{i}"));
            let label = ids
                .iter()
                .position(|&id| id == item.template)
                .ok_or_else(|| FitError::UnknownTemplate {
                    qid: qid.clone(),
                    template: item.template,
                })?;
            Ok(TrainingExample {
                qid,
                tree: item.parse.tree.clone(),
                encoded: featurizer.encode(&item.parse, store)?,
                label,
            })
        })
        .collect()
}

/// Builds vocabularies from the training parses, trains a model and
/// packages it. The embedding store, if the variant uses one, becomes the
/// initial trainable table.
pub fn fit_bundle(
    train_set: &[Labeled],
    heldout: Option<&[Labeled]>,
    variant: FeatureVariant,
    embeddings: Option<EmbeddingStore>,
    ids: &[u32],
    config: &TrainConfig,
) -> Result<(ModelBundle, Vec<EpochLog>), FitError> {
    let parses: Vec<ParsedQuestion> = train_set.iter().map(|l| l.parse.clone()).collect();
    let vocab = build_vocab(&parses)?;
    let store = if variant.uses_embedding() {
        Some(embeddings.ok_or(FitError::MissingEmbeddings(variant))?)
    } else {
        None
    };
    let featurizer = Featurizer::new(variant, vocab, store.as_ref().map_or(0, EmbeddingStore::dim));
    let train_ex = examples(train_set, &featurizer, store.as_ref(), ids)?;
    let held_ex = heldout
        .map(|h| examples(h, &featurizer, store.as_ref(), ids))
        .transpose()?;
    let dims = ModelDims {
        input: featurizer.dimension(),
        hidden: config.hidden,
        classes: ids.len(),
        embedding: featurizer.embedding_dim,
    };
    let (words, table) = match store {
        Some(s) => (s.words().to_vec(), Some(s.into_table())),
        None => (Vec::new(), None),
    };
    let params = init_params(dims, config, table);
    let (params, log) = train(params, &train_ex, held_ex.as_deref(), ids, config)?;
    let bundle = ModelBundle::new(featurizer, ids.to_vec(), params, words, Some(config.clone()))?;
    Ok((bundle, log))
}

/// Random tree with `n` nodes; every node hangs off an earlier one.
fn random_tree<R: Rng>(n: usize, rng: &mut R) -> crate::nlp::DependencyTree {
    let tokens = (1..=n)
        .map(|i| {
            let head = if i == 1 { 0 } else { rng.gen_range(1..i) };
            Token::new(i, "w", "NN", if head == 0 { "root" } else { "dep" }, head)
        })
        .collect();
    build_tree(tokens).expect("heads point backwards")
}

/// Shape of the random instances used by [`random_gradient_checks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSpec {
    pub instances: usize,
    pub max_nodes: usize,
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub lambda: f64,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            instances: 20,
            max_nodes: 6,
            input: 5,
            hidden: 4,
            classes: 3,
            lambda: 0.01,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 7,
        }
    }
}

/// Finite-difference checks of the regularized loss on seeded random
/// trees, inputs, parameters and gold classes.
pub fn random_gradient_checks(spec: &GradCheckSpec) -> Result<Vec<GradCheckReport>, TreeLstmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = ModelDims {
        input: spec.input,
        hidden: spec.hidden,
        classes: spec.classes,
        embedding: 0,
    };
    (0..spec.instances)
        .map(|i| {
            let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Sigmoid };
            let mut params = TreeLstmParams::init(dims, activation, None, &mut rng);
            for t in &mut params.tensors {
                if t.cols() == 1 {
                    *t = Tensor::uniform(t.rows(), 1, 0.5, &mut rng);
                }
            }
            let n = rng.gen_range(1..=spec.max_nodes.max(1));
            let tree = random_tree(n, &mut rng);
            let encoded = crate::features::EncodedQuestion {
                embedding_rows: vec![None; n],
                fixed: (0..n)
                    .map(|_| (0..spec.input).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
            };
            let objective = ExampleObjective {
                params: &params,
                tree: &tree,
                encoded: &encoded,
                gold_index: rng.gen_range(0..spec.classes),
                lambda: spec.lambda,
            };
            Ok(grad_check(&objective, &params.flatten_core(), spec.step, spec.tolerance)?)
        })
        .collect()
}
