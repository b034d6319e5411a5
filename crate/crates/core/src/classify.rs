//! Ranked template hypotheses and answer types for parsed questions.

use serde::{Deserialize, Serialize};

use crate::dataset::{QuestionType, TemplateCatalog};
use crate::nlp::ParsedQuestion;
use crate::treelstm::{ModelBundle, TreeLstmError};

/// Default number of hypotheses handed to slot filling.
pub const DEFAULT_TOP_K: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateHypothesis {
    pub template: u32,
    pub prob: f64,
    /// 1-based.
    #[serde(skip)]
    pub rank: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("unknown template id {0}")]
    UnknownTemplate(u32),
    #[error(transparent)]
    Model(#[from] TreeLstmError),
}

/// Every catalog template, most probable first.
pub fn classify(q: &ParsedQuestion, bundle: &ModelBundle) -> Result<Vec<TemplateHypothesis>, ClassifyError> {
    let pred = bundle.classify(q)?;
    Ok(pred
        .ranked
        .iter()
        .enumerate()
        .map(|(i, &id)| TemplateHypothesis {
            template: id,
            prob: pred.prob_of(id).expect("ranked ids come from the prediction"),
            rank: i + 1,
        })
        .collect())
}

pub fn answer_type(id: u32, catalog: &TemplateCatalog) -> Result<QuestionType, ClassifyError> {
    catalog.question_type(id).ok_or(ClassifyError::UnknownTemplate(id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub qid: Option<String>,
    pub hypotheses: Vec<TemplateHypothesis>,
}

impl Classification {
    /// Keeps the `k` best hypotheses.
    pub fn new(qid: Option<String>, mut hypotheses: Vec<TemplateHypothesis>, k: usize) -> Self {
        hypotheses.truncate(k);
        Classification { qid, hypotheses }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("classification serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocab, FeatureVariant, Featurizer};
    use crate::nlp::Token;
    use crate::treelstm::{Activation, ModelDims, ParamId, TreeLstmParams};

    fn question() -> ParsedQuestion {
        let tokens = vec![
            Token::new(1, "Is", "VBZ", "cop", 2),
            Token::new(2, "Geneva", "NNP", "root", 0),
        ];
        ParsedQuestion::new(Some("q1".into()), None, tokens).unwrap()
    }

    fn bundle(head_bias: &[f64]) -> ModelBundle {
        let q = question();
        let vocab = build_vocab(std::slice::from_ref(&q)).unwrap();
        let f = Featurizer::new(FeatureVariant::Pos, vocab, 0);
        let dims = ModelDims {
            input: f.dimension(),
            hidden: 2,
            classes: head_bias.len(),
            embedding: 0,
        };
        let mut p = TreeLstmParams::zeros(dims, Activation::Tanh);
        p.get_mut(ParamId::HeadBias).data_mut().copy_from_slice(head_bias);
        let ids = TemplateCatalog::builtin().ids();
        ModelBundle::new(f, ids[..head_bias.len()].to_vec(), p, Vec::new(), None).unwrap()
    }

    #[test]
    fn hypotheses_are_ranked_by_probability() {
        let catalog = TemplateCatalog::builtin();
        let mut bias = vec![0.0; 15];
        let boolean = catalog.index_of(151).unwrap();
        bias[boolean] = 3.0;
        let hyps = classify(&question(), &bundle(&bias)).unwrap();
        assert_eq!(hyps.len(), 15);
        assert_eq!(hyps[0].template, 151);
        assert_eq!(hyps[0].rank, 1);
        assert!(hyps[0].prob >= 1.0 / 15.0);
        for w in hyps.windows(2) {
            assert!(w[0].prob >= w[1].prob);
            assert_eq!(w[1].rank, w[0].rank + 1);
        }
        assert!((hyps.iter().map(|h| h.prob).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_still_gives_top_prob_at_least_uniform() {
        let hyps = classify(&question(), &bundle(&[0.0; 15])).unwrap();
        assert!((hyps[0].prob - 1.0 / 15.0).abs() < 1e-12);
        let top2 = Classification::new(None, hyps.clone(), 2);
        assert!(top2.hypotheses.iter().any(|h| h.template == hyps[0].template));
    }

    #[test]
    fn answer_types_follow_the_catalog() {
        let c = TemplateCatalog::builtin();
        assert_eq!(answer_type(151, &c).unwrap(), QuestionType::Boolean);
        assert_eq!(answer_type(105, &c).unwrap(), QuestionType::Count);
        assert_eq!(answer_type(2, &c).unwrap(), QuestionType::Entity);
        assert!(matches!(answer_type(999, &c), Err(ClassifyError::UnknownTemplate(999))));
    }

    #[test]
    fn json_shape() {
        let c = Classification::new(
            Some("q7".into()),
            vec![
                TemplateHypothesis { template: 2, prob: 0.61, rank: 1 },
                TemplateHypothesis { template: 1, prob: 0.2, rank: 2 },
            ],
            1,
        );
        assert_eq!(
            c.to_json(),
            serde_json::json!({"qid": "q7", "hypotheses": [{"template": 2, "prob": 0.61}]})
        );
    }
}
