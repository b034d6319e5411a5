//! Knowledge-graph question answering by SPARQL template classification.
//!
//! A question arrives as a dependency parse, a child-sum Tree-LSTM ranks the
//! fifteen query templates, and the top templates are filled with linked
//! entities, predicates and classes until one instantiated query returns a
//! supported answer from a SPARQL endpoint.

pub mod classify;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod nlp;
pub mod querygen;
pub mod slots;
pub mod sparql;
pub mod tensor;
pub mod treelstm;
