use std::time::Duration;

use super::conllu::{parse_conllu, ConlluBlockError};
use super::ParsedQuestion;

#[derive(Debug, thiserror::Error)]
pub enum ParseServerError {
    #[error("parse server request failed: {0}")]
    Http(String),
    #[error("parse server returned no sentence")]
    Empty,
    #[error(transparent)]
    Block(#[from] ConlluBlockError),
}

/// Client for a service that accepts plain text and answers with CoNLL-U.
#[derive(Debug, Clone)]
pub struct ParseServerClient {
    url: String,
    agent: ureq::Agent,
}

impl ParseServerClient {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        ParseServerClient {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn parse(&self, qid: Option<&str>, text: &str) -> Result<ParsedQuestion, ParseServerError> {
        let body = self
            .agent
            .post(&self.url)
            .set("Content-Type", "text/plain; charset=utf-8")
            .send_string(text)
            .map_err(|e| ParseServerError::Http(e.to_string()))?
            .into_string()
            .map_err(|e| ParseServerError::Http(e.to_string()))?;
        let mut q = parse_conllu(&body).into_iter().next().ok_or(ParseServerError::Empty)??;
        if let Some(id) = qid {
            q.qid = Some(id.to_string());
        }
        q.text = text.to_string();
        Ok(q)
    }
}
