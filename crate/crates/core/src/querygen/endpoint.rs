use std::sync::Mutex;
use std::time::Duration;

use crate::sparql::QueryResults;

#[derive(Debug, Clone, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint rejected the query (HTTP {status}): {detail}")]
    Rejected { status: u16, detail: String },
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: usize, last: String },
    #[error("cannot evaluate query: {0}")]
    Unsupported(String),
}

/// Something that answers SPARQL queries with standard results.
pub trait Endpoint: Send + Sync {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError>;
}

impl<E: Endpoint + ?Sized> Endpoint for &E {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        (**self).query(sparql)
    }
}

impl<E: Endpoint + ?Sized> Endpoint for Box<E> {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        (**self).query(sparql)
    }
}

/// SPARQL protocol over HTTP GET.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    url: String,
    agent: ureq::Agent,
    retries: usize,
    backoff: Duration,
}

impl HttpEndpoint {
    /// 10 s timeout, 2 retries, 250 ms initial backoff.
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_policy(url, Duration::from_secs(10), 2, Duration::from_millis(250))
    }

    pub fn with_policy(url: impl Into<String>, timeout: Duration, retries: usize, backoff: Duration) -> Self {
        HttpEndpoint {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            retries,
            backoff,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, sparql: &str) -> Result<QueryResults, (bool, EndpointError)> {
        let retry = |detail: String| (true, EndpointError::Unreachable { attempts: 1, last: detail });
        let resp = self
            .agent
            .get(&self.url)
            .query("query", sparql)
            .set("Accept", "application/sparql-results+json")
            .call();
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) if (400..500).contains(&status) => {
                let detail = r.into_string().unwrap_or_default();
                return Err((false, EndpointError::Rejected { status, detail }));
            }
            Err(e) => return Err(retry(e.to_string())),
        };
        let body = resp.into_string().map_err(|e| retry(e.to_string()))?;
        let json: serde_json::Value = serde_json::from_str(&body).map_err(|e| retry(format!("bad JSON: {e}")))?;
        QueryResults::from_json(&json).map_err(|e| retry(format!("bad results: {e}")))
    }
}

impl Endpoint for HttpEndpoint {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)));
            }
            match self.attempt(sparql) {
                Ok(r) => return Ok(r),
                Err((false, e)) => return Err(e),
                Err((true, e)) => {
                    log::warn!("query attempt {} failed: {e}", attempt + 1);
                    last = match e {
                        EndpointError::Unreachable { last, .. } => last,
                        other => other.to_string(),
                    };
                }
            }
        }
        Err(EndpointError::Unreachable {
            attempts: self.retries + 1,
            last,
        })
    }
}

/// Passes queries through and remembers them in order.
#[derive(Debug, Default)]
pub struct RecordingEndpoint<E> {
    inner: E,
    log: Mutex<Vec<String>>,
}

impl<E> RecordingEndpoint<E> {
    pub fn new(inner: E) -> Self {
        RecordingEndpoint {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn queries(&self) -> Vec<String> {
        self.log.lock().expect("query log").clone()
    }

    pub fn clear(&self) {
        self.log.lock().expect("query log").clear();
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Endpoint> Endpoint for RecordingEndpoint<E> {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        self.log.lock().expect("query log").push(sparql.to_string());
        self.inner.query(sparql)
    }
}
