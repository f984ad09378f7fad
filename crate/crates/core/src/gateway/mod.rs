//! Client side of the model-inference protocol and the deterministic stub
//! provider.
//!
//! [`Gateway`] is the only entry point the pipeline uses. It validates
//! inputs, splits work into `batch_size` chunks, runs at most
//! `max_in_flight` chunks concurrently and checks every response against
//! the configured ensemble before handing it on.

pub mod http;
pub mod lexicon;
pub mod protocol;
pub mod server;
pub mod stub;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{concat_embeddings, Embedding};

pub use protocol::{
    AnnotateRequest, AnnotateResponse, EmbedRequest, EmbedResponse, HealthResponse, NliPair, NliRequest,
    NliResponse,
};

/// Tolerance of the probability-simplex check on NLI triples.
pub const SIMPLEX_TOLERANCE: f64 = 1e-4;

/// Default ensemble: model id and output dimension, in concatenation order.
pub const DEFAULT_ENSEMBLE: [(&str, usize); 4] = [
    ("paraphrase-multilingual-MiniLM-L12-v2", 384),
    ("stsb-xlm-r-multilingual", 768),
    ("paraphrase-xlm-r-multilingual-v1", 768),
    ("paraphrase-multilingual-mpnet-base-v2", 768),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("provider unreachable after {attempts} attempt(s): {last_error}")]
    ProviderUnreachable { attempts: u32, last_error: String },
    #[error("dimension mismatch for model {model}: expected {expected}, got {actual}")]
    DimensionMismatch { model: String, expected: usize, actual: usize },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
}

pub type Result<T> = std::result::Result<T, GatewayError>;

/// Where inference requests go: the in-process stub or an HTTP base URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Endpoint {
    Stub,
    Url(String),
}

impl FromStr for Endpoint {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "stub" {
            Ok(Endpoint::Stub)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Endpoint::Url(s.trim_end_matches('/').to_string()))
        } else {
            Err(GatewayError::InvalidConfig(format!("endpoint must be \"stub\" or an http(s) URL, got {s:?}")))
        }
    }
}

impl TryFrom<String> for Endpoint {
    type Error = GatewayError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> String {
        e.to_string()
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stub => f.write_str("stub"),
            Endpoint::Url(u) => f.write_str(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_base_ms: 100 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_in_flight() -> usize {
    4
}

fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: Endpoint,
    pub ensemble_model_ids: Vec<String>,
    pub expected_dims: BTreeMap<String, usize>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Texts or pairs per provider request.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self::stub(&DEFAULT_ENSEMBLE)
    }
}

impl ProviderConfig {
    /// Stub endpoint with the given `(model_id, dim)` ensemble.
    pub fn stub(models: &[(&str, usize)]) -> Self {
        Self {
            endpoint: Endpoint::Stub,
            ensemble_model_ids: models.iter().map(|(m, _)| m.to_string()).collect(),
            expected_dims: models.iter().map(|(m, d)| (m.to_string(), *d)).collect(),
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
            batch_size: default_batch_size(),
        }
    }

    pub fn with_endpoint(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Per-model dimensions in ensemble order.
    pub fn dims(&self) -> Vec<usize> {
        self.ensemble_model_ids.iter().map(|m| self.expected_dims.get(m).copied().unwrap_or(0)).collect()
    }

    /// Dimension of the concatenated ensemble embedding.
    pub fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GatewayError::InvalidConfig(m));
        if self.ensemble_model_ids.is_empty() {
            return bad("ensemble_model_ids is empty".into());
        }
        let mut seen = BTreeSet::new();
        for m in &self.ensemble_model_ids {
            if m.trim().is_empty() {
                return bad("model id is empty".into());
            }
            if !seen.insert(m) {
                return bad(format!("model id {m:?} listed twice"));
            }
            match self.expected_dims.get(m) {
                None => return bad(format!("expected_dims has no entry for {m:?}")),
                Some(0) => return bad(format!("expected dim of {m:?} must be positive")),
                Some(_) => {}
            }
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be positive".into());
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive".into());
        }
        Ok(())
    }
}

/// Entailment, contradiction and neutral probabilities for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub contradiction: f64,
    pub neutral: f64,
}

impl NliScores {
    pub fn new(entailment: f64, contradiction: f64, neutral: f64) -> Result<Self> {
        let s = Self { entailment, contradiction, neutral };
        s.check()?;
        Ok(s)
    }

    /// Each entry in `[0, 1]` and the sum within [`SIMPLEX_TOLERANCE`] of 1.
    pub fn check(&self) -> Result<()> {
        let vals = [self.entailment, self.contradiction, self.neutral];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(GatewayError::MalformedResponse(format!("NLI scores out of [0, 1]: {vals:?}")));
        }
        let sum: f64 = vals.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(GatewayError::MalformedResponse(format!("NLI scores sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Propn,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityTag {
    Per,
    Org,
    Loc,
    Misc,
}

impl FromStr for EntityTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "PER" => Ok(EntityTag::Per),
            "ORG" => Ok(EntityTag::Org),
            "LOC" => Ok(EntityTag::Loc),
            "MISC" => Ok(EntityTag::Misc),
            other => Err(format!("unknown entity tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub token: String,
    pub is_stopword: bool,
    pub pos: Pos,
    pub entity: Option<EntityTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// BCP-47 primary tag, or `"und"` when the language is unsupported.
    pub language: String,
    pub tokens: Vec<TokenAnnotation>,
}

/// One provider implementation of protocol v1.
pub trait Backend: Send + Sync {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse>;
    fn nli(&self, req: &NliRequest) -> Result<NliResponse>;
    fn annotate(&self, req: &AnnotateRequest) -> Result<AnnotateResponse>;
    fn health(&self) -> Result<HealthResponse>;
}

/// Counting semaphore that also records the highest concurrency seen.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self { limit, state: Mutex::new((0, 0)), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock();
        while st.0 >= self.limit {
            self.freed.wait(&mut st);
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        Permit(self)
    }

    fn peak(&self) -> usize {
        self.state.lock().1
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().0 -= 1;
        self.0.freed.notify_one();
    }
}

/// Validated, concurrency-bounded access to one provider.
#[derive(Clone)]
pub struct Gateway {
    config: Arc<ProviderConfig>,
    backend: Arc<dyn Backend>,
    in_flight: Arc<InFlight>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Gateway {
    /// Builds the backend named by `config.endpoint`.
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match &config.endpoint {
            Endpoint::Stub => Arc::new(stub::StubBackend::new(config.expected_dims.clone())),
            Endpoint::Url(url) => Arc::new(http::HttpBackend::new(url, &config)?),
        };
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: ProviderConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        config.validate()?;
        let in_flight = Arc::new(InFlight::new(config.max_in_flight));
        Ok(Self { config: Arc::new(config), backend, in_flight })
    }

    /// Stub gateway over the default ensemble.
    pub fn stub() -> Self {
        Self::new(ProviderConfig::default()).expect("default config is valid")
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Highest number of concurrent provider requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.in_flight.peak()
    }

    /// One embedding per ensemble model for each text, in ensemble order.
    pub fn embed_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Vec<Embedding>>> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidInput("texts is empty".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.as_ref().trim().is_empty()) {
            return Err(GatewayError::InvalidInput(format!("text {i} is empty")));
        }
        self.chunked(texts, |chunk| {
            let req = EmbedRequest {
                model_ids: self.config.ensemble_model_ids.clone(),
                texts: chunk.iter().map(|t| t.as_ref().to_string()).collect(),
                expected_dims: Some(self.config.expected_dims.clone()),
            };
            let resp = self.backend.embed(&req)?;
            self.check_embed(chunk.len(), resp)
        })
    }

    /// Concatenated ensemble embedding for each text.
    pub fn embed_ensemble<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Embedding>> {
        self.embed_batch(texts)?
            .iter()
            .map(|parts| concat_embeddings(parts).map_err(|e| GatewayError::MalformedResponse(e.to_string())))
            .collect()
    }

    pub fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliScores>> {
        if pairs.is_empty() {
            return Err(GatewayError::InvalidInput("pairs is empty".into()));
        }
        self.chunked(pairs, |chunk| {
            let resp = self.backend.nli(&NliRequest { pairs: chunk.to_vec() })?;
            if resp.scores.len() != chunk.len() {
                return Err(GatewayError::MalformedResponse(format!(
                    "{} NLI scores for {} pairs",
                    resp.scores.len(),
                    chunk.len()
                )));
            }
            for s in &resp.scores {
                s.check()?;
            }
            Ok(resp.scores)
        })
    }

    pub fn annotate(&self, text: &str) -> Result<Annotation> {
        Ok(self.annotate_batch(&[text])?.remove(0))
    }

    pub fn annotate_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Annotation>> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidInput("texts is empty".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.as_ref().trim().is_empty()) {
            return Err(GatewayError::InvalidInput(format!("text {i} is empty")));
        }
        self.chunked(texts, |chunk| {
            let req = AnnotateRequest { texts: chunk.iter().map(|t| t.as_ref().to_string()).collect() };
            let resp = self.backend.annotate(&req)?;
            if resp.results.len() != chunk.len() {
                return Err(GatewayError::MalformedResponse(format!(
                    "{} annotations for {} texts",
                    resp.results.len(),
                    chunk.len()
                )));
            }
            Ok(resp.results)
        })
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let _permit = self.in_flight.acquire();
        self.backend.health()
    }

    fn check_embed(&self, n_texts: usize, resp: EmbedResponse) -> Result<Vec<Vec<Embedding>>> {
        let models = &self.config.ensemble_model_ids;
        for m in models {
            let expected = self.config.expected_dims[m];
            match resp.dims.get(m) {
                None => return Err(GatewayError::MalformedResponse(format!("dims does not echo model {m:?}"))),
                Some(&actual) if actual != expected => {
                    return Err(GatewayError::DimensionMismatch { model: m.clone(), expected, actual })
                }
                Some(_) => {}
            }
        }
        if resp.embeddings.len() != n_texts {
            return Err(GatewayError::MalformedResponse(format!(
                "{} embeddings for {} texts",
                resp.embeddings.len(),
                n_texts
            )));
        }
        resp.embeddings
            .into_iter()
            .map(|per_model| {
                if per_model.len() != models.len() {
                    return Err(GatewayError::MalformedResponse(format!(
                        "{} vectors for {} models",
                        per_model.len(),
                        models.len()
                    )));
                }
                per_model
                    .into_iter()
                    .zip(models)
                    .map(|(v, m)| {
                        let expected = self.config.expected_dims[m];
                        if v.len() != expected {
                            return Err(GatewayError::DimensionMismatch {
                                model: m.clone(),
                                expected,
                                actual: v.len(),
                            });
                        }
                        Embedding::new(v).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
                    })
                    .collect()
            })
            .collect()
    }

    /// Runs `call` over `batch_size` chunks with at most `max_in_flight`
    /// outstanding, concatenating results in input order.
    fn chunked<T, R, F>(&self, items: &[T], call: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> Result<Vec<R>> + Sync,
    {
        let chunks: Vec<&[T]> = items.chunks(self.config.batch_size).collect();
        if chunks.len() == 1 {
            let _permit = self.in_flight.acquire();
            return call(chunks[0]);
        }
        let slots: Vec<Mutex<Option<Result<Vec<R>>>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let workers = chunks.len().min(self.config.max_in_flight);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() || failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let out = {
                        let _permit = self.in_flight.acquire();
                        call(chunks[i])
                    };
                    if out.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    *slots[i].lock() = Some(out);
                });
            }
        });
        let mut merged = Vec::with_capacity(items.len());
        for slot in slots {
            match slot.into_inner() {
                Some(Ok(part)) => merged.extend(part),
                Some(Err(e)) => return Err(e),
                None => {}
            }
        }
        Ok(merged)
    }
}
