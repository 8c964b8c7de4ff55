//! Embedding providers, cosine similarity, and top-k snippet selection.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Question, Snippet};
use crate::error::{Error, Result};

/// Dimension of vectors produced by the deterministic mock embedder.
pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Default number of best-matching snippets provided to a model.
pub const DEFAULT_SNIPPET_K: usize = 10;

/// A fixed-length embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("embedding vector must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding vector contains a non-finite entry".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Whether a text is embedded as a query or as a stored document; selects
/// which configured prefix is prepended before embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedRole {
    Query,
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingProviderKind {
    Http,
    DeterministicMock,
}

/// Configuration of an embedding backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub kind: EmbeddingProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub query_prefix: String,
    #[serde(default)]
    pub document_prefix: String,
    #[serde(default = "default_embed_retries")]
    pub max_retries: u32,
}

fn default_embed_retries() -> u32 {
    2
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        EmbeddingProviderSpec {
            kind: EmbeddingProviderKind::DeterministicMock,
            endpoint: None,
            model_name: None,
            query_prefix: String::new(),
            document_prefix: String::new(),
            max_retries: default_embed_retries(),
        }
    }
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == EmbeddingProviderKind::Http && self.endpoint.is_none() {
            return Err(Error::Config("http embedding provider requires an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<EmbeddingClient> {
        self.validate()?;
        let backend: Box<dyn EmbedBackend> = match self.kind {
            EmbeddingProviderKind::DeterministicMock => Box::new(MockBackend),
            EmbeddingProviderKind::Http => Box::new(HttpBackend::new(
                self.endpoint.clone().expect("validated above"),
                self.model_name.clone(),
                self.max_retries,
            )?),
        };
        Ok(EmbeddingClient {
            spec: self.clone(),
            backend,
        })
    }
}

/// A ready-to-use embedding provider; applies role prefixes and enforces
/// the batch contract (one vector per text, uniform dimension).
pub struct EmbeddingClient {
    spec: EmbeddingProviderSpec,
    backend: Box<dyn EmbedBackend>,
}

impl EmbeddingClient {
    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    /// Expected vector dimension, when known up front (mock only).
    pub fn known_dim(&self) -> Option<usize> {
        match self.spec.kind {
            EmbeddingProviderKind::DeterministicMock => Some(MOCK_EMBEDDING_DIM),
            EmbeddingProviderKind::Http => None,
        }
    }

    pub fn embed(&self, texts: &[&str], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Validation("embed requires at least one text".into()));
        }
        if texts.iter().any(|t| t.is_empty()) {
            return Err(Error::Validation("embed requires non-empty texts".into()));
        }
        let prefix = match role {
            EmbedRole::Query => &self.spec.query_prefix,
            EmbedRole::Document => &self.spec.document_prefix,
        };
        let prefixed: Vec<String> = texts.iter().map(|t| format!("{prefix}{t}")).collect();
        let vectors = self.backend.embed_raw(&prefixed)?;
        if vectors.len() != texts.len() {
            return Err(Error::provider(
                format!("embedding backend returned {} vectors for {} texts", vectors.len(), texts.len()),
                false,
            ));
        }
        let dim = vectors[0].dim();
        if vectors.iter().any(|v| v.dim() != dim) {
            return Err(Error::provider("embedding batch has mixed dimensions", false));
        }
        Ok(vectors)
    }
}

trait EmbedBackend: Send + Sync {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Reproducible embedding derived only from the text bytes: a SHA-256 seed
/// expanded through splitmix64 into `MOCK_EMBEDDING_DIM` entries in [-1, 1].
struct MockBackend;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub(crate) fn mock_embedding(text: &str) -> EmbeddingVector {
    let digest = Sha256::digest(text.as_bytes());
    let mut state = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    let values: Vec<f64> = (0..MOCK_EMBEDDING_DIM)
        .map(|_| {
            let bits = splitmix64(&mut state);
            (bits as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect();
    EmbeddingVector::new(values).expect("mock values are finite")
}

impl EmbedBackend for MockBackend {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| mock_embedding(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

struct HttpBackend {
    endpoint: String,
    model_name: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    fn new(endpoint: String, model_name: Option<String>, max_retries: u32) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| Error::provider(format!("failed to build http client: {e}"), false))?;
        Ok(HttpBackend {
            endpoint,
            model_name,
            max_retries,
            client,
        })
    }
}

impl EmbedBackend for HttpBackend {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = EmbeddingRequest {
            model: self.model_name.as_deref(),
            input: texts,
        };
        let response: EmbeddingResponse = crate::gateway::with_retries(self.max_retries, || {
            let resp = self
                .client
                .post(&self.endpoint)
                .json(&body)
                .send()
                .map_err(|e| Error::provider(format!("embeddings request failed: {e}"), true))?;
            crate::gateway::json_from_response(resp)
        })?;
        response
            .data
            .into_iter()
            .map(|d| {
                EmbeddingVector::new(d.embedding)
                    .map_err(|e| Error::provider(format!("embeddings contract violation: {e}"), false))
            })
            .collect()
    }
}

/// Cosine similarity in double precision. Zero-norm vectors score 0 so that
/// degenerate inputs never abort a batch.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Validation(format!(
            "cosine requires equal dimensions, got {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Selects the `k` snippets most similar to the question, ordered from most
/// to least similar; ties resolve to the lower original snippet index.
pub fn select_top_snippets(
    question: &Question,
    k: usize,
    client: &EmbeddingClient,
) -> Result<Vec<Snippet>> {
    if k == 0 || question.snippets.is_empty() {
        return Ok(Vec::new());
    }
    let question_vec = client
        .embed(&[question.body.as_str()], EmbedRole::Query)?
        .remove(0);
    let texts: Vec<&str> = question.snippets.iter().map(|s| s.text.as_str()).collect();
    let snippet_vecs = client.embed(&texts, EmbedRole::Document)?;
    let mut scored: Vec<(usize, f64)> = snippet_vecs
        .iter()
        .enumerate()
        .map(|(idx, v)| cosine(&question_vec, v).map(|sim| (idx, sim)))
        .collect::<Result<_>>()?;
    scored.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then(ia.cmp(ib)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(idx, _)| question.snippets[idx].clone())
        .collect())
}
