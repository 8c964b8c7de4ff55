//! Selects the best candidate summary per question by a question-summary
//! relevance score (a cross-encoder service, or an offline lexical mock).

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::canonical_form;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    HttpCrossencoder,
    LexicalOverlapMock,
}

/// Configuration of the question-summary relevance scorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_scorer_retries")]
    pub max_retries: u32,
}

fn default_scorer_retries() -> u32 {
    2
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            kind: ScorerKind::LexicalOverlapMock,
            endpoint: None,
            max_retries: default_scorer_retries(),
        }
    }
}

impl ScorerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ScorerKind::HttpCrossencoder && self.endpoint.is_none() {
            return Err(Error::Config("http-crossencoder scorer requires an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn SummaryScorer>> {
        self.validate()?;
        match self.kind {
            ScorerKind::LexicalOverlapMock => Ok(Box::new(LexicalOverlapScorer)),
            ScorerKind::HttpCrossencoder => Ok(Box::new(HttpCrossEncoder::new(
                self.endpoint.clone().expect("validated above"),
                self.max_retries,
            )?)),
        }
    }
}

pub trait SummaryScorer: Send + Sync {
    /// Scores (question, summary) pairs; returns one finite score per pair,
    /// in input order.
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;
}

/// Relevance of one summary to one question.
pub fn score(question_text: &str, summary: &str, scorer: &dyn SummaryScorer) -> Result<f64> {
    if question_text.is_empty() || summary.is_empty() {
        return Err(Error::Validation("score requires non-empty question and summary".into()));
    }
    Ok(scorer.score_pairs(&[(question_text, summary)])?[0])
}

/// Token-set F1 between canonical forms; deterministic, dependency-free,
/// keeps the selection pipeline testable offline.
pub struct LexicalOverlapScorer;

fn token_set(text: &str) -> BTreeSet<String> {
    canonical_form(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

impl SummaryScorer for LexicalOverlapScorer {
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|(question, summary)| {
                let q = token_set(question);
                let s = token_set(summary);
                if q.is_empty() || s.is_empty() {
                    return 0.0;
                }
                let overlap = q.intersection(&s).count() as f64;
                let precision = overlap / s.len() as f64;
                let recall = overlap / q.len() as f64;
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect())
    }
}

struct HttpCrossEncoder {
    endpoint: String,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl HttpCrossEncoder {
    fn new(endpoint: String, max_retries: u32) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::provider(format!("failed to build http client: {e}"), false))?;
        Ok(HttpCrossEncoder {
            endpoint,
            max_retries,
            client,
        })
    }
}

impl SummaryScorer for HttpCrossEncoder {
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        let body = json!({ "pairs": pairs });
        let response: ScoreResponse = crate::gateway::with_retries(self.max_retries, || {
            let resp = self
                .client
                .post(&self.endpoint)
                .json(&body)
                .send()
                .map_err(|e| Error::provider(format!("scorer request failed: {e}"), true))?;
            crate::gateway::json_from_response(resp)
        })?;
        if response.scores.len() != pairs.len() {
            return Err(Error::provider(
                format!("scorer returned {} scores for {} pairs", response.scores.len(), pairs.len()),
                false,
            ));
        }
        if response.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::provider("scorer returned a non-finite score", false));
        }
        Ok(response.scores)
    }
}

/// Picks the candidate with the highest relevance score; exact ties resolve
/// to the highest-priority model. The returned summary is the unmodified
/// candidate text.
pub fn select_best(
    question_text: &str,
    candidates: &[(String, String)],
    scorer: &dyn SummaryScorer,
    priority: &[String],
) -> Result<(String, String)> {
    if candidates.is_empty() {
        return Err(Error::Validation("select_best requires at least one candidate".into()));
    }
    let mut ordered: Vec<(usize, &(String, String))> = candidates
        .iter()
        .map(|candidate| {
            priority
                .iter()
                .position(|m| *m == candidate.0)
                .map(|p| (p, candidate))
                .ok_or_else(|| {
                    Error::Config(format!("model {} is not listed in model_priority", candidate.0))
                })
        })
        .collect::<Result<_>>()?;
    ordered.sort_by_key(|(p, _)| *p);

    let pairs: Vec<(&str, &str)> = ordered
        .iter()
        .map(|(_, (_, summary))| (question_text, summary.as_str()))
        .collect();
    let scores = scorer.score_pairs(&pairs)?;

    let mut best = 0usize;
    for idx in 1..scores.len() {
        // Strict comparison keeps the earlier (higher-priority) candidate on ties.
        if scores[idx] > scores[best] {
            best = idx;
        }
    }
    let (_, (model, summary)) = ordered[best];
    Ok((model.clone(), summary.clone()))
}
