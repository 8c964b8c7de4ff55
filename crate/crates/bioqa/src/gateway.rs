//! Chat-completion backends, per-type response schemas, and strict parsing
//! of model output into typed answers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{canonical_form, GoldAnswer, QuestionType, Snippet, YesNoAnswer, FACTOID_ENTITY_CAP};
use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::fewshot::ExampleRecord;
use crate::prompting::{render, PromptBundle, TemplateSet};

/// A parsed, schema-valid model answer for one question type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "qtype", rename_all = "lowercase")]
pub enum TypedAnswer {
    YesNo { answer: YesNoAnswer },
    Factoid { entities: Vec<String> },
    List { entities: Vec<String> },
    Summary { summary: String },
}

impl TypedAnswer {
    pub fn qtype(&self) -> QuestionType {
        match self {
            TypedAnswer::YesNo { .. } => QuestionType::YesNo,
            TypedAnswer::Factoid { .. } => QuestionType::Factoid,
            TypedAnswer::List { .. } => QuestionType::List,
            TypedAnswer::Summary { .. } => QuestionType::Summary,
        }
    }

    pub fn entities(&self) -> Option<&[String]> {
        match self {
            TypedAnswer::Factoid { entities } | TypedAnswer::List { entities } => Some(entities),
            _ => None,
        }
    }

    /// Re-checks invariants; used when answers are read back from disk.
    pub fn validate(&self) -> Result<()> {
        match self {
            TypedAnswer::YesNo { .. } | TypedAnswer::Summary { .. } => Ok(()),
            TypedAnswer::Factoid { entities } => {
                if entities.len() > FACTOID_ENTITY_CAP {
                    return Err(Error::Validation(format!(
                        "factoid answer has {} entities (cap is {FACTOID_ENTITY_CAP})",
                        entities.len()
                    )));
                }
                let mut seen = std::collections::BTreeSet::new();
                for entity in entities {
                    if entity.is_empty() {
                        return Err(Error::Validation("factoid answer contains an empty entity".into()));
                    }
                    if !seen.insert(canonical_form(entity)) {
                        return Err(Error::Validation(format!(
                            "factoid answer contains duplicate entity {entity:?}"
                        )));
                    }
                }
                Ok(())
            }
            TypedAnswer::List { entities } => {
                if entities.iter().any(|e| e.is_empty()) {
                    return Err(Error::Validation("list answer contains an empty entity".into()));
                }
                Ok(())
            }
        }
    }
}

/// JSON schema a response must match for the given question type. Schemas
/// are closed: no extra keys are accepted.
pub fn answer_schema(qtype: QuestionType) -> Value {
    match qtype {
        QuestionType::YesNo => json!({
            "type": "object",
            "properties": {"answer": {"type": "string", "enum": ["yes", "no"]}},
            "required": ["answer"],
            "additionalProperties": false
        }),
        QuestionType::Factoid | QuestionType::List => json!({
            "type": "object",
            "properties": {"entities": {"type": "array", "items": {"type": "string"}}},
            "required": ["entities"],
            "additionalProperties": false
        }),
        QuestionType::Summary => json!({
            "type": "object",
            "properties": {"summary": {"type": "string"}},
            "required": ["summary"],
            "additionalProperties": false
        }),
    }
}

/// Serializes a gold answer in the response schema of its question type,
/// e.g. for in-context example blocks.
pub fn gold_answer_text(gold: &GoldAnswer, qtype: QuestionType) -> Result<String> {
    let value = match qtype {
        QuestionType::YesNo => {
            let answer = gold
                .yesno_value
                .ok_or_else(|| Error::Validation("gold answer lacks a yes/no value".into()))?;
            json!({"answer": answer.as_str()})
        }
        QuestionType::Factoid => {
            let synonyms = gold
                .factoid_synonyms
                .as_ref()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Validation("gold answer lacks factoid synonyms".into()))?;
            json!({"entities": [synonyms[0]]})
        }
        QuestionType::List => {
            let groups = gold
                .list_groups
                .as_ref()
                .filter(|g| !g.is_empty())
                .ok_or_else(|| Error::Validation("gold answer lacks list groups".into()))?;
            let entities: Vec<&str> = groups.iter().map(|g| g[0].as_str()).collect();
            json!({"entities": entities})
        }
        QuestionType::Summary => {
            let ideals = gold
                .ideal_answers
                .as_ref()
                .filter(|a| !a.is_empty())
                .ok_or_else(|| Error::Validation("gold answer lacks an ideal answer".into()))?;
            json!({"summary": ideals[0]})
        }
    };
    Ok(serde_json::to_string(&value).expect("answer serialization cannot fail"))
}

fn schema_err(raw: &str, message: impl Into<String>) -> Error {
    Error::StructuredOutput {
        message: message.into(),
        raw: raw.to_owned(),
    }
}

fn expect_sole_key<'v>(obj: &'v serde_json::Map<String, Value>, key: &str, raw: &str) -> Result<&'v Value> {
    if let Some(extra) = obj.keys().find(|k| k.as_str() != key) {
        return Err(schema_err(raw, format!("unexpected key {extra:?}")));
    }
    obj.get(key)
        .ok_or_else(|| schema_err(raw, format!("missing required key {key:?}")))
}

fn entity_list(value: &Value, raw: &str) -> Result<Vec<String>> {
    let items = value
        .as_array()
        .ok_or_else(|| schema_err(raw, "\"entities\" must be an array"))?;
    let mut entities = Vec::with_capacity(items.len());
    for item in items {
        let s = item
            .as_str()
            .ok_or_else(|| schema_err(raw, "\"entities\" must contain only strings"))?;
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(schema_err(raw, "\"entities\" contains an empty string"));
        }
        entities.push(trimmed.to_owned());
    }
    // A lone None marker (the prompt's no-answer convention) means empty.
    if entities.len() == 1 {
        let lone = canonical_form(&entities[0]);
        if lone == "none" || lone == "none." {
            entities.clear();
        }
    }
    Ok(entities)
}

/// Parses raw model output against the closed schema for `qtype`.
///
/// Yes/no values are case-folded; entity strings are trimmed; a factoid list
/// is deduplicated by canonical form and then truncated to the 5-entity cap.
pub fn parse_structured(raw: &str, qtype: QuestionType) -> Result<TypedAnswer> {
    let value: Value = serde_json::from_str(raw)
        .map_err(|e| schema_err(raw, format!("not a single JSON document: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(raw, "response must be a JSON object"))?;
    match qtype {
        QuestionType::YesNo => {
            let answer = expect_sole_key(obj, "answer", raw)?;
            let s = answer
                .as_str()
                .ok_or_else(|| schema_err(raw, "\"answer\" must be a string"))?;
            let value = YesNoAnswer::parse(s)
                .ok_or_else(|| schema_err(raw, format!("\"answer\" must be yes or no, got {s:?}")))?;
            Ok(TypedAnswer::YesNo { answer: value })
        }
        QuestionType::Factoid => {
            let entities = entity_list(expect_sole_key(obj, "entities", raw)?, raw)?;
            let mut seen = std::collections::BTreeSet::new();
            let mut deduped = Vec::new();
            for entity in entities {
                if seen.insert(canonical_form(&entity)) {
                    deduped.push(entity);
                }
            }
            deduped.truncate(FACTOID_ENTITY_CAP);
            Ok(TypedAnswer::Factoid { entities: deduped })
        }
        QuestionType::List => {
            let entities = entity_list(expect_sole_key(obj, "entities", raw)?, raw)?;
            Ok(TypedAnswer::List { entities })
        }
        QuestionType::Summary => {
            let summary = expect_sole_key(obj, "summary", raw)?
                .as_str()
                .ok_or_else(|| schema_err(raw, "\"summary\" must be a string"))?;
            Ok(TypedAnswer::Summary {
                summary: summary.trim().to_owned(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatProviderKind {
    HttpChat,
    Replay,
    Constant,
}

/// Configuration of one chat-completion backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ChatProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    /// Replay only: file mapping question id to a recorded raw response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    /// Constant only: the fixed response text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_retries() -> u32 {
    2
}

fn default_timeout_secs() -> u64 {
    60
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("model name cannot be empty".into()));
        }
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "model {}: temperature must be a finite value >= 0",
                self.name
            )));
        }
        match self.kind {
            ChatProviderKind::HttpChat => {
                if self.endpoint.is_none() {
                    return Err(Error::Config(format!(
                        "model {}: http-chat requires an endpoint",
                        self.name
                    )));
                }
            }
            ChatProviderKind::Replay => {
                if self.fixtures.is_none() {
                    return Err(Error::Config(format!(
                        "model {}: replay requires a fixtures file",
                        self.name
                    )));
                }
            }
            ChatProviderKind::Constant => {
                if self.response.is_none() {
                    return Err(Error::Config(format!(
                        "model {}: constant requires a response text",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds the provider, performing startup checks (fixture file loads,
    /// auth variable resolves) so that misconfiguration fails before any run.
    pub fn build(&self) -> Result<Box<dyn ChatProvider>> {
        self.validate()?;
        match self.kind {
            ChatProviderKind::Constant => Ok(Box::new(ConstantProvider {
                response: self.response.clone().expect("validated above"),
            })),
            ChatProviderKind::Replay => {
                let path = self.fixtures.as_ref().expect("validated above");
                let raw = std::fs::read(path).map_err(|e| {
                    Error::Config(format!(
                        "model {}: cannot read fixtures file {}: {e}",
                        self.name,
                        path.display()
                    ))
                })?;
                let fixtures: BTreeMap<String, String> = serde_json::from_slice(&raw)
                    .map_err(|e| {
                        Error::Config(format!(
                            "model {}: fixtures file {} is not a string map: {e}",
                            self.name,
                            path.display()
                        ))
                    })?;
                Ok(Box::new(ReplayProvider {
                    model_name: self.name.clone(),
                    fixtures,
                }))
            }
            ChatProviderKind::HttpChat => {
                let auth_token = match &self.auth_env_var {
                    None => None,
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!(
                            "model {}: auth environment variable {var} is not set",
                            self.name
                        ))
                    })?),
                };
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(self.timeout_secs))
                    .build()
                    .map_err(|e| Error::provider(format!("failed to build http client: {e}"), false))?;
                Ok(Box::new(HttpChatProvider {
                    model_name: self.name.clone(),
                    endpoint: self.endpoint.clone().expect("validated above"),
                    auth_token,
                    temperature: self.temperature,
                    max_retries: self.max_retries,
                    client,
                }))
            }
        }
    }
}

/// One completion request; the question id keys replay lookups.
pub struct ChatRequest<'a> {
    pub question_id: &'a str,
    pub bundle: &'a PromptBundle,
    pub schema: &'a Value,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String>;
}

struct ConstantProvider {
    response: String,
}

impl ChatProvider for ConstantProvider {
    fn complete(&self, _request: &ChatRequest<'_>) -> Result<String> {
        Ok(self.response.clone())
    }
}

struct ReplayProvider {
    model_name: String,
    fixtures: BTreeMap<String, String>,
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String> {
        self.fixtures
            .get(request.question_id)
            .cloned()
            .ok_or_else(|| Error::Fixture {
                key: format!("({}, {})", self.model_name, request.question_id),
            })
    }
}

struct HttpChatProvider {
    model_name: String,
    endpoint: String,
    auth_token: Option<String>,
    temperature: f64,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String> {
        let schema_name = format!("{}_answer", request.bundle_schema_name());
        let body = json!({
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": request.bundle.system_text},
                {"role": "user", "content": request.bundle.user_text}
            ],
            "temperature": self.temperature,
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": schema_name,
                    "strict": true,
                    "schema": request.schema
                }
            }
        });
        let response: ChatCompletionResponse = with_retries(self.max_retries, || {
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.auth_token {
                req = req.bearer_auth(token);
            }
            let resp = req
                .send()
                .map_err(|e| Error::provider(format!("chat request failed: {e}"), true))?;
            json_from_response(resp)
        })?;
        response
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| Error::provider("chat response has no assistant message text", false))
    }
}

impl ChatRequest<'_> {
    fn bundle_schema_name(&self) -> &'static str {
        match self.schema.pointer("/properties/answer") {
            Some(_) => "yesno",
            None => match self.schema.pointer("/properties/entities") {
                Some(_) => "entities",
                None => "summary",
            },
        }
    }
}

/// Runs `op` up to `max_retries + 1` times, sleeping with exponential backoff
/// between attempts; only retryable provider errors are retried.
pub(crate) fn with_retries<T>(max_retries: u32, op: impl Fn() -> Result<T>) -> Result<T> {
    let mut attempt = 0u32;
    loop {
        match op() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_retryable() && attempt < max_retries => {
                let backoff = Duration::from_millis(100u64 << attempt.min(6));
                std::thread::sleep(backoff);
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Maps an HTTP response to JSON; 429 and 5xx are retryable, other failure
/// statuses are not.
pub(crate) fn json_from_response<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T> {
    let status = resp.status();
    if !status.is_success() {
        let retryable = status.is_server_error() || status.as_u16() == 429;
        let body = resp.text().unwrap_or_default();
        let body = body.chars().take(200).collect::<String>();
        return Err(Error::provider(format!("http status {status}: {body}"), retryable));
    }
    resp.json::<T>()
        .map_err(|e| Error::provider(format!("bad response body: {e}"), false))
}

// ---------------------------------------------------------------------------
// End-to-end per-model answering
// ---------------------------------------------------------------------------

const CORRECTIVE_INSTRUCTION: &str = "Your previous response was not valid under the required JSON schema. Respond again with a single JSON object that matches the schema exactly, with no additional keys and no text outside the object.";

/// Result of asking one model one question. A schema violation surviving the
/// corrective retry is a recorded outcome, not an abort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerOutcome {
    Answered { answer: TypedAnswer, raw: String },
    Unanswered { reason: String, raw: Option<String> },
}

/// Renders the prompt, queries the model, and parses the response. On one
/// schema violation the request is re-issued once with a corrective
/// instruction appended; a second violation marks the question unanswered.
pub fn answer_question(
    question: &Question,
    snippets: &[Snippet],
    examples: &[ExampleRecord],
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
) -> Result<AnswerOutcome> {
    let bundle = render(question, snippets, examples, templates)?;
    let schema = answer_schema(question.qtype);
    let raw = provider.complete(&ChatRequest {
        question_id: &question.id,
        bundle: &bundle,
        schema: &schema,
    })?;
    let first_err = match parse_structured(&raw, question.qtype) {
        Ok(answer) => return Ok(AnswerOutcome::Answered { answer, raw }),
        Err(err) => err,
    };

    let corrective = PromptBundle {
        system_text: bundle.system_text.clone(),
        user_text: format!("{}\n\n{CORRECTIVE_INSTRUCTION}", bundle.user_text),
    };
    let raw2 = provider.complete(&ChatRequest {
        question_id: &question.id,
        bundle: &corrective,
        schema: &schema,
    })?;
    match parse_structured(&raw2, question.qtype) {
        Ok(answer) => Ok(AnswerOutcome::Answered { answer, raw: raw2 }),
        Err(second_err) => Ok(AnswerOutcome::Unanswered {
            reason: format!("schema violation twice: {first_err}; then: {second_err}"),
            raw: Some(raw2),
        }),
    }
}
