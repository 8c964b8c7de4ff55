//! Data model and reader/writer for challenge question, gold, and submission files.
//!
//! Batch files carry a top-level `questions` array; each question has an id,
//! a body, a type, snippets, and (in training/gold files) exact and ideal
//! answers. Submission files carry the same top-level shape with only
//! `id`, `exact_answer`, and `ideal_answer` per entry.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// The four question types of the challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    YesNo,
    Factoid,
    List,
    Summary,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::YesNo,
        QuestionType::Factoid,
        QuestionType::List,
        QuestionType::Summary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::YesNo => "yesno",
            QuestionType::Factoid => "factoid",
            QuestionType::List => "list",
            QuestionType::Summary => "summary",
        }
    }

    pub fn from_str(s: &str) -> Option<QuestionType> {
        match s {
            "yesno" => Some(QuestionType::YesNo),
            "factoid" => Some(QuestionType::Factoid),
            "list" => Some(QuestionType::List),
            "summary" => Some(QuestionType::Summary),
            _ => None,
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A canonical yes/no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNoAnswer {
    Yes,
    No,
}

impl YesNoAnswer {
    pub fn as_str(&self) -> &'static str {
        match self {
            YesNoAnswer::Yes => "yes",
            YesNoAnswer::No => "no",
        }
    }

    /// Accepts any casing/whitespace variant of "yes"/"no".
    pub fn parse(s: &str) -> Option<YesNoAnswer> {
        match canonical_form(s).as_str() {
            "yes" => Some(YesNoAnswer::Yes),
            "no" => Some(YesNoAnswer::No),
            _ => None,
        }
    }
}

impl fmt::Display for YesNoAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A supporting passage extracted from an abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    #[serde(default)]
    pub document: String,
    #[serde(rename = "beginSection", default)]
    pub begin_section: String,
    #[serde(rename = "endSection", default)]
    pub end_section: String,
    #[serde(rename = "offsetInBeginSection", default)]
    pub offset_begin: u64,
    #[serde(rename = "offsetInEndSection", default)]
    pub offset_end: u64,
}

/// Reference answers for one question; which fields are populated depends on
/// the question's type. `ideal_answers` may accompany any type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yesno_value: Option<YesNoAnswer>,
    /// Acceptable surface forms of the single correct entity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factoid_synonyms: Option<Vec<String>>,
    /// One group per correct entity, each holding its acceptable surface forms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub list_groups: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ideal_answers: Option<Vec<String>>,
}

impl GoldAnswer {
    /// True when the field required by `qtype` is populated.
    pub fn matches(&self, qtype: QuestionType) -> bool {
        match qtype {
            QuestionType::YesNo => self.yesno_value.is_some(),
            QuestionType::Factoid => self
                .factoid_synonyms
                .as_ref()
                .is_some_and(|s| !s.is_empty()),
            QuestionType::List => self.list_groups.as_ref().is_some_and(|g| !g.is_empty()),
            QuestionType::Summary => self
                .ideal_answers
                .as_ref()
                .is_some_and(|a| !a.is_empty()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.yesno_value.is_none()
            && self.factoid_synonyms.is_none()
            && self.list_groups.is_none()
            && self.ideal_answers.is_none()
    }
}

/// One challenge question with its supporting snippets and optional gold answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    pub qtype: QuestionType,
    pub snippets: Vec<Snippet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldAnswer>,
}

/// Exact answer of a submission entry: a yes/no value or a ranked entity
/// list, where each entity is a non-empty synonym list. Summary entries
/// have no exact answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExactAnswer {
    YesNo(YesNoAnswer),
    Entities(Vec<Vec<String>>),
}

/// One entry of a submission file.
///
/// `qtype` is known when the entry was produced by the pipeline and `None`
/// when the entry was read back from a file (the submission format does not
/// record types); type-specific invariants are only enforceable when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionEntry {
    pub id: String,
    pub exact_answer: Option<ExactAnswer>,
    pub ideal_answer: String,
    pub qtype: Option<QuestionType>,
}

impl SubmissionEntry {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("submission entry with empty id".into()));
        }
        if let Some(ExactAnswer::Entities(groups)) = &self.exact_answer {
            for group in groups {
                if group.is_empty() {
                    return Err(Error::Validation(format!(
                        "entry {}: empty synonym group in exact_answer",
                        self.id
                    )));
                }
                if group.iter().any(|s| s.is_empty()) {
                    return Err(Error::Validation(format!(
                        "entry {}: empty synonym string in exact_answer",
                        self.id
                    )));
                }
            }
        }
        match self.qtype {
            Some(QuestionType::YesNo) => {
                if !matches!(self.exact_answer, Some(ExactAnswer::YesNo(_))) {
                    return Err(Error::Validation(format!(
                        "entry {}: yes/no question requires a yes/no exact_answer",
                        self.id
                    )));
                }
            }
            Some(QuestionType::Factoid) => match &self.exact_answer {
                Some(ExactAnswer::Entities(groups)) => {
                    if groups.len() > FACTOID_ENTITY_CAP {
                        return Err(Error::Validation(format!(
                            "entry {}: factoid exact_answer has {} entities (cap is {})",
                            self.id,
                            groups.len(),
                            FACTOID_ENTITY_CAP
                        )));
                    }
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "entry {}: factoid question requires an entity-list exact_answer",
                        self.id
                    )))
                }
            },
            Some(QuestionType::List) => {
                if !matches!(self.exact_answer, Some(ExactAnswer::Entities(_))) {
                    return Err(Error::Validation(format!(
                        "entry {}: list question requires an entity-list exact_answer",
                        self.id
                    )));
                }
            }
            Some(QuestionType::Summary) => {
                if self.exact_answer.is_some() {
                    return Err(Error::Validation(format!(
                        "entry {}: summary question must not carry an exact_answer",
                        self.id
                    )));
                }
            }
            None => {}
        }
        Ok(())
    }
}

/// Hard cap on ranked factoid entities in any submission.
pub const FACTOID_ENTITY_CAP: usize = 5;

/// Case-folds, trims, and collapses internal whitespace runs to single spaces.
/// Shared normalization for answer matching and vote counting; punctuation is
/// kept as-is.
pub fn canonical_form(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for token in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawBatch {
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    id: Option<String>,
    body: Option<String>,
    #[serde(rename = "type")]
    qtype: Option<String>,
    #[serde(default)]
    snippets: Vec<RawSnippet>,
    exact_answer: Option<Value>,
    ideal_answer: Option<Value>,
}

#[derive(Deserialize)]
struct RawSnippet {
    text: Option<String>,
    #[serde(default)]
    document: String,
    #[serde(rename = "beginSection", default)]
    begin_section: String,
    #[serde(rename = "endSection", default)]
    end_section: String,
    #[serde(rename = "offsetInBeginSection")]
    offset_begin: Option<i64>,
    #[serde(rename = "offsetInEndSection")]
    offset_end: Option<i64>,
}

/// Maps a serde_json line/column position to a byte offset into `input`.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining_lines = line - 1;
    let mut offset = 0usize;
    while remaining_lines > 0 && offset < input.len() {
        if input[offset] == b'\n' {
            remaining_lines -= 1;
        }
        offset += 1;
    }
    (offset + column.saturating_sub(1)).min(input.len())
}

fn json_error(input: &[u8], err: &serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(input, err.line(), err.column()),
        message: err.to_string(),
    }
}

fn parse_document(raw: &[u8]) -> Result<RawBatch> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: format!("input is not UTF-8: {e}"),
    })?;
    serde_json::from_str(text).map_err(|e| json_error(raw, &e))
}

fn validation(idx: usize, msg: impl fmt::Display) -> Error {
    Error::Validation(format!("question at index {idx}: {msg}"))
}

/// Collects entity strings from either a flat string array or a nested
/// string-array form; both shapes occur across challenge editions.
fn string_groups(value: &Value, idx: usize, field: &str) -> Result<Vec<Vec<String>>> {
    let items = value
        .as_array()
        .ok_or_else(|| validation(idx, format!("{field} must be an array")))?;
    let mut groups = Vec::with_capacity(items.len());
    for item in items {
        match item {
            Value::String(s) => groups.push(vec![s.clone()]),
            Value::Array(inner) => {
                let mut group = Vec::with_capacity(inner.len());
                for leaf in inner {
                    match leaf {
                        Value::String(s) => group.push(s.clone()),
                        other => {
                            return Err(validation(
                                idx,
                                format!("{field} contains a non-string element: {other}"),
                            ))
                        }
                    }
                }
                if group.is_empty() {
                    return Err(validation(idx, format!("{field} contains an empty group")));
                }
                groups.push(group);
            }
            other => {
                return Err(validation(
                    idx,
                    format!("{field} contains a non-string element: {other}"),
                ))
            }
        }
    }
    if groups.is_empty() {
        return Err(validation(idx, format!("{field} is empty")));
    }
    Ok(groups)
}

fn ideal_answers(value: &Value, idx: usize) -> Result<Vec<String>> {
    match value {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str().map(str::to_owned).ok_or_else(|| {
                    validation(idx, format!("ideal_answer contains a non-string element: {v}"))
                })
            })
            .collect(),
        other => Err(validation(idx, format!("ideal_answer must be a string or string array, got {other}"))),
    }
}

fn parse_gold(
    raw: &RawQuestion,
    qtype: QuestionType,
    idx: usize,
) -> Result<Option<GoldAnswer>> {
    let mut gold = GoldAnswer::default();
    if let Some(exact) = &raw.exact_answer {
        match qtype {
            QuestionType::YesNo => {
                let s = exact
                    .as_str()
                    .ok_or_else(|| validation(idx, "yes/no exact_answer must be a string"))?;
                let value = YesNoAnswer::parse(s).ok_or_else(|| {
                    validation(idx, format!("yes/no exact_answer must be yes or no, got {s:?}"))
                })?;
                gold.yesno_value = Some(value);
            }
            QuestionType::Factoid => {
                // Editions disagree on nesting; flatten to one synonym list.
                let synonyms: Vec<String> = string_groups(exact, idx, "exact_answer")?
                    .into_iter()
                    .flatten()
                    .collect();
                gold.factoid_synonyms = Some(synonyms);
            }
            QuestionType::List => {
                gold.list_groups = Some(string_groups(exact, idx, "exact_answer")?);
            }
            // Summary questions carry no exact answer; tolerate stray values.
            QuestionType::Summary => {}
        }
    }
    if let Some(ideal) = &raw.ideal_answer {
        gold.ideal_answers = Some(ideal_answers(ideal, idx)?);
    }
    Ok(if gold.is_empty() { None } else { Some(gold) })
}

/// Parses a challenge batch (question or gold/training) file.
///
/// Unknown fields are ignored. Gold fields are populated when present.
pub fn parse_batch(raw: &[u8]) -> Result<Vec<Question>> {
    let batch = parse_document(raw)?;
    let mut questions = Vec::with_capacity(batch.questions.len());
    let mut seen_ids = BTreeSet::new();
    for (idx, rq) in batch.questions.iter().enumerate() {
        let id = rq
            .id
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| validation(idx, "missing id"))?
            .to_owned();
        let body = rq
            .body
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| validation(idx, "missing body"))?
            .to_owned();
        let type_str = rq
            .qtype
            .as_deref()
            .ok_or_else(|| validation(idx, "missing type"))?;
        let qtype = QuestionType::from_str(type_str)
            .ok_or_else(|| validation(idx, format!("unknown question type {type_str:?}")))?;
        if !seen_ids.insert(id.clone()) {
            return Err(validation(idx, format!("duplicate question id {id:?}")));
        }
        let mut snippets = Vec::with_capacity(rq.snippets.len());
        for (snip_idx, rs) in rq.snippets.iter().enumerate() {
            let text = rs
                .text
                .as_deref()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| validation(idx, format!("snippet {snip_idx} has empty text")))?
                .to_owned();
            let offset_begin = rs.offset_begin.unwrap_or(0);
            let offset_end = rs.offset_end.unwrap_or(0);
            if offset_begin < 0 || offset_end < 0 {
                return Err(validation(idx, format!("snippet {snip_idx} has a negative offset")));
            }
            if rs.begin_section == rs.end_section && offset_end < offset_begin {
                return Err(validation(
                    idx,
                    format!("snippet {snip_idx} ends before it begins within one section"),
                ));
            }
            snippets.push(Snippet {
                text,
                document: rs.document.clone(),
                begin_section: rs.begin_section.clone(),
                end_section: rs.end_section.clone(),
                offset_begin: offset_begin as u64,
                offset_end: offset_end as u64,
            });
        }
        let gold = parse_gold(rq, qtype, idx)?;
        questions.push(Question {
            id,
            body,
            qtype,
            snippets,
            gold,
        });
    }
    Ok(questions)
}

/// Parses a submission file into entries. Entry types are unknown at this
/// point; an empty-string `exact_answer` reads back as absent.
pub fn parse_submission(raw: &[u8]) -> Result<Vec<SubmissionEntry>> {
    let batch = parse_document(raw)?;
    let mut entries = Vec::with_capacity(batch.questions.len());
    let mut seen_ids = BTreeSet::new();
    for (idx, rq) in batch.questions.iter().enumerate() {
        let id = rq
            .id
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| validation(idx, "missing id"))?
            .to_owned();
        if !seen_ids.insert(id.clone()) {
            return Err(validation(idx, format!("duplicate question id {id:?}")));
        }
        let exact_answer = match &rq.exact_answer {
            None => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(Value::String(s)) => {
                let value = YesNoAnswer::parse(s).ok_or_else(|| {
                    Error::Validation(format!(
                        "entry {id}: string exact_answer must be yes, no, or empty, got {s:?}"
                    ))
                })?;
                Some(ExactAnswer::YesNo(value))
            }
            Some(array @ Value::Array(_)) => {
                Some(ExactAnswer::Entities(string_groups(array, idx, "exact_answer")?))
            }
            Some(other) => {
                return Err(Error::Validation(format!(
                    "entry {id}: exact_answer must be a string or array, got {other}"
                )))
            }
        };
        let ideal_answer = match &rq.ideal_answer {
            None => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(other) => {
                return Err(Error::Validation(format!(
                    "entry {id}: ideal_answer must be a string, got {other}"
                )))
            }
        };
        let entry = SubmissionEntry {
            id,
            exact_answer,
            ideal_answer,
            qtype: None,
        };
        entry.validate()?;
        entries.push(entry);
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SubmissionFileOut<'a> {
    questions: Vec<SubmissionEntryOut<'a>>,
}

#[derive(Serialize)]
struct SubmissionEntryOut<'a> {
    id: &'a str,
    exact_answer: Value,
    ideal_answer: &'a str,
}

/// Serializes submission entries to bytes. Output is deterministic: key order
/// is fixed and entry order equals input order. An absent exact answer is
/// written as the empty string.
pub fn write_submission(entries: &[SubmissionEntry]) -> Result<Vec<u8>> {
    let mut questions = Vec::with_capacity(entries.len());
    for entry in entries {
        entry.validate()?;
        let exact_answer = match &entry.exact_answer {
            None => Value::String(String::new()),
            Some(ExactAnswer::YesNo(v)) => Value::String(v.as_str().to_owned()),
            Some(ExactAnswer::Entities(groups)) => Value::Array(
                groups
                    .iter()
                    .map(|group| {
                        Value::Array(group.iter().map(|s| Value::String(s.clone())).collect())
                    })
                    .collect(),
            ),
        };
        questions.push(SubmissionEntryOut {
            id: &entry.id,
            exact_answer,
            ideal_answer: &entry.ideal_answer,
        });
    }
    let mut bytes = serde_json::to_vec_pretty(&SubmissionFileOut { questions })
        .expect("submission serialization cannot fail");
    bytes.push(b'\n');
    Ok(bytes)
}
