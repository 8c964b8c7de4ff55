//! Store of past questions with gold answers, queried for in-context examples.
//!
//! Each record embeds the question text combined with its 10 best snippets;
//! queries embed the incoming question the same way and rank stored records
//! of the same type by cosine similarity.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{GoldAnswer, Question, QuestionType};
use crate::error::{Error, Result};
use crate::retrieval::{cosine, select_top_snippets, EmbedRole, EmbeddingClient, EmbeddingVector};

/// Snippet count used when building example contexts, on both the stored and
/// the query side.
const CONTEXT_SNIPPET_K: usize = 10;

/// A past question prepared for nearest-neighbor retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub qtype: QuestionType,
    pub question_text: String,
    /// Question text followed by its best snippets, newline-separated;
    /// always begins with `question_text`.
    pub context_text: String,
    pub embedding: EmbeddingVector,
    pub gold: GoldAnswer,
}

/// How many in-context examples to retrieve per question type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShotPolicy {
    pub yesno: usize,
    pub factoid: usize,
    pub list: usize,
    pub summary: usize,
}

impl Default for ShotPolicy {
    fn default() -> Self {
        ShotPolicy {
            yesno: 0,
            factoid: 3,
            list: 3,
            summary: 0,
        }
    }
}

impl ShotPolicy {
    pub fn shots(&self, qtype: QuestionType) -> usize {
        match qtype {
            QuestionType::YesNo => self.yesno,
            QuestionType::Factoid => self.factoid,
            QuestionType::List => self.list,
            QuestionType::Summary => self.summary,
        }
    }

    pub fn any_nonzero(&self) -> bool {
        self.yesno + self.factoid + self.list + self.summary > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreHeader {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_name: Option<String>,
    dim: usize,
}

/// Immutable in-memory example store backed by a line-delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleStore {
    header: StoreHeader,
    records: Vec<ExampleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildReport {
    pub records: usize,
    pub skipped: usize,
}

impl ExampleStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExampleRecord] {
        &self.records
    }

    /// Serializes the store: a header line, then one record per line.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &self.header).expect("header serialization cannot fail");
        out.push(b'\n');
        for record in &self.records {
            serde_json::to_writer(&mut out, record).expect("record serialization cannot fail");
            out.push(b'\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
            offset: e.valid_up_to(),
            message: format!("store file is not UTF-8: {e}"),
        })?;
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Validation("store file is empty (missing header line)".into()))?;
        let header: StoreHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::Validation(format!("bad store header: {e}")))?;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let record: ExampleRecord = serde_json::from_str(line).map_err(|e| {
                Error::Validation(format!("bad store record on line {}: {e}", lineno + 2))
            })?;
            if record.embedding.dim() != header.dim {
                return Err(Error::Validation(format!(
                    "store record {} has dim {}, header says {}",
                    record.id,
                    record.embedding.dim(),
                    header.dim
                )));
            }
            if !record.context_text.starts_with(&record.question_text) {
                return Err(Error::Validation(format!(
                    "store record {}: context does not begin with the question text",
                    record.id
                )));
            }
            records.push(record);
        }
        Ok(ExampleStore { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&raw)
    }

    /// Rejects stores built under a different embedding model or dimension.
    pub fn check_compatible(&self, client: &EmbeddingClient) -> Result<()> {
        if self.header.model_name != client.spec().model_name {
            return Err(Error::Config(format!(
                "example store was built with embedding model {:?}, run uses {:?}",
                self.header.model_name,
                client.spec().model_name
            )));
        }
        if let Some(dim) = client.known_dim() {
            if dim != self.header.dim {
                return Err(Error::Config(format!(
                    "example store dim {} does not match provider dim {dim}",
                    self.header.dim
                )));
            }
        }
        Ok(())
    }
}

fn context_text(question: &Question, client: &EmbeddingClient) -> Result<String> {
    let top = select_top_snippets(question, CONTEXT_SNIPPET_K, client)?;
    let mut context = question.body.clone();
    for snippet in &top {
        context.push('\n');
        context.push_str(&snippet.text);
    }
    Ok(context)
}

/// Builds a store from past questions. Questions without a usable gold answer
/// or without snippets are skipped with a warning and counted in the report.
pub fn build_store(past: &[Question], client: &EmbeddingClient) -> Result<(ExampleStore, BuildReport)> {
    let mut kept: Vec<(&Question, String)> = Vec::with_capacity(past.len());
    let mut skipped = 0usize;
    for question in past {
        let usable = question
            .gold
            .as_ref()
            .is_some_and(|g| g.matches(question.qtype));
        if !usable {
            log::warn!("skipping {}: no gold answer for its type", question.id);
            skipped += 1;
            continue;
        }
        if question.snippets.is_empty() {
            log::warn!("skipping {}: no snippets", question.id);
            skipped += 1;
            continue;
        }
        let context = context_text(question, client)?;
        kept.push((question, context));
    }

    let mut records = Vec::with_capacity(kept.len());
    let mut dim = client.known_dim().unwrap_or(0);
    if !kept.is_empty() {
        let texts: Vec<&str> = kept.iter().map(|(_, c)| c.as_str()).collect();
        let embeddings = client.embed(&texts, EmbedRole::Document)?;
        dim = embeddings[0].dim();
        for ((question, context), embedding) in kept.into_iter().zip(embeddings) {
            records.push(ExampleRecord {
                id: question.id.clone(),
                qtype: question.qtype,
                question_text: question.body.clone(),
                context_text: context,
                embedding,
                gold: question.gold.clone().expect("checked above"),
            });
        }
    }

    let store = ExampleStore {
        header: StoreHeader {
            model_name: client.spec().model_name.clone(),
            dim,
        },
        records,
    };
    let report = BuildReport {
        records: store.len(),
        skipped,
    };
    Ok((store, report))
}

/// Returns the most similar same-type records for `question`, most similar
/// first, excluding any record with the question's own id. The count comes
/// from the shot policy; a smaller store returns all available records.
pub fn query_examples(
    question: &Question,
    store: &ExampleStore,
    policy: &ShotPolicy,
    client: &EmbeddingClient,
) -> Result<Vec<ExampleRecord>> {
    let n = policy.shots(question.qtype);
    if n == 0 {
        return Ok(Vec::new());
    }
    store.check_compatible(client)?;
    let context = context_text(question, client)?;
    let query_vec = client.embed(&[context.as_str()], EmbedRole::Query)?.remove(0);

    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (idx, record) in store.records.iter().enumerate() {
        if record.qtype != question.qtype || record.id == question.id {
            continue;
        }
        scored.push((idx, cosine(&query_vec, &record.embedding)?));
    }
    scored.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then(ia.cmp(ib)));
    scored.truncate(n);
    Ok(scored
        .into_iter()
        .map(|(idx, _)| store.records[idx].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Snippet;
    use crate::retrieval::EmbeddingProviderSpec;

    fn mock_client() -> EmbeddingClient {
        EmbeddingProviderSpec::default().build().unwrap()
    }

    fn snippet(text: &str) -> Snippet {
        Snippet {
            text: text.into(),
            document: String::new(),
            begin_section: String::new(),
            end_section: String::new(),
            offset_begin: 0,
            offset_end: 0,
        }
    }

    fn factoid_question(id: &str, body: &str, gold: Option<&str>) -> Question {
        Question {
            id: id.into(),
            body: body.into(),
            qtype: QuestionType::Factoid,
            snippets: vec![snippet(&format!("context for {body}")), snippet("shared background")],
            gold: gold.map(|g| GoldAnswer {
                factoid_synonyms: Some(vec![g.into()]),
                ..GoldAnswer::default()
            }),
        }
    }

    fn yesno_question(id: &str, body: &str) -> Question {
        Question {
            id: id.into(),
            body: body.into(),
            qtype: QuestionType::YesNo,
            snippets: vec![snippet("some evidence")],
            gold: Some(GoldAnswer {
                yesno_value: Some(crate::corpus::YesNoAnswer::Yes),
                ..GoldAnswer::default()
            }),
        }
    }

    #[test]
    fn build_skips_questions_without_gold() {
        let client = mock_client();
        let past = vec![
            factoid_question("p1", "first", Some("a")),
            factoid_question("p2", "second", Some("b")),
            factoid_question("p3", "third", None),
        ];
        let (store, report) = build_store(&past, &client).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(report, BuildReport { records: 2, skipped: 1 });
    }

    #[test]
    fn empty_input_builds_empty_store() {
        let client = mock_client();
        let (store, report) = build_store(&[], &client).unwrap();
        assert!(store.is_empty());
        assert_eq!(report, BuildReport { records: 0, skipped: 0 });
    }

    #[test]
    fn store_roundtrips_bit_exactly() {
        let client = mock_client();
        let past = vec![
            factoid_question("p1", "first", Some("a")),
            factoid_question("p2", "second", Some("b")),
        ];
        let (store, _) = build_store(&past, &client).unwrap();
        let bytes = store.to_bytes();
        let reloaded = ExampleStore::from_bytes(&bytes).unwrap();
        assert_eq!(reloaded, store);
        assert_eq!(reloaded.to_bytes(), bytes);
    }

    #[test]
    fn context_contains_question_as_prefix() {
        let client = mock_client();
        let past = vec![factoid_question("p1", "first", Some("a"))];
        let (store, _) = build_store(&past, &client).unwrap();
        let record = &store.records()[0];
        assert!(record.context_text.starts_with(&record.question_text));
        assert!(record.context_text.len() > record.question_text.len());
    }

    #[test]
    fn yesno_under_default_policy_returns_no_examples() {
        let client = mock_client();
        let past = vec![yesno_question("p1", "past question")];
        let (store, _) = build_store(&past, &client).unwrap();
        let q = yesno_question("q1", "new question");
        let got = query_examples(&q, &store, &ShotPolicy::default(), &client).unwrap();
        assert!(got.is_empty());
    }

    /// Independent oracle: score every eligible record, repeatedly extract
    /// the maximum (store order on ties).
    fn brute_force_ids(
        question: &Question,
        store: &ExampleStore,
        n: usize,
        client: &EmbeddingClient,
    ) -> Vec<String> {
        let context = context_text(question, client).unwrap();
        let qv = client.embed(&[context.as_str()], EmbedRole::Query).unwrap().remove(0);
        let mut eligible: Vec<(usize, f64)> = store
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.qtype == question.qtype && r.id != question.id)
            .map(|(i, r)| (i, cosine(&qv, &r.embedding).unwrap()))
            .collect();
        let mut picked = Vec::new();
        while picked.len() < n && !eligible.is_empty() {
            let mut best = 0;
            for pos in 1..eligible.len() {
                if eligible[pos].1 > eligible[best].1 {
                    best = pos;
                }
            }
            let (idx, _) = eligible.remove(best);
            picked.push(store.records()[idx].id.clone());
        }
        picked
    }

    #[test]
    fn factoid_query_matches_brute_force_ranking() {
        let client = mock_client();
        let past: Vec<Question> = (0..10)
            .map(|i| factoid_question(&format!("p{i}"), &format!("past body {i}"), Some("x")))
            .collect();
        let (store, _) = build_store(&past, &client).unwrap();
        let q = factoid_question("q1", "a new incoming question", Some("y"));
        let got: Vec<String> = query_examples(&q, &store, &ShotPolicy::default(), &client)
            .unwrap()
            .into_iter()
            .map(|r| r.id)
            .collect();
        assert_eq!(got.len(), 3);
        assert_eq!(got, brute_force_ids(&q, &store, 3, &client));
    }

    #[test]
    fn query_excludes_own_id() {
        let client = mock_client();
        let past: Vec<Question> = (0..4)
            .map(|i| factoid_question(&format!("p{i}"), &format!("body {i}"), Some("x")))
            .collect();
        let (store, _) = build_store(&past, &client).unwrap();
        let got = query_examples(&past[0], &store, &ShotPolicy::default(), &client).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.iter().all(|r| r.id != "p0"));
    }

    #[test]
    fn small_store_returns_all_available() {
        let client = mock_client();
        let past = vec![factoid_question("p1", "only one", Some("x"))];
        let (store, _) = build_store(&past, &client).unwrap();
        let q = factoid_question("q1", "incoming", Some("y"));
        let got = query_examples(&q, &store, &ShotPolicy::default(), &client).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn similarities_are_non_increasing_and_types_match() {
        let client = mock_client();
        let mut past: Vec<Question> = (0..8)
            .map(|i| factoid_question(&format!("p{i}"), &format!("past {i}"), Some("x")))
            .collect();
        past.push(yesno_question("y1", "a yes/no question"));
        let (store, _) = build_store(&past, &client).unwrap();
        let q = factoid_question("q1", "fresh question", Some("y"));
        let got = query_examples(&q, &store, &ShotPolicy::default(), &client).unwrap();
        assert!(got.iter().all(|r| r.qtype == QuestionType::Factoid));

        let context = context_text(&q, &client).unwrap();
        let qv = client.embed(&[context.as_str()], EmbedRole::Query).unwrap().remove(0);
        let sims: Vec<f64> = got.iter().map(|r| cosine(&qv, &r.embedding).unwrap()).collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]), "{sims:?}");
    }

    #[test]
    fn incompatible_store_is_rejected() {
        let client = mock_client();
        let past = vec![factoid_question("p1", "first", Some("a"))];
        let (store, _) = build_store(&past, &client).unwrap();
        let other = EmbeddingProviderSpec {
            model_name: Some("some-other-model".into()),
            ..EmbeddingProviderSpec::default()
        }
        .build()
        .unwrap();
        assert!(matches!(store.check_compatible(&other), Err(Error::Config(_))));
    }
}
