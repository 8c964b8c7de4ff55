//! Orchestration of full runs: store preparation, batch answering with
//! bounded parallelism, fusion, re-fusion from persisted answers, and
//! evaluation.
//!
//! Every merge point orders its inputs by question position and model
//! priority, so outputs are identical for any parallelism level.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::corpus::{
    parse_batch, parse_submission, write_submission, ExactAnswer, GoldAnswer, Question,
    QuestionType, Snippet, SubmissionEntry, YesNoAnswer,
};
use crate::ensemble::{fuse, tally, TallyEntry};
use crate::error::{Error, Result};
use crate::fewshot::{build_store, query_examples, BuildReport, ExampleRecord, ExampleStore};
use crate::gateway::{answer_question, AnswerOutcome, ChatProvider, TypedAnswer};
use crate::metrics::{
    eval_factoid, eval_list, eval_summary, eval_yesno, EvalReport, TypeCounts,
};
use crate::prompting::TemplateSet;
use crate::retrieval::{select_top_snippets, EmbeddingClient};
use crate::summary::select_best;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Runs `f` over `items` on up to `parallelism` worker threads; the result
/// vector is indexed like the input, independent of completion order.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    parallelism: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = parallelism.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                let result = f(&items[idx]);
                slots.lock().expect("worker panicked while holding the lock")[idx] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked while holding the lock")
        .into_iter()
        .map(|slot| slot.expect("every index was filled"))
        .collect()
}

/// Makes a string safe as a single path component; appends a short content
/// hash whenever sanitization changed anything, to keep names collision-free.
fn sanitize_component(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if cleaned == s && !cleaned.is_empty() {
        cleaned
    } else {
        let digest = Sha256::digest(s.as_bytes());
        let tag: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        format!("{cleaned}-{tag}")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Validation(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_batch(path: &Path) -> Result<Vec<Question>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_batch(&raw).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// prepare-store
// ---------------------------------------------------------------------------

/// Builds the example store from a training batch and writes it to `out_path`.
pub fn cmd_prepare_store(
    train_path: &Path,
    client: &EmbeddingClient,
    out_path: &Path,
) -> Result<BuildReport> {
    let questions = read_batch(train_path)?;
    let (store, report) = build_store(&questions, client)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    store.save(out_path)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// One model's recorded outcome for one question, persisted as a small JSON
/// file so interrupted runs resume without re-querying.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PersistedAnswer {
    question_id: String,
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<TypedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn answer_path(answers_dir: &Path, model: &str, question_id: &str) -> PathBuf {
    answers_dir
        .join(sanitize_component(model))
        .join(format!("{}.json", sanitize_component(question_id)))
}

fn persist_outcome(
    answers_dir: &Path,
    model: &str,
    question_id: &str,
    outcome: &AnswerOutcome,
) -> Result<()> {
    let record = match outcome {
        AnswerOutcome::Answered { answer, raw } => PersistedAnswer {
            question_id: question_id.to_owned(),
            model: model.to_owned(),
            raw: Some(raw.clone()),
            answer: Some(answer.clone()),
            error: None,
        },
        AnswerOutcome::Unanswered { reason, raw } => PersistedAnswer {
            question_id: question_id.to_owned(),
            model: model.to_owned(),
            raw: raw.clone(),
            answer: None,
            error: Some(reason.clone()),
        },
    };
    let mut bytes = serde_json::to_vec_pretty(&record).expect("answer serialization cannot fail");
    bytes.push(b'\n');
    write_atomic(&answer_path(answers_dir, model, question_id), &bytes)
}

/// Loads a previously persisted outcome, if present and intact.
fn load_outcome(
    answers_dir: &Path,
    model: &str,
    question: &Question,
) -> Option<AnswerOutcome> {
    let path = answer_path(answers_dir, model, &question.id);
    let raw = fs::read(&path).ok()?;
    let record: PersistedAnswer = serde_json::from_slice(&raw).ok()?;
    if record.question_id != question.id || record.model != model {
        return None;
    }
    match (record.answer, record.error) {
        (Some(answer), None) => {
            if answer.qtype() != question.qtype || answer.validate().is_err() {
                return None;
            }
            Some(AnswerOutcome::Answered {
                answer,
                raw: record.raw.unwrap_or_default(),
            })
        }
        (None, Some(reason)) => Some(AnswerOutcome::Unanswered {
            reason,
            raw: record.raw,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnansweredRecord {
    pub question_id: String,
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedQuestion {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub questions: usize,
    pub entries: usize,
    pub unanswered: Vec<UnansweredRecord>,
    pub skipped: Vec<SkippedQuestion>,
    pub submission_path: PathBuf,
}

/// Per-question audit record for the diagnostics file.
#[derive(Debug, Clone, Serialize)]
struct Diagnostic {
    question_id: String,
    qtype: QuestionType,
    #[serde(skip_serializing_if = "Option::is_none")]
    votes: Option<BTreeMap<String, YesNoAnswer>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tally: Option<Vec<TallyEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fused: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    unanswered_models: Vec<String>,
}

enum Prepared {
    Ready {
        snippets: Vec<Snippet>,
        examples: Vec<ExampleRecord>,
    },
    Skipped(String),
}

fn load_store_if_needed(
    config: &RunConfig,
    questions: &[Question],
    client: &EmbeddingClient,
) -> Result<Option<ExampleStore>> {
    let needed = questions
        .iter()
        .any(|q| config.shots.shots(q.qtype) > 0);
    if !needed {
        return Ok(None);
    }
    let store_path = config.paths.store.as_ref().ok_or_else(|| {
        Error::Config(
            "the shot policy requires in-context examples but no store path is configured".into(),
        )
    })?;
    let store = ExampleStore::load(store_path)?;
    store.check_compatible(client)?;
    Ok(Some(store))
}

fn templates_for(config: &RunConfig) -> Result<TemplateSet> {
    match &config.template_dir {
        Some(dir) => TemplateSet::with_override_dir(dir),
        None => Ok(TemplateSet::default()),
    }
}

/// Runs the full pipeline for the configured batch: snippet selection,
/// example retrieval, prompting, per-model querying (resuming from any
/// persisted answers), fusion or summary selection, and submission output.
pub fn cmd_run(config: &RunConfig) -> Result<RunReport> {
    // Startup validation: providers build (fixture files load, auth
    // variables resolve) before the batch is read or any call is made.
    let providers: Vec<(String, Box<dyn ChatProvider>)> = config
        .models
        .iter()
        .map(|spec| spec.build().map(|p| (spec.name.clone(), p)))
        .collect::<Result<_>>()?;
    let embedding_client = config.embedding.build()?;
    let scorer = config.scorer.build()?;
    let templates = templates_for(config)?;

    let questions = read_batch(&config.paths.batch)?;
    let store = load_store_if_needed(config, &questions, &embedding_client)?;

    // Phase A: per-question context preparation.
    let prepared: Vec<Result<Prepared>> = parallel_map(&questions, config.parallelism, |question| {
        if question.snippets.is_empty() {
            return Ok(Prepared::Skipped("question has no snippets".into()));
        }
        let snippets = select_top_snippets(question, config.snippet_k, &embedding_client)?;
        let examples = match &store {
            Some(store) if config.shots.shots(question.qtype) > 0 => {
                query_examples(question, store, &config.shots, &embedding_client)?
            }
            _ => Vec::new(),
        };
        Ok(Prepared::Ready { snippets, examples })
    });
    let mut contexts: Vec<Prepared> = Vec::with_capacity(prepared.len());
    for result in prepared {
        contexts.push(result?);
    }

    // Phase B: per (question, model) completion, skipping persisted answers.
    let answers_dir = config.paths.out_dir.join("answers");
    let mut outcomes: Vec<BTreeMap<String, AnswerOutcome>> =
        (0..questions.len()).map(|_| BTreeMap::new()).collect();
    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for (qi, question) in questions.iter().enumerate() {
        if !matches!(contexts[qi], Prepared::Ready { .. }) {
            continue;
        }
        for (mi, (model, _)) in providers.iter().enumerate() {
            match load_outcome(&answers_dir, model, question) {
                Some(outcome) => {
                    outcomes[qi].insert(model.clone(), outcome);
                }
                None => tasks.push((qi, mi)),
            }
        }
    }
    let task_results: Vec<Result<(usize, usize, AnswerOutcome)>> =
        parallel_map(&tasks, config.parallelism, |&(qi, mi)| {
            let question = &questions[qi];
            let (model, provider) = &providers[mi];
            let Prepared::Ready { snippets, examples } = &contexts[qi] else {
                unreachable!("tasks are only created for ready questions");
            };
            let outcome =
                answer_question(question, snippets, examples, provider.as_ref(), &templates)?;
            persist_outcome(&answers_dir, model, &question.id, &outcome)?;
            Ok((qi, mi, outcome))
        });
    for result in task_results {
        let (qi, mi, outcome) = result?;
        outcomes[qi].insert(providers[mi].0.clone(), outcome);
    }

    // Fusion phase, sequential in batch order.
    let fused = fuse_phase(config, &questions, &contexts, &outcomes, scorer.as_ref())?;
    let submission_path = config.paths.out_dir.join("submission.json");
    write_atomic(&submission_path, &write_submission(&fused.entries)?)?;
    write_atomic(&config.paths.out_dir.join("diagnostics.jsonl"), &fused.diagnostics)?;

    Ok(RunReport {
        questions: questions.len(),
        entries: fused.entries.len(),
        unanswered: fused.unanswered,
        skipped: fused.skipped,
        submission_path,
    })
}

struct FusedBatch {
    entries: Vec<SubmissionEntry>,
    diagnostics: Vec<u8>,
    unanswered: Vec<UnansweredRecord>,
    skipped: Vec<SkippedQuestion>,
}

fn fuse_phase(
    config: &RunConfig,
    questions: &[Question],
    contexts: &[Prepared],
    outcomes: &[BTreeMap<String, AnswerOutcome>],
    scorer: &dyn crate::summary::SummaryScorer,
) -> Result<FusedBatch> {
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    let mut unanswered = Vec::new();
    let mut skipped = Vec::new();

    for (qi, question) in questions.iter().enumerate() {
        if let Prepared::Skipped(reason) = &contexts[qi] {
            log::warn!("skipping {}: {reason}", question.id);
            skipped.push(SkippedQuestion {
                question_id: question.id.clone(),
                reason: reason.clone(),
            });
            continue;
        }
        let mut answered: Vec<(String, TypedAnswer)> = Vec::new();
        let mut unanswered_models: Vec<String> = Vec::new();
        // Priority order keeps downstream tie-breaks well-defined.
        for model in &config.ensemble.model_priority {
            match outcomes[qi].get(model) {
                Some(AnswerOutcome::Answered { answer, .. }) => {
                    answered.push((model.clone(), answer.clone()));
                }
                Some(AnswerOutcome::Unanswered { reason, .. }) => {
                    unanswered.push(UnansweredRecord {
                        question_id: question.id.clone(),
                        model: model.clone(),
                        reason: reason.clone(),
                    });
                    unanswered_models.push(model.clone());
                }
                None => {}
            }
        }
        if answered.is_empty() {
            log::warn!("skipping {}: no model produced a valid answer", question.id);
            skipped.push(SkippedQuestion {
                question_id: question.id.clone(),
                reason: "no model produced a valid answer".into(),
            });
            continue;
        }

        let mut diagnostic = Diagnostic {
            question_id: question.id.clone(),
            qtype: question.qtype,
            votes: None,
            tally: None,
            threshold: None,
            scores: None,
            selected_model: None,
            fused: None,
            unanswered_models,
        };

        let entry = match question.qtype {
            QuestionType::Summary => {
                let candidates: Vec<(String, String)> = answered
                    .iter()
                    .map(|(model, answer)| match answer {
                        TypedAnswer::Summary { summary } => (model.clone(), summary.clone()),
                        _ => unreachable!("fuse_phase answers match the question type"),
                    })
                    .collect();
                let pairs: Vec<(&str, &str)> = candidates
                    .iter()
                    .map(|(_, s)| (question.body.as_str(), s.as_str()))
                    .collect();
                let scores = scorer.score_pairs(&pairs)?;
                diagnostic.scores = Some(
                    candidates
                        .iter()
                        .zip(&scores)
                        .map(|((model, _), score)| (model.clone(), *score))
                        .collect(),
                );
                let (model, summary) = select_best(
                    &question.body,
                    &candidates,
                    scorer,
                    &config.ensemble.model_priority,
                )?;
                if summary.split_whitespace().count() > 50 {
                    log::warn!(
                        "{}: selected summary from {model} exceeds the 50-word instruction",
                        question.id
                    );
                }
                diagnostic.selected_model = Some(model);
                diagnostic.fused = Some(serde_json::Value::String(summary.clone()));
                SubmissionEntry {
                    id: question.id.clone(),
                    exact_answer: None,
                    ideal_answer: summary,
                    qtype: Some(question.qtype),
                }
            }
            QuestionType::YesNo => {
                let fused_answer = fuse(question.qtype, &answered, &config.ensemble)?;
                let TypedAnswer::YesNo { answer } = &fused_answer else {
                    unreachable!("yes/no fusion returns a yes/no answer");
                };
                diagnostic.votes = Some(
                    answered
                        .iter()
                        .map(|(model, a)| match a {
                            TypedAnswer::YesNo { answer } => (model.clone(), *answer),
                            _ => unreachable!(),
                        })
                        .collect(),
                );
                diagnostic.fused = Some(serde_json::Value::String(answer.as_str().into()));
                SubmissionEntry {
                    id: question.id.clone(),
                    exact_answer: Some(ExactAnswer::YesNo(*answer)),
                    ideal_answer: String::new(),
                    qtype: Some(question.qtype),
                }
            }
            QuestionType::Factoid | QuestionType::List => {
                let lists: Vec<(String, Vec<String>)> = answered
                    .iter()
                    .map(|(model, a)| (model.clone(), a.entities().expect("type checked").to_vec()))
                    .collect();
                diagnostic.tally = Some(tally(&lists, &config.ensemble)?.entries);
                diagnostic.threshold = Some(config.ensemble.threshold);
                let fused_answer = fuse(question.qtype, &answered, &config.ensemble)?;
                let entities = fused_answer.entities().expect("entity fusion").to_vec();
                diagnostic.fused = Some(serde_json::json!(entities));
                SubmissionEntry {
                    id: question.id.clone(),
                    exact_answer: Some(ExactAnswer::Entities(
                        entities.into_iter().map(|e| vec![e]).collect(),
                    )),
                    ideal_answer: String::new(),
                    qtype: Some(question.qtype),
                }
            }
        };
        entries.push(entry);
        serde_json::to_writer(&mut diagnostics, &diagnostic)
            .expect("diagnostic serialization cannot fail");
        diagnostics.push(b'\n');
    }

    Ok(FusedBatch {
        entries,
        diagnostics,
        unanswered,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// fuse (re-fusion from persisted answers)
// ---------------------------------------------------------------------------

/// Re-runs fusion and summary selection from the per-model answers persisted
/// by an earlier run, without querying any model. Supports threshold sweeps.
pub fn cmd_fuse(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    let scorer = config.scorer.build()?;
    let questions = read_batch(&config.paths.batch)?;
    let answers_dir = config.paths.out_dir.join("answers");

    let mut contexts: Vec<Prepared> = Vec::with_capacity(questions.len());
    let mut outcomes: Vec<BTreeMap<String, AnswerOutcome>> =
        (0..questions.len()).map(|_| BTreeMap::new()).collect();
    for (qi, question) in questions.iter().enumerate() {
        let mut found = BTreeMap::new();
        for model in &config.ensemble.model_priority {
            if let Some(outcome) = load_outcome(&answers_dir, model, question) {
                found.insert(model.clone(), outcome);
            }
        }
        if found.is_empty() {
            contexts.push(Prepared::Skipped(format!(
                "no persisted answers under {}",
                answers_dir.display()
            )));
        } else {
            contexts.push(Prepared::Ready {
                snippets: Vec::new(),
                examples: Vec::new(),
            });
            outcomes[qi] = found;
        }
    }

    let fused = fuse_phase(config, &questions, &contexts, &outcomes, scorer.as_ref())?;
    let submission_path = out_dir.join("submission.json");
    write_atomic(&submission_path, &write_submission(&fused.entries)?)?;
    write_atomic(&out_dir.join("diagnostics.jsonl"), &fused.diagnostics)?;

    Ok(RunReport {
        questions: questions.len(),
        entries: fused.entries.len(),
        unanswered: fused.unanswered,
        skipped: fused.skipped,
        submission_path,
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn require_gold<'q>(question: &'q Question) -> Result<&'q GoldAnswer> {
    question
        .gold
        .as_ref()
        .filter(|g| g.matches(question.qtype))
        .ok_or_else(|| {
            Error::Validation(format!(
                "gold file: question {} has no gold answer for type {}",
                question.id, question.qtype
            ))
        })
}

/// Scores a submission against a gold batch file and builds the full report.
pub fn cmd_evaluate(submission_path: &Path, gold_path: &Path) -> Result<EvalReport> {
    let gold_questions = read_batch(gold_path)?;
    let submission_raw = fs::read(submission_path).map_err(|e| Error::io(submission_path, e))?;
    let entries = parse_submission(&submission_raw)?;

    let by_id: BTreeMap<&str, &SubmissionEntry> =
        entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let gold_ids: Vec<&str> = gold_questions.iter().map(|q| q.id.as_str()).collect();
    let missing: Vec<&str> = gold_ids
        .iter()
        .filter(|id| !by_id.contains_key(**id))
        .copied()
        .collect();
    let gold_id_set: std::collections::BTreeSet<&str> = gold_ids.iter().copied().collect();
    let extra: Vec<&str> = entries
        .iter()
        .map(|e| e.id.as_str())
        .filter(|id| !gold_id_set.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("submission lacks [{}]", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("submission has unknown [{}]", extra.join(", ")));
        }
        return Err(Error::IdMismatch(parts.join("; ")));
    }

    let mut yesno_preds = BTreeMap::new();
    let mut yesno_golds = BTreeMap::new();
    let mut factoid_preds = BTreeMap::new();
    let mut factoid_golds = BTreeMap::new();
    let mut list_preds = BTreeMap::new();
    let mut list_golds = BTreeMap::new();
    let mut summary_preds = BTreeMap::new();
    let mut summary_golds = BTreeMap::new();
    let mut counts = TypeCounts::default();

    for question in &gold_questions {
        let entry = by_id[question.id.as_str()];
        let gold = require_gold(question)?;
        let id = question.id.clone();
        match question.qtype {
            QuestionType::YesNo => {
                counts.yesno += 1;
                let Some(ExactAnswer::YesNo(pred)) = &entry.exact_answer else {
                    return Err(Error::Validation(format!(
                        "entry {id}: yes/no question requires a yes/no exact_answer"
                    )));
                };
                yesno_preds.insert(id.clone(), *pred);
                yesno_golds.insert(id, gold.yesno_value.expect("matched gold"));
            }
            QuestionType::Factoid => {
                counts.factoid += 1;
                let Some(ExactAnswer::Entities(groups)) = &entry.exact_answer else {
                    return Err(Error::Validation(format!(
                        "entry {id}: factoid question requires an entity-list exact_answer"
                    )));
                };
                factoid_preds.insert(id.clone(), groups.clone());
                factoid_golds.insert(id, gold.factoid_synonyms.clone().expect("matched gold"));
            }
            QuestionType::List => {
                counts.list += 1;
                let Some(ExactAnswer::Entities(groups)) = &entry.exact_answer else {
                    return Err(Error::Validation(format!(
                        "entry {id}: list question requires an entity-list exact_answer"
                    )));
                };
                list_preds.insert(id.clone(), groups.clone());
                list_golds.insert(id, gold.list_groups.clone().expect("matched gold"));
            }
            QuestionType::Summary => {
                counts.summary += 1;
                summary_preds.insert(id.clone(), entry.ideal_answer.clone());
                summary_golds.insert(id, gold.ideal_answers.clone().expect("matched gold"));
            }
        }
    }

    Ok(EvalReport {
        yesno: if yesno_golds.is_empty() {
            None
        } else {
            Some(eval_yesno(&yesno_preds, &yesno_golds)?)
        },
        factoid: if factoid_golds.is_empty() {
            None
        } else {
            Some(eval_factoid(&factoid_preds, &factoid_golds)?)
        },
        list: if list_golds.is_empty() {
            None
        } else {
            Some(eval_list(&list_preds, &list_golds)?)
        },
        summary: if summary_golds.is_empty() {
            None
        } else {
            Some(eval_summary(&summary_preds, &summary_golds)?)
        },
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_keeps_safe_names_and_tags_unsafe_ones() {
        assert_eq!(sanitize_component("gpt-4.1"), "gpt-4.1");
        assert_eq!(sanitize_component("55031181e9bde69634000014"), "55031181e9bde69634000014");
        let tagged = sanitize_component("model/with:odd chars");
        assert!(tagged.starts_with("model_with_odd_chars-"));
        assert_ne!(sanitize_component("a/b"), sanitize_component("a:b"));
    }

    #[test]
    fn parallel_map_preserves_input_order() {
        let items: Vec<usize> = (0..100).collect();
        for parallelism in [1, 4, 16] {
            let doubled = parallel_map(&items, parallelism, |&x| x * 2);
            assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn write_atomic_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/file.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert!(!path.with_file_name("file.json.tmp").exists());
    }

    #[test]
    fn persisted_outcomes_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let question = Question {
            id: "q1".into(),
            body: "b".into(),
            qtype: QuestionType::YesNo,
            snippets: vec![],
            gold: None,
        };
        let outcome = AnswerOutcome::Answered {
            answer: TypedAnswer::YesNo { answer: YesNoAnswer::Yes },
            raw: r#"{"answer":"yes"}"#.into(),
        };
        persist_outcome(dir.path(), "m1", "q1", &outcome).unwrap();
        assert_eq!(load_outcome(dir.path(), "m1", &question), Some(outcome));

        let failure = AnswerOutcome::Unanswered { reason: "schema violation twice".into(), raw: None };
        persist_outcome(dir.path(), "m1", "q1", &failure).unwrap();
        assert_eq!(load_outcome(dir.path(), "m1", &question), Some(failure));
    }

    #[test]
    fn mismatched_persisted_type_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = AnswerOutcome::Answered {
            answer: TypedAnswer::Factoid { entities: vec!["x".into()] },
            raw: String::new(),
        };
        persist_outcome(dir.path(), "m1", "q1", &outcome).unwrap();
        let question = Question {
            id: "q1".into(),
            body: "b".into(),
            qtype: QuestionType::YesNo,
            snippets: vec![],
            gold: None,
        };
        assert_eq!(load_outcome(dir.path(), "m1", &question), None);
    }
}
