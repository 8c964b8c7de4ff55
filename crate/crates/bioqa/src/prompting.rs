//! Prompt rendering: per-type system and instruction templates, numbered
//! snippet blocks, and optional in-context example blocks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{Question, QuestionType, Snippet};
use crate::error::{Error, Result};
use crate::fewshot::ExampleRecord;
use crate::gateway;

const SYSTEM_EXACT: &str = "You are a biomedical AI expert specializing in question answering, research, and entity extraction.";

const SYSTEM_IDEAL: &str = "You are an expert in the medical texts summarization. Answer the given question with a single paragraph text and your answer should be based on the provided context snippets. You should generate your response in at most 2-3 sentences (30-50 words).";

const INSTRUCTION_YESNO: &str = "Given only the following SNIPPETS and QUESTION, answer the QUESTION only with ’Yes’ or ’No’.";

const INSTRUCTION_FACTOID: &str = "Extract key biomedical entities **strictly using the provided SNIPPETS** to answer the QUESTION. List **1 to 5** of the most relevant entities, ranked by confidence. **Never exceed 5 entities.** If more exist, return only the top 5. Prefer concise entities and **remove redundant or longer variants** of the same term. If no relevant entities exist, return `None.`.";

const INSTRUCTION_LIST: &str = "Extract key biomedical entities **strictly using the provided SNIPPETS** to answer the QUESTION. List **1 to 5** of the most relevant entities. Prefer concise entities and **remove redundant or longer variants** of the same term. If no relevant entities exist, return `None`.";

const INSTRUCTION_SUMMARY: &str = "Answer the QUESTION by returning a single paragraph sized text (use max 50 words) ideally summarizing only the most relevant information in the SNIPPETS.";

/// The built-in per-type instruction texts, byte-exact.
pub fn template_catalog() -> BTreeMap<QuestionType, &'static str> {
    BTreeMap::from([
        (QuestionType::YesNo, INSTRUCTION_YESNO),
        (QuestionType::Factoid, INSTRUCTION_FACTOID),
        (QuestionType::List, INSTRUCTION_LIST),
        (QuestionType::Summary, INSTRUCTION_SUMMARY),
    ])
}

/// Instruction templates in effect for a run: the built-ins, optionally
/// overridden per type from a directory of text files.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    instructions: BTreeMap<QuestionType, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            instructions: template_catalog()
                .into_iter()
                .map(|(k, v)| (k, v.to_owned()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Applies overrides from `dir`: a file named `<type>.txt` (e.g.
    /// `factoid.txt`) replaces that type's instruction. A single trailing
    /// newline is stripped.
    pub fn with_override_dir(dir: &Path) -> Result<Self> {
        let mut set = TemplateSet::default();
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for qtype in QuestionType::ALL {
            let path = dir.join(format!("{qtype}.txt"));
            if path.exists() {
                let mut text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                if text.ends_with('\n') {
                    text.pop();
                    if text.ends_with('\r') {
                        text.pop();
                    }
                }
                if text.is_empty() {
                    return Err(Error::Config(format!(
                        "template override {} is empty",
                        path.display()
                    )));
                }
                set.instructions.insert(qtype, text);
            }
        }
        Ok(set)
    }

    pub fn instruction(&self, qtype: QuestionType) -> &str {
        self.instructions
            .get(&qtype)
            .expect("all four types are always present")
    }
}

/// System and user message pair ready to send to a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
}

fn system_text_for(qtype: QuestionType) -> &'static str {
    match qtype {
        QuestionType::Summary => SYSTEM_IDEAL,
        _ => SYSTEM_EXACT,
    }
}

/// Renders the prompt for one question: optional EXAMPLE blocks (most
/// similar first, as given), the type's instruction, a numbered SNIPPETS
/// block in the given order, and the QUESTION. Deterministic.
pub fn render(
    question: &Question,
    snippets: &[Snippet],
    examples: &[ExampleRecord],
    templates: &TemplateSet,
) -> Result<PromptBundle> {
    if snippets.is_empty() {
        return Err(Error::Validation(format!(
            "question {}: cannot render a prompt without snippets",
            question.id
        )));
    }
    if !examples.is_empty()
        && !matches!(question.qtype, QuestionType::Factoid | QuestionType::List)
    {
        return Err(Error::Validation(format!(
            "question {}: {} prompts do not take in-context examples",
            question.id, question.qtype
        )));
    }

    let mut user = String::new();
    for (i, example) in examples.iter().enumerate() {
        let example_snippets = example.context_text[example.question_text.len()..]
            .trim_start_matches('\n');
        user.push_str(&format!("EXAMPLE {}:\n", i + 1));
        user.push_str("SNIPPETS:\n");
        user.push_str(example_snippets);
        user.push_str("\nQUESTION:\n");
        user.push_str(&example.question_text);
        user.push_str("\nANSWER:\n");
        user.push_str(&gateway::gold_answer_text(&example.gold, example.qtype)?);
        user.push_str("\n\n");
    }

    user.push_str(templates.instruction(question.qtype));
    user.push_str("\n\nSNIPPETS:\n");
    for (i, snippet) in snippets.iter().enumerate() {
        user.push_str(&format!("{}. {}\n", i + 1, snippet.text));
    }
    user.push_str("\nQUESTION:\n");
    user.push_str(&question.body);

    Ok(PromptBundle {
        system_text: system_text_for(question.qtype).to_owned(),
        user_text: user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GoldAnswer;
    use crate::retrieval::mock_embedding;

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

    fn question(qtype: QuestionType) -> Question {
        Question {
            id: "q1".into(),
            body: "What is the target of trastuzumab?".into(),
            qtype,
            snippets: vec![snippet("Trastuzumab binds HER2.")],
            gold: None,
        }
    }

    fn example_record(i: usize) -> ExampleRecord {
        let question_text = format!("Past question {i}?");
        ExampleRecord {
            id: format!("p{i}"),
            qtype: QuestionType::Factoid,
            question_text: question_text.clone(),
            context_text: format!("{question_text}\nPast snippet one.\nPast snippet two."),
            embedding: mock_embedding("x"),
            gold: GoldAnswer {
                factoid_synonyms: Some(vec![format!("entity {i}")]),
                ..GoldAnswer::default()
            },
        }
    }

    #[test]
    fn yesno_render_contains_verbatim_instruction() {
        let q = question(QuestionType::YesNo);
        let bundle = render(&q, &q.snippets, &[], &TemplateSet::default()).unwrap();
        assert!(bundle
            .user_text
            .contains("answer the QUESTION only with ’Yes’ or ’No’"));
        assert_eq!(bundle.system_text, SYSTEM_EXACT);
    }

    #[test]
    fn summary_render_contains_word_limits() {
        let q = question(QuestionType::Summary);
        let bundle = render(&q, &q.snippets, &[], &TemplateSet::default()).unwrap();
        assert!(bundle.user_text.contains("use max 50 words"));
        assert!(bundle.system_text.contains("at most 2-3 sentences (30-50 words)"));
    }

    #[test]
    fn factoid_render_places_three_examples_before_instruction() {
        let q = question(QuestionType::Factoid);
        let examples: Vec<ExampleRecord> = (0..3).map(example_record).collect();
        let bundle = render(&q, &q.snippets, &examples, &TemplateSet::default()).unwrap();
        assert_eq!(bundle.user_text.matches("EXAMPLE ").count(), 3);
        let instruction_at = bundle.user_text.find("Extract key biomedical entities").unwrap();
        let last_example_at = bundle.user_text.find("EXAMPLE 3:").unwrap();
        assert!(last_example_at < instruction_at);
        // Blocks appear in the given (descending-similarity) order.
        assert!(bundle.user_text.find("EXAMPLE 1:").unwrap() < bundle.user_text.find("EXAMPLE 2:").unwrap());
        assert!(bundle.user_text.contains("ANSWER:\n{\"entities\":[\"entity 0\"]}"));
    }

    #[test]
    fn snippets_are_numbered_in_given_order() {
        let q = question(QuestionType::List);
        let snippets = vec![snippet("most similar"), snippet("second"), snippet("third")];
        let bundle = render(&q, &snippets, &[], &TemplateSet::default()).unwrap();
        let block = format!(
            "SNIPPETS:\n1. most similar\n2. second\n3. third\n\nQUESTION:\n{}",
            q.body
        );
        assert!(bundle.user_text.ends_with(&block), "{}", bundle.user_text);
    }

    #[test]
    fn empty_snippets_error() {
        let q = question(QuestionType::YesNo);
        assert!(render(&q, &[], &[], &TemplateSet::default()).is_err());
    }

    #[test]
    fn examples_rejected_for_yesno() {
        let q = question(QuestionType::YesNo);
        let examples = vec![example_record(0)];
        assert!(render(&q, &q.snippets, &examples, &TemplateSet::default()).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let q = question(QuestionType::Factoid);
        let examples: Vec<ExampleRecord> = (0..2).map(example_record).collect();
        let a = render(&q, &q.snippets, &examples, &TemplateSet::default()).unwrap();
        let b = render(&q, &q.snippets, &examples, &TemplateSet::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn catalog_has_exactly_four_entries_with_anchors() {
        let catalog = template_catalog();
        assert_eq!(catalog.len(), 4);
        assert!(catalog[&QuestionType::Factoid].contains("ranked by confidence"));
        assert!(catalog[&QuestionType::Factoid].contains("**Never exceed 5 entities.**"));
        assert!(catalog[&QuestionType::List].contains("List **1 to 5** of the most relevant entities"));
        assert!(catalog[&QuestionType::Summary].contains("use max 50 words"));
    }

    #[test]
    fn override_dir_replaces_only_named_types() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("factoid.txt"), "Custom factoid instruction.\n").unwrap();
        let set = TemplateSet::with_override_dir(dir.path()).unwrap();
        assert_eq!(set.instruction(QuestionType::Factoid), "Custom factoid instruction.");
        assert_eq!(set.instruction(QuestionType::YesNo), INSTRUCTION_YESNO);
    }
}
