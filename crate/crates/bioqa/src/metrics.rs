//! Challenge evaluation suite: yes/no accuracy and macro-F1, factoid
//! strict/lenient accuracy and MRR, list precision/recall/F1, and ROUGE-2 /
//! ROUGE-SU4 for summaries.
//!
//! Matching uses `canonical_form` only; ROUGE uses no stemming or stopword
//! removal. Per-question terms are reduced in question-id order.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::{canonical_form, YesNoAnswer};
use crate::error::{Error, Result};

fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_alignment<A, B>(preds: &BTreeMap<String, A>, golds: &BTreeMap<String, B>) -> Result<()> {
    let missing: Vec<&str> = golds
        .keys()
        .filter(|id| !preds.contains_key(*id))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = preds
        .keys()
        .filter(|id| !golds.contains_key(*id))
        .map(String::as_str)
        .collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing predictions for [{}]", missing.join(", ")));
    }
    if !extra.is_empty() {
        parts.push(format!("predictions without gold for [{}]", extra.join(", ")));
    }
    Err(Error::IdMismatch(parts.join("; ")))
}

// ---------------------------------------------------------------------------
// Yes/no
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YesNoMetrics {
    #[serde(rename = "Accuracy")]
    pub accuracy: f64,
    #[serde(rename = "F1 Yes")]
    pub f1_yes: f64,
    #[serde(rename = "F1 No")]
    pub f1_no: f64,
    #[serde(rename = "Macro F1")]
    pub macro_f1: f64,
}

fn class_f1(pairs: &[(YesNoAnswer, YesNoAnswer)], positive: YesNoAnswer) -> f64 {
    let tp = pairs.iter().filter(|(p, g)| *p == positive && *g == positive).count() as f64;
    let fp = pairs.iter().filter(|(p, g)| *p == positive && *g != positive).count() as f64;
    let fn_ = pairs.iter().filter(|(p, g)| *p != positive && *g == positive).count() as f64;
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let recall = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    harmonic_f1(precision, recall)
}

/// Accuracy plus per-class F1 (a class with no predicted and no gold
/// instances scores 0) and their macro average.
pub fn eval_yesno(
    preds: &BTreeMap<String, YesNoAnswer>,
    golds: &BTreeMap<String, YesNoAnswer>,
) -> Result<YesNoMetrics> {
    check_alignment(preds, golds)?;
    if golds.is_empty() {
        return Err(Error::Validation("no yes/no questions to evaluate".into()));
    }
    let pairs: Vec<(YesNoAnswer, YesNoAnswer)> =
        golds.iter().map(|(id, gold)| (preds[id], *gold)).collect();
    let correct = pairs.iter().filter(|(p, g)| p == g).count() as f64;
    let f1_yes = class_f1(&pairs, YesNoAnswer::Yes);
    let f1_no = class_f1(&pairs, YesNoAnswer::No);
    Ok(YesNoMetrics {
        accuracy: correct / pairs.len() as f64,
        f1_yes,
        f1_no,
        macro_f1: (f1_yes + f1_no) / 2.0,
    })
}

// ---------------------------------------------------------------------------
// Factoid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactoidMetrics {
    #[serde(rename = "Strict Acc.")]
    pub strict_accuracy: f64,
    #[serde(rename = "Lenient Acc.")]
    pub lenient_accuracy: f64,
    #[serde(rename = "MRR")]
    pub mrr: f64,
}

fn entity_matches(entity: &[String], synonyms: &[String]) -> bool {
    entity
        .iter()
        .any(|form| synonyms.iter().any(|s| canonical_form(s) == canonical_form(form)))
}

/// Strict accuracy (rank 1 correct), lenient accuracy (any correct rank), and
/// mean reciprocal rank over ranked entity predictions. Each prediction is a
/// synonym list; it is correct when any form matches any gold synonym.
pub fn eval_factoid(
    preds: &BTreeMap<String, Vec<Vec<String>>>,
    golds: &BTreeMap<String, Vec<String>>,
) -> Result<FactoidMetrics> {
    check_alignment(preds, golds)?;
    if golds.is_empty() {
        return Err(Error::Validation("no factoid questions to evaluate".into()));
    }
    let mut strict = 0usize;
    let mut lenient = 0usize;
    let mut reciprocal_sum = 0.0;
    for (id, synonyms) in golds {
        let ranked = &preds[id];
        if ranked.len() > crate::corpus::FACTOID_ENTITY_CAP {
            return Err(Error::Validation(format!(
                "question {id}: factoid prediction has {} entities (cap is {})",
                ranked.len(),
                crate::corpus::FACTOID_ENTITY_CAP
            )));
        }
        let first_correct = ranked.iter().position(|entity| entity_matches(entity, synonyms));
        if let Some(rank0) = first_correct {
            if rank0 == 0 {
                strict += 1;
            }
            lenient += 1;
            reciprocal_sum += 1.0 / (rank0 as f64 + 1.0);
        }
    }
    let total = golds.len() as f64;
    Ok(FactoidMetrics {
        strict_accuracy: strict as f64 / total,
        lenient_accuracy: lenient as f64 / total,
        mrr: reciprocal_sum / total,
    })
}

// ---------------------------------------------------------------------------
// List
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ListMetrics {
    #[serde(rename = "Precision")]
    pub mean_precision: f64,
    #[serde(rename = "Recall")]
    pub mean_recall: f64,
    #[serde(rename = "F-Measure")]
    pub mean_f1: f64,
}

fn try_augment(
    left: usize,
    adjacency: &[Vec<usize>],
    visited: &mut [bool],
    match_right: &mut [Option<usize>],
) -> bool {
    for &right in &adjacency[left] {
        if visited[right] {
            continue;
        }
        visited[right] = true;
        let free = match match_right[right] {
            None => true,
            Some(owner) => try_augment(owner, adjacency, visited, match_right),
        };
        if free {
            match_right[right] = Some(left);
            return true;
        }
    }
    false
}

/// True-positive count: the maximum pairing of predictions to gold groups
/// where each group is consumable once. Independent of gold group order.
fn matched_pairs(preds: &[Vec<String>], groups: &[Vec<String>]) -> usize {
    let adjacency: Vec<Vec<usize>> = preds
        .iter()
        .map(|entity| {
            groups
                .iter()
                .enumerate()
                .filter(|(_, group)| entity_matches(entity, group))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut match_right: Vec<Option<usize>> = vec![None; groups.len()];
    let mut matched = 0usize;
    for left in 0..adjacency.len() {
        let mut visited = vec![false; groups.len()];
        if try_augment(left, &adjacency, &mut visited, &mut match_right) {
            matched += 1;
        }
    }
    matched
}

/// Unweighted mean precision/recall/F1 over questions. A predicted entity is
/// a true positive when it matches a not-yet-consumed gold synonym group.
pub fn eval_list(
    preds: &BTreeMap<String, Vec<Vec<String>>>,
    golds: &BTreeMap<String, Vec<Vec<String>>>,
) -> Result<ListMetrics> {
    check_alignment(preds, golds)?;
    if golds.is_empty() {
        return Err(Error::Validation("no list questions to evaluate".into()));
    }
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for (id, groups) in golds {
        let predicted = &preds[id];
        let tp = matched_pairs(predicted, groups) as f64;
        let precision = if predicted.is_empty() { 0.0 } else { tp / predicted.len() as f64 };
        let recall = if groups.is_empty() { 0.0 } else { tp / groups.len() as f64 };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += harmonic_f1(precision, recall);
    }
    let total = golds.len() as f64;
    Ok(ListMetrics {
        mean_precision: precision_sum / total,
        mean_recall: recall_sum / total,
        mean_f1: f1_sum / total,
    })
}

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

const ZERO_ROUGE: RougeScore = RougeScore {
    recall: 0.0,
    precision: 0.0,
    f1: 0.0,
};

/// Case-folds and splits on non-alphanumeric runs.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<String>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_score<K: std::hash::Hash + Eq>(
    cand: &HashMap<K, usize>,
    refr: &HashMap<K, usize>,
) -> RougeScore {
    let ref_total: usize = refr.values().sum();
    if ref_total == 0 {
        return ZERO_ROUGE;
    }
    let cand_total: usize = cand.values().sum();
    let matched: usize = refr
        .iter()
        .map(|(unit, &rc)| rc.min(cand.get(unit).copied().unwrap_or(0)))
        .sum();
    let recall = matched as f64 / ref_total as f64;
    let precision = if cand_total == 0 {
        0.0
    } else {
        matched as f64 / cand_total as f64
    };
    RougeScore {
        recall,
        precision,
        f1: harmonic_f1(precision, recall),
    }
}

/// N-gram overlap with clipped multiset counts.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    clipped_score(&ngram_counts(&cand, n), &ngram_counts(&refr, n))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum SuUnit {
    Unigram(String),
    SkipBigram(String, String),
}

/// Counting units: unigrams plus ordered skip-bigrams with at most
/// `max_gap` intervening tokens.
fn su_counts(tokens: &[String], max_gap: usize) -> HashMap<SuUnit, usize> {
    let mut counts = HashMap::new();
    for token in tokens {
        *counts.entry(SuUnit::Unigram(token.clone())).or_insert(0) += 1;
    }
    for i in 0..tokens.len() {
        for j in (i + 1)..tokens.len().min(i + max_gap + 2) {
            *counts
                .entry(SuUnit::SkipBigram(tokens[i].clone(), tokens[j].clone()))
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Skip-bigram-with-unigrams overlap, gap at most 4 intervening tokens.
pub fn rouge_su4(candidate: &str, reference: &str) -> RougeScore {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    clipped_score(&su_counts(&cand, 4), &su_counts(&refr, 4))
}

// ---------------------------------------------------------------------------
// Summary aggregation and the full report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryMetrics {
    #[serde(rename = "R-2 (Rec)")]
    pub rouge2_recall: f64,
    #[serde(rename = "R-2 (F1)")]
    pub rouge2_f1: f64,
    #[serde(rename = "R-SU4 (Rec)")]
    pub rougesu4_recall: f64,
    #[serde(rename = "R-SU4 (F1)")]
    pub rougesu4_f1: f64,
}

/// ROUGE-2 and ROUGE-SU4 recall/F1 for generated summaries. Against multiple
/// references, the per-question score is the maximum recall and maximum F1
/// over references; means are taken over questions.
pub fn eval_summary(
    preds: &BTreeMap<String, String>,
    golds: &BTreeMap<String, Vec<String>>,
) -> Result<SummaryMetrics> {
    check_alignment(preds, golds)?;
    if golds.is_empty() {
        return Err(Error::Validation("no summary questions to evaluate".into()));
    }
    let mut totals = [0.0f64; 4];
    for (id, references) in golds {
        if references.is_empty() {
            return Err(Error::Validation(format!(
                "question {id}: no reference ideal answers"
            )));
        }
        let candidate = &preds[id];
        let mut best = [0.0f64; 4];
        for reference in references {
            let r2 = rouge_n(candidate, reference, 2);
            let su4 = rouge_su4(candidate, reference);
            best[0] = best[0].max(r2.recall);
            best[1] = best[1].max(r2.f1);
            best[2] = best[2].max(su4.recall);
            best[3] = best[3].max(su4.f1);
        }
        for (total, value) in totals.iter_mut().zip(best) {
            *total += value;
        }
    }
    let n = golds.len() as f64;
    Ok(SummaryMetrics {
        rouge2_recall: totals[0] / n,
        rouge2_f1: totals[1] / n,
        rougesu4_recall: totals[2] / n,
        rougesu4_f1: totals[3] / n,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TypeCounts {
    pub yesno: usize,
    pub factoid: usize,
    pub list: usize,
    pub summary: usize,
}

/// Per-type metric blocks; a block is present only when its question type
/// occurs in the evaluated set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yesno: Option<YesNoMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factoid: Option<FactoidMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub list: Option<ListMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryMetrics>,
    pub counts: TypeCounts,
}

impl EvalReport {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Aligned text table, one metric per row.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        if let Some(m) = &self.yesno {
            let t = format!("yesno ({})", self.counts.yesno);
            rows.push((t.clone(), "Accuracy".into(), m.accuracy));
            rows.push((t.clone(), "F1 Yes".into(), m.f1_yes));
            rows.push((t.clone(), "F1 No".into(), m.f1_no));
            rows.push((t, "Macro F1".into(), m.macro_f1));
        }
        if let Some(m) = &self.factoid {
            let t = format!("factoid ({})", self.counts.factoid);
            rows.push((t.clone(), "Strict Acc.".into(), m.strict_accuracy));
            rows.push((t.clone(), "Lenient Acc.".into(), m.lenient_accuracy));
            rows.push((t, "MRR".into(), m.mrr));
        }
        if let Some(m) = &self.list {
            let t = format!("list ({})", self.counts.list);
            rows.push((t.clone(), "Precision".into(), m.mean_precision));
            rows.push((t.clone(), "Recall".into(), m.mean_recall));
            rows.push((t, "F-Measure".into(), m.mean_f1));
        }
        if let Some(m) = &self.summary {
            let t = format!("summary ({})", self.counts.summary);
            rows.push((t.clone(), "R-2 (Rec)".into(), m.rouge2_recall));
            rows.push((t.clone(), "R-2 (F1)".into(), m.rouge2_f1));
            rows.push((t.clone(), "R-SU4 (Rec)".into(), m.rougesu4_recall));
            rows.push((t, "R-SU4 (F1)".into(), m.rougesu4_f1));
        }
        let type_width = rows.iter().map(|(t, _, _)| t.len()).max().unwrap_or(4).max(4);
        let metric_width = rows.iter().map(|(_, m, _)| m.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:type_width$}  {:metric_width$}  value\n", "type", "metric");
        for (qtype, metric, value) in rows {
            out.push_str(&format!("{qtype:type_width$}  {metric:metric_width$}  {value:.4}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids<V: Clone>(values: &[V]) -> BTreeMap<String, V> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("q{i}"), v.clone()))
            .collect()
    }

    fn entity(forms: &[&str]) -> Vec<String> {
        forms.iter().map(|s| s.to_string()).collect()
    }

    use YesNoAnswer::{No, Yes};

    #[test]
    fn yesno_all_correct_is_perfect() {
        let golds = ids(&[Yes, No, Yes]);
        let m = eval_yesno(&golds, &golds).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn yesno_hand_computed_confusion() {
        let preds = ids(&[Yes, Yes, No, No]);
        let golds = ids(&[Yes, No, No, No]);
        let m = eval_yesno(&preds, &golds).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-9);
        assert!((m.f1_yes - 2.0 / 3.0).abs() < 1e-9);
        assert!((m.f1_no - 0.8).abs() < 1e-9);
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn yesno_never_predicting_no_zeroes_its_f1() {
        let preds = ids(&[Yes, Yes, Yes, Yes]);
        let golds = ids(&[Yes, Yes, No, No]);
        let m = eval_yesno(&preds, &golds).unwrap();
        assert_eq!(m.f1_no, 0.0);
    }

    #[test]
    fn yesno_id_mismatch_lists_ids() {
        let preds = ids(&[Yes]);
        let mut golds = ids(&[Yes]);
        golds.insert("extra".into(), No);
        let err = eval_yesno(&preds, &golds).unwrap_err();
        match err {
            Error::IdMismatch(msg) => assert!(msg.contains("extra"), "{msg}"),
            other => panic!("expected id mismatch, got {other:?}"),
        }
    }

    #[test]
    fn factoid_hand_computed_ranks() {
        // First-correct ranks: 1, 2, none.
        let preds = ids(&[
            vec![entity(&["CFTR"])],
            vec![entity(&["wrong"]), entity(&["HER2"])],
            vec![entity(&["nothing"])],
        ]);
        let golds = ids(&[
            entity(&["cftr"]),
            entity(&["her2", "erbb2"]),
            entity(&["unfound"]),
        ]);
        let m = eval_factoid(&preds, &golds).unwrap();
        assert!((m.strict_accuracy - 1.0 / 3.0).abs() < 1e-9);
        assert!((m.lenient_accuracy - 2.0 / 3.0).abs() < 1e-9);
        assert!((m.mrr - 0.5).abs() < 1e-9);
    }

    #[test]
    fn factoid_all_rank_one_is_perfect() {
        let preds = ids(&[vec![entity(&["A"])], vec![entity(&["B"])]]);
        let golds = ids(&[entity(&["a"]), entity(&["b"])]);
        let m = eval_factoid(&preds, &golds).unwrap();
        assert_eq!((m.strict_accuracy, m.lenient_accuracy, m.mrr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn factoid_empty_prediction_counts_as_incorrect() {
        let preds = ids(&[vec![], vec![entity(&["A"])]]);
        let golds = ids(&[entity(&["a"]), entity(&["a"])]);
        let m = eval_factoid(&preds, &golds).unwrap();
        assert!((m.strict_accuracy - 0.5).abs() < 1e-9);
        assert!((m.mrr - 0.5).abs() < 1e-9);
    }

    #[test]
    fn factoid_overlong_prediction_is_rejected() {
        let preds = ids(&[(0..6).map(|i| entity(&[&format!("e{i}")])).collect::<Vec<_>>()]);
        let golds = ids(&[entity(&["e0"])]);
        assert!(eval_factoid(&preds, &golds).is_err());
    }

    #[test]
    fn list_hand_computed_example() {
        let preds = ids(&[vec![entity(&["Aspirin"]), entity(&["naproxen"])]]);
        let golds = ids(&[vec![
            entity(&["aspirin", "acetylsalicylic acid"]),
            entity(&["ibuprofen"]),
        ]]);
        let m = eval_list(&preds, &golds).unwrap();
        assert!((m.mean_precision - 0.5).abs() < 1e-9);
        assert!((m.mean_recall - 0.5).abs() < 1e-9);
        assert!((m.mean_f1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn list_one_synonym_per_group_is_perfect() {
        let preds = ids(&[vec![entity(&["rifampin"]), entity(&["isoniazid"])]]);
        let golds = ids(&[vec![
            entity(&["isoniazid"]),
            entity(&["rifampicin", "rifampin"]),
        ]]);
        let m = eval_list(&preds, &golds).unwrap();
        assert_eq!((m.mean_precision, m.mean_recall, m.mean_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn list_group_consumed_once() {
        let preds = ids(&[vec![
            entity(&["aspirin"]),
            entity(&["acetylsalicylic acid"]),
        ]]);
        let golds = ids(&[vec![entity(&["aspirin", "acetylsalicylic acid"])]]);
        let m = eval_list(&preds, &golds).unwrap();
        assert!((m.mean_precision - 0.5).abs() < 1e-9);
        assert!((m.mean_recall - 1.0).abs() < 1e-9);
    }

    #[test]
    fn list_is_invariant_under_gold_group_permutation() {
        // The first prediction matches both groups; consumption must not
        // depend on which group comes first.
        let preds = ids(&[vec![entity(&["a", "b"]), entity(&["a"])]]);
        let golds_forward = ids(&[vec![entity(&["a"]), entity(&["b"])]]);
        let golds_backward = ids(&[vec![entity(&["b"]), entity(&["a"])]]);
        let f = eval_list(&preds, &golds_forward).unwrap();
        let b = eval_list(&preds, &golds_backward).unwrap();
        assert_eq!(f, b);
        assert!((f.mean_recall - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rouge2_identical_texts() {
        let s = rouge_n("the gene encodes a channel", "the gene encodes a channel", 2);
        assert_eq!((s.recall, s.f1), (1.0, 1.0));
    }

    #[test]
    fn rouge2_hand_computed_bigrams() {
        let s = rouge_n("a b d", "a b c", 2);
        assert!((s.recall - 0.5).abs() < 1e-12);
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge2_disjoint_texts() {
        let s = rouge_n("x y z", "a b c", 2);
        assert_eq!((s.recall, s.f1), (0.0, 0.0));
    }

    #[test]
    fn rouge2_empty_reference_ngrams_score_zero() {
        let s = rouge_n("a b c", "single", 2);
        assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rouge_su4_hand_enumerated() {
        // ref units: a, b, c, (a,b), (a,c), (b,c); cand matches a, c, (a,c).
        let s = rouge_su4("a c", "a b c");
        assert!((s.recall - 0.5).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn rouge_su4_identical_and_single_token() {
        let s = rouge_su4("a b c d", "a b c d");
        assert_eq!((s.recall, s.f1), (1.0, 1.0));
        let s = rouge_su4("a", "a");
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn rouge_tokenizer_splits_on_non_alphanumeric() {
        assert_eq!(rouge_tokens("BRCA1-mediated repair, 2nd"), vec!["brca1", "mediated", "repair", "2nd"]);
    }

    #[test]
    fn summary_multi_reference_takes_maxima() {
        let preds = ids(&["alpha beta gamma".to_string()]);
        let golds = ids(&[vec!["alpha beta gamma".to_string(), "unrelated words".to_string()]]);
        let m = eval_summary(&preds, &golds).unwrap();
        assert_eq!(m.rouge2_recall, 1.0);
        assert_eq!(m.rougesu4_f1, 1.0);
    }

    #[test]
    fn report_blocks_follow_type_presence() {
        let report = EvalReport {
            yesno: Some(YesNoMetrics { accuracy: 1.0, f1_yes: 1.0, f1_no: 1.0, macro_f1: 1.0 }),
            factoid: None,
            list: None,
            summary: None,
            counts: TypeCounts { yesno: 2, ..TypeCounts::default() },
        };
        let json: serde_json::Value = serde_json::from_slice(&report.to_json_bytes()).unwrap();
        assert!(json.get("yesno").is_some());
        assert!(json.get("factoid").is_none());
        assert_eq!(json["yesno"]["Macro F1"], 1.0);
        let table = report.render_table();
        assert!(table.contains("Accuracy"));
        assert!(table.contains("1.0000"));
    }

    prop_compose! {
        fn arb_tokens(max_len: usize)(tokens in proptest::collection::vec("[abcd]", 0..max_len)) -> String {
            tokens.join(" ")
        }
    }

    proptest! {
        #[test]
        fn rouge_outputs_are_bounded_and_consistent(cand in arb_tokens(12), refr in arb_tokens(12)) {
            for s in [rouge_n(&cand, &refr, 2), rouge_su4(&cand, &refr)] {
                prop_assert!((0.0..=1.0).contains(&s.recall));
                prop_assert!((0.0..=1.0).contains(&s.precision));
                prop_assert!((0.0..=1.0).contains(&s.f1));
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            }
        }

        #[test]
        fn factoid_bounds_hold(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..6);
            let mut preds = BTreeMap::new();
            let mut golds = BTreeMap::new();
            for i in 0..n {
                let ranked: Vec<Vec<String>> = (0..rng.gen_range(0..5))
                    .map(|_| vec![format!("e{}", rng.gen_range(0..6))])
                    .collect();
                preds.insert(format!("q{i}"), ranked);
                golds.insert(format!("q{i}"), vec![format!("e{}", rng.gen_range(0..6))]);
            }
            let m = eval_factoid(&preds, &golds).unwrap();
            prop_assert!(m.lenient_accuracy >= m.strict_accuracy);
            prop_assert!(m.mrr >= m.strict_accuracy - 1e-12);
            prop_assert!(m.mrr <= m.lenient_accuracy + 1e-12);
            for v in [m.strict_accuracy, m.lenient_accuracy, m.mrr] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
