//! Fuses per-model answers into one answer per question: majority voting for
//! yes/no, frequency-threshold aggregation for factoid and list.
//!
//! All tie-breaks reference only the configured model priority and list
//! positions, never map iteration order, so fusion is invariant under
//! permutation of its input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_form, QuestionType, YesNoAnswer, FACTOID_ENTITY_CAP};
use crate::error::{Error, Result};
use crate::gateway::TypedAnswer;

/// Threshold, caps, and tie-break policy for answer fusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Minimum number of distinct models that must propose an entity.
    #[serde(default = "default_threshold")]
    pub threshold: usize,
    #[serde(default = "default_factoid_cap")]
    pub factoid_cap: usize,
    /// Fused list answers are uncapped unless set.
    #[serde(default)]
    pub list_cap: Option<usize>,
    /// Every participating model, exactly once; decides all tie-breaks and
    /// the fallback order.
    #[serde(default)]
    pub model_priority: Vec<String>,
}

fn default_threshold() -> usize {
    2
}

fn default_factoid_cap() -> usize {
    FACTOID_ENTITY_CAP
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            threshold: default_threshold(),
            factoid_cap: default_factoid_cap(),
            list_cap: None,
            model_priority: Vec::new(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::Config("ensemble threshold must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.model_priority {
            if !seen.insert(name) {
                return Err(Error::Config(format!(
                    "model {name} appears twice in model_priority"
                )));
            }
        }
        Ok(())
    }

    fn priority_index(&self, model: &str) -> Result<usize> {
        self.model_priority
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| {
                Error::Config(format!("model {model} is not listed in model_priority"))
            })
    }

    /// Input pairs reordered by priority (and validated against it).
    fn by_priority<'a, T>(&self, items: &'a [(String, T)]) -> Result<Vec<&'a (String, T)>> {
        let mut indexed: Vec<(usize, &(String, T))> = items
            .iter()
            .map(|item| self.priority_index(&item.0).map(|p| (p, item)))
            .collect::<Result<_>>()?;
        indexed.sort_by_key(|(p, _)| *p);
        Ok(indexed.into_iter().map(|(_, item)| item).collect())
    }
}

/// Chooses the yes/no value backed by strictly more models; an exact tie
/// resolves to the answer of the highest-priority model that answered.
pub fn majority_yesno(votes: &[(String, YesNoAnswer)], cfg: &EnsembleConfig) -> Result<YesNoAnswer> {
    if votes.is_empty() {
        return Err(Error::Validation("majority vote requires at least one answer".into()));
    }
    let ordered = cfg.by_priority(votes)?;
    let yes = ordered.iter().filter(|(_, v)| *v == YesNoAnswer::Yes).count();
    let no = ordered.len() - yes;
    Ok(if yes > no {
        YesNoAnswer::Yes
    } else if no > yes {
        YesNoAnswer::No
    } else {
        ordered[0].1
    })
}

/// Per-entity vote counts over canonical forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteTally {
    pub entries: Vec<TallyEntry>,
    /// Per-model entity lists in priority order; kept for the fallback path.
    #[serde(skip)]
    per_model: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TallyEntry {
    /// Canonical form keying the entity.
    pub canonical: String,
    /// Number of distinct models proposing the entity.
    pub count: usize,
    /// Shortest proposed surface form (earliest seen on length ties).
    pub representative: String,
    /// Position at which the entity first appeared in the
    /// priority-then-list-order scan.
    pub first_rank: usize,
}

/// Counts entity votes. Each model contributes at most one vote per canonical
/// entity regardless of duplicates in its list; the scan runs in model
/// priority order, then list order.
pub fn tally(entity_lists: &[(String, Vec<String>)], cfg: &EnsembleConfig) -> Result<VoteTally> {
    let ordered = cfg.by_priority(entity_lists)?;
    let mut keyed: BTreeMap<String, TallyEntry> = BTreeMap::new();
    let mut next_rank = 0usize;
    for (_model, entities) in ordered.iter() {
        let mut voted: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for entity in entities {
            let canonical = canonical_form(entity);
            if canonical.is_empty() || !voted.insert(canonical.clone()) {
                continue;
            }
            match keyed.get_mut(&canonical) {
                Some(entry) => {
                    entry.count += 1;
                    let shorter = entity.chars().count() < entry.representative.chars().count();
                    if shorter {
                        entry.representative = entity.clone();
                    }
                }
                None => {
                    keyed.insert(
                        canonical.clone(),
                        TallyEntry {
                            canonical,
                            count: 1,
                            representative: entity.clone(),
                            first_rank: next_rank,
                        },
                    );
                    next_rank += 1;
                }
            }
        }
    }
    let mut entries: Vec<TallyEntry> = keyed.into_values().collect();
    entries.sort_by_key(|e| e.first_rank);
    Ok(VoteTally {
        entries,
        per_model: ordered.iter().map(|(m, l)| (m.clone(), l.clone())).collect(),
    })
}

/// Entities meeting the vote threshold, sorted by count descending then
/// first appearance; truncated to the type's cap. When nothing meets the
/// threshold, falls back to the full parsed list of the highest-priority
/// model that answered.
pub fn aggregate_entities(
    tally: &VoteTally,
    cfg: &EnsembleConfig,
    qtype: QuestionType,
) -> Vec<String> {
    let cap = match qtype {
        QuestionType::Factoid => Some(cfg.factoid_cap),
        _ => cfg.list_cap,
    };
    let mut passing: Vec<&TallyEntry> = tally
        .entries
        .iter()
        .filter(|e| e.count >= cfg.threshold)
        .collect();
    passing.sort_by(|a, b| b.count.cmp(&a.count).then(a.first_rank.cmp(&b.first_rank)));
    let mut result: Vec<String> = passing.into_iter().map(|e| e.representative.clone()).collect();
    if result.is_empty() {
        if let Some((_, fallback)) = tally.per_model.first() {
            result = fallback.clone();
        }
    }
    if let Some(cap) = cap {
        result.truncate(cap);
    }
    result
}

/// Fuses per-model answers for one question. Yes/no goes through majority
/// voting, factoid and list through tally + aggregation; summary answers are
/// selected elsewhere, never fused.
pub fn fuse(
    qtype: QuestionType,
    answers: &[(String, TypedAnswer)],
    cfg: &EnsembleConfig,
) -> Result<TypedAnswer> {
    if answers.is_empty() {
        return Err(Error::Validation("fuse requires at least one answer".into()));
    }
    if let Some((model, answer)) = answers.iter().find(|(_, a)| a.qtype() != qtype) {
        return Err(Error::Validation(format!(
            "model {model} answered as {} but the question is {qtype}",
            answer.qtype()
        )));
    }
    match qtype {
        QuestionType::YesNo => {
            let votes: Vec<(String, YesNoAnswer)> = answers
                .iter()
                .map(|(m, a)| match a {
                    TypedAnswer::YesNo { answer } => (m.clone(), *answer),
                    _ => unreachable!("type checked above"),
                })
                .collect();
            Ok(TypedAnswer::YesNo {
                answer: majority_yesno(&votes, cfg)?,
            })
        }
        QuestionType::Factoid | QuestionType::List => {
            let lists: Vec<(String, Vec<String>)> = answers
                .iter()
                .map(|(m, a)| (m.clone(), a.entities().expect("type checked above").to_vec()))
                .collect();
            let counted = tally(&lists, cfg)?;
            let entities = aggregate_entities(&counted, cfg, qtype);
            Ok(match qtype {
                QuestionType::Factoid => TypedAnswer::Factoid { entities },
                _ => TypedAnswer::List { entities },
            })
        }
        QuestionType::Summary => Err(Error::Validation(
            "summary answers are selected by reranking, not fused".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(threshold: usize, priority: &[&str]) -> EnsembleConfig {
        EnsembleConfig {
            threshold,
            model_priority: priority.iter().map(|s| s.to_string()).collect(),
            ..EnsembleConfig::default()
        }
    }

    fn votes(pairs: &[(&str, YesNoAnswer)]) -> Vec<(String, YesNoAnswer)> {
        pairs.iter().map(|(m, v)| (m.to_string(), *v)).collect()
    }

    fn lists(pairs: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
        pairs
            .iter()
            .map(|(m, l)| (m.to_string(), l.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    use YesNoAnswer::{No, Yes};

    #[test]
    fn strict_majority_wins() {
        let c = cfg(2, &["m1", "m2", "m3"]);
        let v = votes(&[("m1", Yes), ("m2", Yes), ("m3", No)]);
        assert_eq!(majority_yesno(&v, &c).unwrap(), Yes);
    }

    #[test]
    fn tie_resolves_to_highest_priority_answerer() {
        let c = cfg(2, &["m1", "m2"]);
        let v = votes(&[("m2", Yes), ("m1", No)]);
        assert_eq!(majority_yesno(&v, &c).unwrap(), No);
        // With m1 abstaining, the highest-priority answered model is m2.
        let c3 = cfg(2, &["m1", "m2", "m3"]);
        let v = votes(&[("m3", No), ("m2", Yes)]);
        assert_eq!(majority_yesno(&v, &c3).unwrap(), Yes);
    }

    #[test]
    fn empty_votes_error() {
        assert!(majority_yesno(&[], &cfg(2, &[])).is_err());
    }

    #[test]
    fn unknown_model_is_a_config_error() {
        let c = cfg(2, &["m1"]);
        let v = votes(&[("mystery", Yes)]);
        assert!(matches!(majority_yesno(&v, &c), Err(Error::Config(_))));
    }

    #[test]
    fn tally_counts_distinct_models() {
        let c = cfg(2, &["A", "B", "C"]);
        let t = tally(&lists(&[("A", &["x", "y"]), ("B", &["y", "z"]), ("C", &["y"])]), &c).unwrap();
        let counts: BTreeMap<&str, usize> =
            t.entries.iter().map(|e| (e.canonical.as_str(), e.count)).collect();
        assert_eq!(counts, BTreeMap::from([("x", 1), ("y", 3), ("z", 1)]));
    }

    #[test]
    fn per_model_duplicates_count_once() {
        let c = cfg(2, &["A"]);
        let t = tally(&lists(&[("A", &["x", "X"])]), &c).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[0].count, 1);
        assert_eq!(t.entries[0].canonical, "x");
    }

    #[test]
    fn empty_input_yields_empty_tally() {
        let c = cfg(2, &[]);
        let t = tally(&[], &c).unwrap();
        assert!(t.entries.is_empty());
    }

    #[test]
    fn representative_is_shortest_variant() {
        let c = cfg(1, &["A", "B"]);
        // Whitespace collapses to the same canonical form; B's raw form is shorter.
        let t = tally(&lists(&[("A", &["HER2  receptor"]), ("B", &["HER2 receptor"])]), &c).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[0].representative, "HER2 receptor");
        assert_eq!(t.entries[0].count, 2);
    }

    #[test]
    fn representative_length_tie_keeps_earliest_seen() {
        let c = cfg(1, &["A", "B"]);
        let t = tally(&lists(&[("A", &["CFTR"]), ("B", &["cftr"])]), &c).unwrap();
        assert_eq!(t.entries[0].representative, "CFTR");
    }

    #[test]
    fn aggregate_threshold_filters() {
        let c = cfg(2, &["A", "B", "C"]);
        let t = tally(&lists(&[("A", &["x", "y"]), ("B", &["y", "z"]), ("C", &["y"])]), &c).unwrap();
        assert_eq!(aggregate_entities(&t, &c, QuestionType::Factoid), vec!["y".to_string()]);
    }

    #[test]
    fn factoid_cap_keeps_first_five_by_appearance() {
        let c = cfg(2, &["A", "B"]);
        let entities = &["a", "b", "c", "d", "e", "f"];
        let t = tally(&lists(&[("A", entities), ("B", entities)]), &c).unwrap();
        let fused = aggregate_entities(&t, &c, QuestionType::Factoid);
        assert_eq!(fused, vec!["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn list_answers_are_uncapped_by_default() {
        let c = cfg(1, &["A"]);
        let entities = &["a", "b", "c", "d", "e", "f", "g"];
        let t = tally(&lists(&[("A", entities)]), &c).unwrap();
        assert_eq!(aggregate_entities(&t, &c, QuestionType::List).len(), 7);
        let capped = EnsembleConfig { list_cap: Some(3), ..c };
        assert_eq!(aggregate_entities(&t, &capped, QuestionType::List).len(), 3);
    }

    #[test]
    fn below_threshold_falls_back_to_highest_priority_list() {
        let c = cfg(2, &["m1", "m2", "m3"]);
        let t = tally(
            &lists(&[("m3", &["c"]), ("m1", &["a", "b"]), ("m2", &["d"])]),
            &c,
        )
        .unwrap();
        assert_eq!(aggregate_entities(&t, &c, QuestionType::Factoid), vec!["a", "b"]);
    }

    #[test]
    fn fallback_with_empty_list_stays_empty() {
        let c = cfg(2, &["m1", "m2"]);
        let t = tally(&lists(&[("m1", &[]), ("m2", &["x"])]), &c).unwrap();
        assert_eq!(aggregate_entities(&t, &c, QuestionType::List), Vec::<String>::new());
    }

    #[test]
    fn fuse_single_model_degenerates_to_its_answer() {
        let c = cfg(2, &["only"]);
        let answers = vec![(
            "only".to_string(),
            TypedAnswer::Factoid { entities: vec!["CFTR".into(), "ABC".into()] },
        )];
        let fused = fuse(QuestionType::Factoid, &answers, &c).unwrap();
        assert_eq!(fused, TypedAnswer::Factoid { entities: vec!["CFTR".into(), "ABC".into()] });
    }

    #[test]
    fn fuse_rejects_mixed_types_and_summary() {
        let c = cfg(2, &["m1", "m2"]);
        let mixed = vec![
            ("m1".to_string(), TypedAnswer::YesNo { answer: Yes }),
            ("m2".to_string(), TypedAnswer::Factoid { entities: vec![] }),
        ];
        assert!(fuse(QuestionType::YesNo, &mixed, &c).is_err());
        let summaries = vec![("m1".to_string(), TypedAnswer::Summary { summary: "s".into() })];
        assert!(fuse(QuestionType::Summary, &summaries, &c).is_err());
        assert!(fuse(QuestionType::YesNo, &[], &c).is_err());
    }

    #[test]
    fn fuse_is_invariant_under_input_permutation() {
        let c = cfg(2, &["m1", "m2", "m3"]);
        let answers = vec![
            ("m1".to_string(), TypedAnswer::List { entities: vec!["a".into(), "b".into()] }),
            ("m2".to_string(), TypedAnswer::List { entities: vec!["b".into(), "c".into()] }),
            ("m3".to_string(), TypedAnswer::List { entities: vec!["b".into()] }),
        ];
        let base = fuse(QuestionType::List, &answers, &c).unwrap();
        let mut permuted = answers.clone();
        permuted.reverse();
        assert_eq!(fuse(QuestionType::List, &permuted, &c).unwrap(), base);
        permuted.swap(0, 1);
        assert_eq!(fuse(QuestionType::List, &permuted, &c).unwrap(), base);
    }
}
