//! Task profiles, manifest records and the pure parts of run orchestration.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{HitsVariant, MetricKind, MetricSpec};
use crate::pipeline::{is_permutation, DialogueTurn, Query, QueryError, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Text-to-image retrieval.
    Tir,
    /// Composed image retrieval.
    Cir,
    /// Chat-based retrieval over dialogue rounds.
    Chat,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tir => "tir",
            Self::Cir => "cir",
            Self::Chat => "chat",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Minimum depth of the initial ranking, so that deep cutoffs such as R@50
/// and mAP@50 see more than the re-ranked prefix.
pub const MIN_INITIAL_DEPTH: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub name: String,
    pub task: TaskKind,
    /// Number of top candidates re-ranked per query.
    pub k_rerank: usize,
    /// Number of subset candidates re-ranked (subset protocol only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_subset: Option<usize>,
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub backbone: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown profile `{0}`; expected one of flickr30k, mscoco, cirr, circo, visdial")]
pub struct UnknownProfile(pub String);

impl TaskProfile {
    pub const PRESETS: [&'static str; 5] = ["flickr30k", "mscoco", "cirr", "circo", "visdial"];

    pub fn preset(name: &str) -> Result<Self, UnknownProfile> {
        use MetricKind::*;
        let recall = |ks: &[usize]| ks.iter().map(|&k| MetricSpec::new(Recall, k)).collect::<Vec<_>>();
        let profile = match name {
            "flickr30k" | "mscoco" => Self {
                name: name.to_string(),
                task: TaskKind::Tir,
                k_rerank: 20,
                k_subset: None,
                metrics: recall(&[1, 5, 10]),
                backbone: String::new(),
            },
            "cirr" => {
                let mut metrics = recall(&[1, 5, 10, 50]);
                metrics.extend([1, 2, 3].map(|k| MetricSpec::new(RecallSubset, k)));
                Self {
                    name: name.to_string(),
                    task: TaskKind::Cir,
                    k_rerank: 15,
                    k_subset: Some(3),
                    metrics,
                    backbone: String::new(),
                }
            }
            "circo" => Self {
                name: name.to_string(),
                task: TaskKind::Cir,
                k_rerank: 70,
                k_subset: None,
                metrics: [5, 10, 25, 50]
                    .map(|k| MetricSpec::new(MeanAveragePrecision, k))
                    .to_vec(),
                backbone: String::new(),
            },
            "visdial" => Self {
                name: name.to_string(),
                task: TaskKind::Chat,
                k_rerank: 20,
                k_subset: None,
                metrics: vec![
                    MetricSpec::new(Hits(HitsVariant::Cumulative), 10),
                    MetricSpec::new(Hits(HitsVariant::PerRound), 10),
                ],
                backbone: String::new(),
            },
            other => return Err(UnknownProfile(other.to_string())),
        };
        Ok(profile)
    }

    /// Depth of the initial ranking fetched per query.
    pub fn initial_depth(&self) -> usize {
        self.k_rerank.max(MIN_INITIAL_DEPTH)
    }
}

impl FromStr for TaskProfile {
    type Err = UnknownProfile;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::preset(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpliceError {
    #[error("re-ranked prefix is longer ({prefix}) than the initial ranking ({initial})")]
    PrefixTooLong { prefix: usize, initial: usize },
    #[error("re-ranked prefix is not a permutation of the initial top {0}")]
    NotAPermutation(usize),
}

/// Replaces the first `prefix.len()` entries of `full_initial` with the
/// re-ranked prefix; the tail keeps its initial order.
pub fn splice_ranking(full_initial: &[String], prefix: &RankedList) -> Result<Vec<String>, SpliceError> {
    let k = prefix.len();
    if k > full_initial.len() {
        return Err(SpliceError::PrefixTooLong {
            prefix: k,
            initial: full_initial.len(),
        });
    }
    let ids = prefix.ids();
    if !is_permutation(&ids, &full_initial[..k]) {
        return Err(SpliceError::NotAPermutation(k));
    }
    let mut out = ids;
    out.extend_from_slice(&full_initial[k..]);
    Ok(out)
}

/// Caption followed by the first `rounds` question/answer pairs, joined by
/// `". "`.
pub fn flatten_dialogue(caption: &str, turns: &[DialogueTurn], rounds: usize) -> String {
    let mut out = String::from(caption);
    for turn in turns.iter().take(rounds) {
        out.push_str(&format!(". Q: {} A: {}", turn.question, turn.answer));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoundError {
    #[error("round {round} out of range; dialogue has {rounds} rounds")]
    OutOfRange { round: usize, rounds: usize },
    #[error("record `{0}` has no dialogue")]
    NoDialogue(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub caption: String,
    #[serde(default)]
    pub turns: Vec<DialogueTurn>,
}

/// One query of a canonical manifest (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub query_id: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manipulation_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<Dialogue>,
    pub ground_truth: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<String>>,
    /// Initial ranking produced by an external retriever.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    /// Per-round initial rankings (dialogue records).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_candidates: Option<Vec<Vec<String>>>,
    /// Per-round reformulated query texts from an external reformulator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_queries: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("query_id is empty")]
    EmptyQueryId,
    #[error("missing required field `{field}` for task {task}")]
    MissingField { field: &'static str, task: TaskKind },
    #[error("field `{field}` is not allowed for task {task}")]
    UnexpectedField { field: &'static str, task: TaskKind },
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("field `{field}` contains an empty id")]
    EmptyId { field: &'static str },
    #[error("field `{field}` repeats id `{id}`")]
    DuplicateId { field: &'static str, id: String },
    #[error("subset contains no ground-truth id")]
    SubsetWithoutGroundTruth,
}

fn check_ids(field: &'static str, ids: &[String]) -> Result<(), RecordError> {
    if ids.is_empty() {
        return Err(RecordError::EmptyField(field));
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(RecordError::EmptyId { field });
        }
        if !seen.insert(id.as_str()) {
            return Err(RecordError::DuplicateId { field, id: id.clone() });
        }
    }
    Ok(())
}

fn present(field: &Option<String>) -> bool {
    field.as_ref().is_some_and(|s| !s.trim().is_empty())
}

impl ManifestRecord {
    /// Checks that exactly the fields of the record's task are present.
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.query_id.trim().is_empty() {
            return Err(RecordError::EmptyQueryId);
        }
        let task = self.task;
        let missing = |field| RecordError::MissingField { field, task };
        let unexpected = |field| RecordError::UnexpectedField { field, task };
        match task {
            TaskKind::Tir => {
                if !present(&self.text) {
                    return Err(missing("text"));
                }
                if self.reference_image.is_some() || self.manipulation_text.is_some() {
                    return Err(unexpected("reference_image/manipulation_text"));
                }
                if self.dialogue.is_some() {
                    return Err(unexpected("dialogue"));
                }
            }
            TaskKind::Cir => {
                if !present(&self.reference_image) {
                    return Err(missing("reference_image"));
                }
                if !present(&self.manipulation_text) {
                    return Err(missing("manipulation_text"));
                }
                if self.text.is_some() {
                    return Err(unexpected("text"));
                }
                if self.dialogue.is_some() {
                    return Err(unexpected("dialogue"));
                }
            }
            TaskKind::Chat => {
                match &self.dialogue {
                    Some(d) if !d.caption.trim().is_empty() => {}
                    _ => return Err(missing("dialogue")),
                }
                if self.reference_image.is_some() || self.manipulation_text.is_some() {
                    return Err(unexpected("reference_image/manipulation_text"));
                }
            }
        }
        if task != TaskKind::Chat && (self.round_candidates.is_some() || self.round_queries.is_some()) {
            return Err(unexpected("round_candidates/round_queries"));
        }
        check_ids("ground_truth", &self.ground_truth)?;
        if let Some(subset) = &self.subset {
            check_ids("subset", subset)?;
            if !subset.iter().any(|id| self.ground_truth.contains(id)) {
                return Err(RecordError::SubsetWithoutGroundTruth);
            }
        }
        if let Some(c) = &self.candidates {
            check_ids("candidates", c)?;
        }
        if let Some(rounds) = &self.round_candidates {
            for c in rounds {
                check_ids("round_candidates", c)?;
            }
        }
        Ok(())
    }

    /// Number of dialogue rounds that can be queried (caption-only round 0
    /// plus one per question/answer pair).
    pub fn round_count(&self) -> usize {
        self.dialogue.as_ref().map_or(0, |d| d.turns.len() + 1)
    }

    /// Every id the record references, for checking against a corpus.
    pub fn referenced_ids(&self) -> impl Iterator<Item = (&'static str, &String)> {
        let gts = self.ground_truth.iter().map(|id| ("ground_truth", id));
        let subset = self.subset.iter().flatten().map(|id| ("subset", id));
        gts.chain(subset)
    }

    /// The query for non-dialogue records.
    pub fn query(&self) -> Result<Query, QueryError> {
        match self.task {
            TaskKind::Tir => Query::text(self.text.clone().unwrap_or_default()),
            TaskKind::Cir => Query::composed(
                self.reference_image.clone().unwrap_or_default(),
                self.manipulation_text.clone().unwrap_or_default(),
            ),
            TaskKind::Chat => {
                let d = self.dialogue.clone().unwrap_or(Dialogue {
                    caption: String::new(),
                    turns: Vec::new(),
                });
                Ok(Query::Dialogue {
                    caption: d.caption,
                    turns: d.turns,
                })
            }
        }
    }
}

/// The text query for dialogue round `round`: the precomputed reformulation
/// when the record carries one, otherwise the caption followed by the first
/// `round` question/answer pairs.
pub fn chat_query_for_round(record: &ManifestRecord, round: usize) -> Result<Query, RoundError> {
    let dialogue = record
        .dialogue
        .as_ref()
        .ok_or_else(|| RoundError::NoDialogue(record.query_id.clone()))?;
    if round > dialogue.turns.len() {
        return Err(RoundError::OutOfRange {
            round,
            rounds: dialogue.turns.len(),
        });
    }
    if let Some(text) = record.round_queries.as_ref().and_then(|q| q.get(round)) {
        return Ok(Query::text(text.clone())?);
    }
    Ok(Query::text(flatten_dialogue(
        &dialogue.caption,
        &dialogue.turns,
        round,
    ))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::repair_permutation;

    fn s(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn chat_record(turns: &[(&str, &str)]) -> ManifestRecord {
        ManifestRecord {
            query_id: "d1".into(),
            task: TaskKind::Chat,
            text: None,
            reference_image: None,
            manipulation_text: None,
            dialogue: Some(Dialogue {
                caption: "a dog".into(),
                turns: turns
                    .iter()
                    .map(|(q, a)| DialogueTurn {
                        question: q.to_string(),
                        answer: a.to_string(),
                    })
                    .collect(),
            }),
            ground_truth: s(&["img"]),
            subset: None,
            candidates: None,
            round_candidates: None,
            round_queries: None,
        }
    }

    #[test]
    fn preset_k_values() {
        let k = |n: &str| TaskProfile::preset(n).unwrap();
        assert_eq!(k("flickr30k").k_rerank, 20);
        assert_eq!(k("mscoco").k_rerank, 20);
        assert_eq!(k("visdial").k_rerank, 20);
        assert_eq!(k("cirr").k_rerank, 15);
        assert_eq!(k("cirr").k_subset, Some(3));
        assert_eq!(k("circo").k_rerank, 70);
        assert_eq!(k("circo").initial_depth(), 70);
        assert_eq!(k("cirr").initial_depth(), 50);
        assert!(TaskProfile::preset("imagenet").is_err());
    }

    #[test]
    fn splice_examples() {
        let initial = s(&["a", "b", "c", "d"]);
        let prefix = repair_permutation(&["c", "a", "b"], &["a", "b", "c"]);
        assert_eq!(splice_ranking(&initial, &prefix).unwrap(), s(&["c", "a", "b", "d"]));
        let same = repair_permutation(&["a", "b"], &["a", "b"]);
        assert_eq!(splice_ranking(&initial, &same).unwrap(), initial);
        let wrong = repair_permutation(&["d"], &["d"]);
        assert_eq!(splice_ranking(&initial, &wrong), Err(SpliceError::NotAPermutation(1)));
        let long = RankedList::fallback(&s(&["a", "b", "c", "d", "e"]));
        assert!(matches!(
            splice_ranking(&initial, &long),
            Err(SpliceError::PrefixTooLong { .. })
        ));
    }

    #[test]
    fn dialogue_rounds() {
        let record = chat_record(&[
            ("is it outside?", "yes"),
            ("is it running?", "no"),
            ("any people?", "one"),
        ]);
        assert_eq!(chat_query_for_round(&record, 0).unwrap(), Query::Text("a dog".into()));
        assert_eq!(
            chat_query_for_round(&record, 3).unwrap(),
            Query::Text("a dog. Q: is it outside? A: yes. Q: is it running? A: no. Q: any people? A: one".into())
        );
        assert_eq!(
            chat_query_for_round(&record, 1).unwrap(),
            Query::Text("a dog. Q: is it outside? A: yes".into())
        );
        assert_eq!(
            chat_query_for_round(&record, 4),
            Err(RoundError::OutOfRange { round: 4, rounds: 3 })
        );
        assert_eq!(record.round_count(), 4);
    }

    #[test]
    fn precomputed_round_query_passes_through() {
        let mut record = chat_record(&[("q", "a")]);
        record.round_queries = Some(s(&["first ✓", "a brown dog on grass"]));
        assert_eq!(
            chat_query_for_round(&record, 1).unwrap(),
            Query::Text("a brown dog on grass".into())
        );
        assert_eq!(chat_query_for_round(&record, 0).unwrap(), Query::Text("first ✓".into()));
    }

    #[test]
    fn record_validation() {
        let mut cir = ManifestRecord {
            query_id: "c1".into(),
            task: TaskKind::Cir,
            text: None,
            reference_image: Some("ref.png".into()),
            manipulation_text: None,
            dialogue: None,
            ground_truth: s(&["t"]),
            subset: None,
            candidates: None,
            round_candidates: None,
            round_queries: None,
        };
        assert_eq!(
            cir.validate(),
            Err(RecordError::MissingField {
                field: "manipulation_text",
                task: TaskKind::Cir
            })
        );
        cir.manipulation_text = Some("make it red".into());
        assert!(cir.validate().is_ok());
        cir.subset = Some(s(&["x", "y"]));
        assert_eq!(cir.validate(), Err(RecordError::SubsetWithoutGroundTruth));
        cir.subset = Some(s(&["t", "y"]));
        cir.candidates = Some(s(&["a", "a"]));
        assert!(matches!(cir.validate(), Err(RecordError::DuplicateId { .. })));

        let chat = chat_record(&[("q", "a")]);
        assert!(chat.validate().is_ok());
        let mut tir = chat.clone();
        tir.task = TaskKind::Tir;
        assert_eq!(
            tir.validate(),
            Err(RecordError::MissingField {
                field: "text",
                task: TaskKind::Tir
            })
        );
    }
}
