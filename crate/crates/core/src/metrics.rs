//! Retrieval metrics: Recall@k, mAP@k (CIRCO normalizer), Recall_subset@k and
//! per-round Hits@k for dialogue retrieval.
//!
//! Per-query functions return `f64` so aggregates are plain arithmetic means.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("subset is empty")]
    EmptySubset,
    #[error("subset contains no ground-truth id")]
    SubsetWithoutGroundTruth,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no dialogues to score")]
    EmptyInput,
    #[error("dialogue {dialogue} has no rounds")]
    EmptyDialogue { dialogue: usize },
    #[error("rank 0 at dialogue {dialogue}, round {round}; ranks are 1-based")]
    ZeroRank { dialogue: usize, round: usize },
}

/// 1.0 iff any ground-truth id appears within the first `k` positions.
pub fn recall_at_k<T: Ord>(ranked: &[T], gts: &BTreeSet<T>, k: usize) -> Result<f64, MetricError> {
    if gts.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let hit = ranked.iter().take(k).any(|id| gts.contains(id));
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Average precision truncated at `k`, normalized by `min(k, |gts|)`.
pub fn average_precision_at_k<T: Ord>(ranked: &[T], gts: &BTreeSet<T>, k: usize) -> Result<f64, MetricError> {
    if gts.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if gts.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(gts.len()) as f64)
}

/// Outcome of [`recall_subset_at_k`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetRecall {
    pub value: f64,
    /// Subset members missing from `ranked`; they were scored as trailing
    /// entries in subset order.
    pub absent: usize,
}

/// Restricts `ranked` to members of `subset`, preserving relative order.
/// Subset members missing from `ranked` are appended in subset order.
pub fn filter_to_subset<'a, T: Ord>(ranked: &'a [T], subset: &'a [T]) -> (Vec<&'a T>, usize) {
    let members: BTreeSet<&T> = subset.iter().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(subset.len());
    for id in ranked {
        if members.contains(id) && seen.insert(id) {
            out.push(id);
        }
    }
    let mut absent = 0;
    for id in subset {
        if seen.insert(id) {
            out.push(id);
            absent += 1;
        }
    }
    (out, absent)
}

pub fn recall_subset_at_k<T: Ord>(
    ranked: &[T],
    subset: &[T],
    gts: &BTreeSet<T>,
    k: usize,
) -> Result<SubsetRecall, MetricError> {
    if subset.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    if gts.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if !subset.iter().any(|id| gts.contains(id)) {
        return Err(MetricError::SubsetWithoutGroundTruth);
    }
    let (filtered, absent) = filter_to_subset(ranked, subset);
    let hit = filtered.iter().take(k).any(|id| gts.contains(*id));
    Ok(SubsetRecall {
        value: if hit { 1.0 } else { 0.0 },
        absent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitsVariant {
    /// Hit at round `t` if the target was within `k` at any round `<= t`.
    #[default]
    Cumulative,
    /// Hit at round `t` only if the target is within `k` at round `t`.
    PerRound,
}

impl HitsVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cumulative => "cumulative",
            Self::PerRound => "per_round",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitsCurve {
    pub per_round: Vec<f64>,
    /// Number of dialogues shorter than the longest one; their last rank was
    /// carried forward.
    pub padded: usize,
}

/// Pads every dialogue to the longest round count by repeating its last rank.
pub fn pad_rounds(per_dialogue_ranks: &[Vec<usize>]) -> Result<(Vec<Vec<usize>>, usize), MetricError> {
    if per_dialogue_ranks.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let rounds = per_dialogue_ranks.iter().map(Vec::len).max().unwrap_or(0);
    let mut padded = 0;
    let mut out = Vec::with_capacity(per_dialogue_ranks.len());
    for (dialogue, ranks) in per_dialogue_ranks.iter().enumerate() {
        let Some(&last) = ranks.last() else {
            return Err(MetricError::EmptyDialogue { dialogue });
        };
        if let Some(round) = ranks.iter().position(|r| *r == 0) {
            return Err(MetricError::ZeroRank { dialogue, round });
        }
        let mut row = ranks.clone();
        if row.len() < rounds {
            padded += 1;
            row.resize(rounds, last);
        }
        out.push(row);
    }
    Ok((out, padded))
}

/// Per-round 0/1 hit indicators for a single (already padded) dialogue.
pub fn dialogue_hits(ranks: &[usize], k: usize, variant: HitsVariant) -> Vec<f64> {
    let mut seen = false;
    ranks
        .iter()
        .map(|&r| {
            let now = r <= k;
            seen |= now;
            let hit = match variant {
                HitsVariant::Cumulative => seen,
                HitsVariant::PerRound => now,
            };
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Fraction of dialogues hitting within `k` at each round.
pub fn hits_at_k(per_dialogue_ranks: &[Vec<usize>], k: usize, variant: HitsVariant) -> Result<HitsCurve, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let (rows, padded) = pad_rounds(per_dialogue_ranks)?;
    let rounds = rows[0].len();
    let mut sums = alloc::vec![0.0; rounds];
    for row in &rows {
        for (sum, hit) in sums.iter_mut().zip(dialogue_hits(row, k, variant)) {
            *sum += hit;
        }
    }
    let n = rows.len() as f64;
    Ok(HitsCurve {
        per_round: sums.into_iter().map(|s| s / n).collect(),
        padded,
    })
}

/// Arithmetic mean; `None` for an empty input. Values are summed in sorted
/// order so the result does not depend on input order.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let sum: f64 = values.iter().sum();
    Some(sum / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Recall,
    MeanAveragePrecision,
    RecallSubset,
    Hits(HitsVariant),
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Recall => "recall",
            Self::MeanAveragePrecision => "map",
            Self::RecallSubset => "recall_subset",
            Self::Hits(HitsVariant::Cumulative) => "hits",
            Self::Hits(HitsVariant::PerRound) => "hits_per_round",
        }
    }
}

/// A metric at a cutoff, rendered as `<metric>@<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub k: usize,
}

impl MetricSpec {
    pub const fn new(kind: MetricKind, k: usize) -> Self {
        Self { kind, k }
    }

    pub fn key(&self) -> String {
        format!("{}@{}", self.kind.name(), self.k)
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind.name(), self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid metric `{0}`; expected <recall|map|recall_subset|hits|hits_per_round>@<k>")]
pub struct ParseMetricError(pub String);

impl FromStr for MetricSpec {
    type Err = ParseMetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMetricError(s.into());
        let (name, k) = s.trim().split_once('@').ok_or_else(err)?;
        let kind = match name {
            "recall" | "r" => MetricKind::Recall,
            "map" => MetricKind::MeanAveragePrecision,
            "recall_subset" | "r_subs" => MetricKind::RecallSubset,
            "hits" => MetricKind::Hits(HitsVariant::Cumulative),
            "hits_per_round" => MetricKind::Hits(HitsVariant::PerRound),
            _ => return Err(err()),
        };
        let k: usize = k.parse().map_err(|_| err())?;
        if k == 0 {
            return Err(err());
        }
        Ok(Self { kind, k })
    }
}

impl serde::Serialize for MetricSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for MetricSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
