use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default component names, in prompt and reply order.
pub const DEFAULT_COMPONENTS: [&str; 5] = ["primary_subject", "activity", "key_details", "environment", "ambiance"];

/// Pseudo-component used when evaluation runs against the raw query text.
pub const WHOLE_QUERY_COMPONENT: &str = "query";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query text is empty")]
    EmptyText,
    #[error("composed query needs a reference image")]
    MissingReferenceImage,
    #[error("composed query needs a non-empty manipulation text")]
    EmptyManipulationText,
    #[error("dialogue queries must be flattened to text first")]
    UnflattenedDialogue,
}

/// A retrieval query in one of its three source forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Text(String),
    /// Reference image plus a manipulation text describing the desired change.
    Composed {
        reference_image: String,
        manipulation_text: String,
    },
    Dialogue {
        caption: String,
        turns: Vec<DialogueTurn>,
    },
}

impl Query {
    pub fn text(text: impl Into<String>) -> Result<Self, QueryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(QueryError::EmptyText);
        }
        Ok(Self::Text(text))
    }

    pub fn composed(
        reference_image: impl Into<String>,
        manipulation_text: impl Into<String>,
    ) -> Result<Self, QueryError> {
        let reference_image = reference_image.into();
        let manipulation_text = manipulation_text.into();
        if reference_image.trim().is_empty() {
            return Err(QueryError::MissingReferenceImage);
        }
        if manipulation_text.trim().is_empty() {
            return Err(QueryError::EmptyManipulationText);
        }
        Ok(Self::Composed {
            reference_image,
            manipulation_text,
        })
    }

    /// The textual part of the query as the model would read it.
    pub fn display_text(&self) -> String {
        match self {
            Self::Text(t) => t.clone(),
            Self::Composed { manipulation_text, .. } => manipulation_text.clone(),
            Self::Dialogue { caption, turns } => crate::harness::flatten_dialogue(caption, turns, turns.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub description: String,
}

/// The query split into named semantic components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticDecomposition {
    pub components: Vec<Component>,
    /// True when produced by a fallback instead of a parsed reply.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub degraded: bool,
}

impl SemanticDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    /// A single component holding the raw query text, used when evaluation
    /// skips deconstruction.
    pub fn whole_query(text: &str) -> Self {
        Self {
            components: alloc::vec![Component {
                name: WHOLE_QUERY_COMPONENT.to_string(),
                description: text.to_string(),
            }],
            degraded: false,
        }
    }

    /// Every named component described by the raw query text; used when
    /// deconstruction could not be parsed.
    pub fn fallback<S: AsRef<str>>(names: &[S], text: &str) -> Self {
        Self {
            components: names
                .iter()
                .map(|n| Component {
                    name: n.as_ref().to_string(),
                    description: text.to_string(),
                })
                .collect(),
            degraded: true,
        }
    }
}

/// Overall judgment of a candidate, totally ordered from worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    NoMatch,
    WeakMatch,
    PartialMatch,
    GoodMatch,
    ExcellentMatch,
}

impl Judgment {
    pub const ALL: [Judgment; 5] = [
        Self::NoMatch,
        Self::WeakMatch,
        Self::PartialMatch,
        Self::GoodMatch,
        Self::ExcellentMatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoMatch => "no_match",
            Self::WeakMatch => "weak_match",
            Self::PartialMatch => "partial_match",
            Self::GoodMatch => "good_match",
            Self::ExcellentMatch => "excellent_match",
        }
    }

    /// Human-readable form used in prompts, e.g. "partial match".
    pub fn label(self) -> &'static str {
        match self {
            Self::NoMatch => "no match",
            Self::WeakMatch => "weak match",
            Self::PartialMatch => "partial match",
            Self::GoodMatch => "good match",
            Self::ExcellentMatch => "excellent match",
        }
    }

    /// Level implied by the fraction of components met.
    pub fn from_met_fraction(fraction: f64) -> Self {
        if fraction >= 1.0 {
            Self::ExcellentMatch
        } else if fraction >= 0.8 {
            Self::GoodMatch
        } else if fraction >= 0.5 {
            Self::PartialMatch
        } else if fraction > 0.0 {
            Self::WeakMatch
        } else {
            Self::NoMatch
        }
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown judgment `{0}`")]
pub struct UnknownLabel(pub String);

/// Lowercases and folds spaces and hyphens into underscores.
pub(crate) fn normalize_label(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

impl FromStr for Judgment {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = normalize_label(s);
        let norm = norm.as_str();
        Self::ALL
            .into_iter()
            .find(|j| j.as_str() == norm)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Met,
    PartiallyMet,
    Unmet,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Met => "met",
            Self::PartiallyMet => "partially_met",
            Self::Unmet => "unmet",
        }
    }
}

impl FromStr for Verdict {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "met" | "yes" | "satisfied" => Ok(Self::Met),
            "partially_met" | "partial" | "partly_met" => Ok(Self::PartiallyMet),
            "unmet" | "not_met" | "no" => Ok(Self::Unmet),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentNote {
    pub name: String,
    pub verdict: Verdict,
    pub rationale: String,
}

/// The model's structured verdict on one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub candidate_id: String,
    pub overall: Judgment,
    pub component_notes: Vec<ComponentNote>,
    #[serde(default)]
    pub degraded: bool,
}

impl CandidateEvaluation {
    /// Placeholder recorded when no usable reply was obtained.
    pub fn degraded(candidate_id: &str, decomposition: &SemanticDecomposition, reason: &str) -> Self {
        Self {
            candidate_id: candidate_id.to_string(),
            overall: Judgment::NoMatch,
            component_notes: decomposition
                .components
                .iter()
                .map(|c| ComponentNote {
                    name: c.name.clone(),
                    verdict: Verdict::Unmet,
                    rationale: alloc::format!("no usable evaluation: {reason}"),
                })
                .collect(),
            degraded: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Placed by the model's ranking.
    Model,
    /// Appended by permutation repair or a fallback.
    Repaired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub provenance: Provenance,
}

/// A best-first ordering that is always a permutation of its input
/// candidates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedList(pub Vec<RankedEntry>);

impl RankedList {
    /// The input order, every entry tagged as repaired.
    pub fn fallback<S: AsRef<str>>(original: &[S]) -> Self {
        Self(
            original
                .iter()
                .map(|id| RankedEntry {
                    id: id.as_ref().to_string(),
                    provenance: Provenance::Repaired,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.0.iter().map(|e| e.id.clone()).collect()
    }

    pub fn repaired_count(&self) -> usize {
        self.0.iter().filter(|e| e.provenance == Provenance::Repaired).count()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, RankedEntry> {
        self.0.iter()
    }
}
