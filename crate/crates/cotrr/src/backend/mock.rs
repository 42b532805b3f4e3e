//! Deterministic stand-ins for a chat model.
//!
//! Mocks read the [`RequestContext`](cotrr_core::RequestContext) attached to
//! each request (stage, query id, candidate ids in prompt order, component
//! names) and answer from hidden relevance labels. Nothing about the labels
//! reaches the prompt text, so the pipeline is exercised exactly as with a
//! live model.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use cotrr_core::harness::ManifestRecord;
use cotrr_core::{cache_key, ChatRequest, Judgment, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{Transport, TransportError};

/// Labels count satisfied components out of this many.
pub const LABEL_COMPONENTS: u32 = 5;

const DEFAULT_NOISY_SWAPS: usize = 3;

/// One line of a labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub query_id: String,
    pub candidate_id: String,
    pub relevance: u32,
    /// Components satisfied, out of [`LABEL_COMPONENTS`]. Defaults to all of
    /// them for relevant candidates and none otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub met: Option<u32>,
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot read labels {path}: {message}")]
    Read { path: String, message: String },
    #[error("labels line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Grade {
    relevance: u32,
    met: u32,
}

/// Hidden per-(query, candidate) relevance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    by_query: HashMap<String, HashMap<String, Grade>>,
}

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, candidate_id: &str, relevance: u32, met: Option<u32>) {
        let met = met.unwrap_or(if relevance > 0 { LABEL_COMPONENTS } else { 0 });
        self.by_query
            .entry(query_id.to_string())
            .or_default()
            .insert(candidate_id.to_string(), Grade { relevance, met });
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, LabelError> {
        let mut labels = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| LabelError::Line { line: i + 1, message };
            let label: Label = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
            if label.met.is_some_and(|m| m > LABEL_COMPONENTS) {
                return Err(fail(format!("met exceeds {LABEL_COMPONENTS}")));
            }
            labels.insert(&label.query_id, &label.candidate_id, label.relevance, label.met);
        }
        Ok(labels)
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabelError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_jsonl(&text)
    }

    /// Ground-truth ids of each record become fully relevant candidates.
    pub fn from_ground_truth(records: &[ManifestRecord]) -> Self {
        let mut labels = Self::new();
        for r in records {
            for id in &r.ground_truth {
                labels.insert(&r.query_id, id, 1, None);
            }
        }
        labels
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels of `query_id`; a round id such as `q1#r3` falls back to `q1`.
    fn grade(&self, query_id: &str, candidate_id: &str) -> Grade {
        let table = self
            .by_query
            .get(query_id)
            .or_else(|| query_id.split_once('#').and_then(|(base, _)| self.by_query.get(base)));
        table
            .and_then(|t| t.get(candidate_id))
            .copied()
            .unwrap_or(Grade { relevance: 0, met: 0 })
    }

    pub fn relevance(&self, query_id: &str, candidate_id: &str) -> u32 {
        self.grade(query_id, candidate_id).relevance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MockKind {
    Oracle,
    Scripted,
    Noisy,
    Truncating,
    Malformed,
}

impl MockKind {
    pub const ALL: [MockKind; 5] = [
        Self::Oracle,
        Self::Scripted,
        Self::Noisy,
        Self::Truncating,
        Self::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Scripted => "scripted",
            Self::Noisy => "noisy",
            Self::Truncating => "truncating",
            Self::Malformed => "malformed",
        }
    }
}

impl fmt::Display for MockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MockKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            format!("unknown mock kind `{s}`; expected oracle, scripted, noisy, truncating or malformed")
        })
    }
}

fn fenced(body: Value) -> String {
    format!("Here is my answer.\n```json\n{body}\n```")
}

/// Answers from labels: oracle, noisy, truncating and malformed behaviour.
/// For the scripted kind use [`ScriptedTransport`].
pub struct MockTransport {
    kind: MockKind,
    seed: u64,
    param: Option<usize>,
    labels: Arc<Labels>,
}

impl MockTransport {
    /// `param` is the swap count for `noisy` and the dropped-suffix length
    /// for `truncating`; when absent both are drawn from the seed.
    pub fn new(kind: MockKind, seed: u64, param: Option<usize>, labels: Arc<Labels>) -> Self {
        assert!(kind != MockKind::Scripted, "use ScriptedTransport for scripted replies");
        Self {
            kind,
            seed,
            param,
            labels,
        }
    }

    pub fn oracle(labels: Arc<Labels>) -> Self {
        Self::new(MockKind::Oracle, 0, None, labels)
    }

    pub fn kind(&self) -> MockKind {
        self.kind
    }

    /// Seeded from the mock seed and the request digest, so replies depend
    /// only on (seed, request).
    fn rng(&self, request: &ChatRequest) -> ChaCha8Rng {
        let key = cache_key(request);
        let salt = u64::from_str_radix(&key[..16], 16).expect("hex digest");
        ChaCha8Rng::seed_from_u64(self.seed ^ salt)
    }

    fn decomposition(request: &ChatRequest) -> String {
        let ctx = &request.context;
        let body: serde_json::Map<String, Value> = ctx
            .components
            .iter()
            .map(|name| (name.clone(), json!(format!("{name} of query {}", ctx.query_id))))
            .collect();
        fenced(Value::Object(body))
    }

    fn evaluation(&self, request: &ChatRequest) -> String {
        let ctx = &request.context;
        let candidate = ctx.candidate_ids.first().map(String::as_str).unwrap_or("");
        let grade = self.labels.grade(&ctx.query_id, candidate);
        let fraction = f64::from(grade.met.min(LABEL_COMPONENTS)) / f64::from(LABEL_COMPONENTS);
        let overall = Judgment::from_met_fraction(fraction);
        let total = ctx.components.len();
        let met = if grade.met >= LABEL_COMPONENTS {
            total
        } else {
            ((fraction * total as f64).round() as usize).min(total)
        };
        let components: Vec<Value> = ctx
            .components
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let (verdict, why) = if i < met {
                    ("met", "clearly visible")
                } else {
                    ("unmet", "not present")
                };
                json!({"name": name, "verdict": verdict, "rationale": why})
            })
            .collect();
        fenced(json!({"overall": overall.as_str(), "components": components}))
    }

    /// 1-based indices by descending relevance, prompt order on ties.
    fn oracle_order(&self, request: &ChatRequest) -> Vec<usize> {
        let ctx = &request.context;
        let mut order: Vec<usize> = (1..=ctx.candidate_ids.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.labels.relevance(&ctx.query_id, &ctx.candidate_ids[i - 1])));
        order
    }

    fn ranking(&self, request: &ChatRequest) -> String {
        let mut order = self.oracle_order(request);
        let mut rng = self.rng(request);
        match self.kind {
            MockKind::Noisy if order.len() > 1 => {
                let swaps = self.param.unwrap_or(DEFAULT_NOISY_SWAPS);
                for _ in 0..swaps {
                    let a = rng.random_range(0..order.len());
                    let b = rng.random_range(0..order.len());
                    order.swap(a, b);
                }
            }
            MockKind::Truncating if !order.is_empty() => {
                let drop = self.param.unwrap_or_else(|| rng.random_range(1..=order.len()));
                order.truncate(order.len().saturating_sub(drop));
            }
            _ => {}
        }
        fenced(json!({"analysis": "compared the candidates", "ranking": order}))
    }

    fn malformed(&self, request: &ChatRequest) -> String {
        const DECONSTRUCT: [&str; 3] = [
            "The request is about some people doing something.",
            "```json\n{\"primary_subject\": \"people\"}\n```",
            "```json\n[\"people\", \"playing\"]\n```",
        ];
        const EVALUATE: [&str; 3] = [
            "This image looks like a good match to me.",
            "```json\n{\"overall\": \"superb\", \"components\": []}\n```",
            "```json\n{\"overall\": \"good_match\"\n```",
        ];
        const RANK: [&str; 4] = [
            "I would put candidate 2 first and then candidate 1.",
            "```json\n{\"analysis\": \"ok\", \"ranking\": \"2, 1\"}\n```",
            "```json\n{\"analysis\": \"ok\", \"order\": [1]}\n```",
            "```json\n{\"ranking\": [1, 2\n```",
        ];
        let pool: &[&str] = match request.context.stage {
            Stage::Deconstruct => &DECONSTRUCT,
            Stage::Evaluate => &EVALUATE,
            _ => &RANK,
        };
        pool[self.rng(request).random_range(0..pool.len())].to_string()
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        if self.kind == MockKind::Malformed {
            return Ok(self.malformed(request));
        }
        Ok(match request.context.stage {
            Stage::Deconstruct => Self::decomposition(request),
            Stage::Evaluate => self.evaluation(request),
            Stage::Rank | Stage::RankWithDecomposition | Stage::RankWithQuery => self.ranking(request),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    /// Fails with this HTTP status.
    Fail(u16),
    Timeout,
}

/// Replays canned steps in order, whatever the request. Running past the end
/// is an error rather than a loop.
#[derive(Debug)]
pub struct ScriptedTransport {
    steps: Mutex<(VecDeque<ScriptStep>, usize)>,
}

impl ScriptedTransport {
    pub fn new(steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        Self {
            steps: Mutex::new((steps.into_iter().collect(), 0)),
        }
    }

    pub fn replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|r| ScriptStep::Reply(r.into())))
    }

    pub fn remaining(&self) -> usize {
        self.steps.lock().expect("script poisoned").0.len()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        let mut guard = self.steps.lock().expect("script poisoned");
        let (steps, served) = &mut *guard;
        let step = steps
            .pop_front()
            .ok_or(TransportError::ScriptExhausted { served: *served })?;
        *served += 1;
        match step {
            ScriptStep::Reply(text) => Ok(text),
            ScriptStep::Fail(status) => Err(TransportError::Status {
                status,
                body: "scripted failure".into(),
            }),
            ScriptStep::Timeout => Err(TransportError::Timeout("scripted timeout".into())),
        }
    }
}
