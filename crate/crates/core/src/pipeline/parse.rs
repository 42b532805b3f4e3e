//! Structured-reply parsing.
//!
//! Every stage asks for one fenced JSON object. Extraction prefers the last
//! fenced block; failing that, the longest brace-balanced object embedded in
//! the text is used.
//! All parsers are total over arbitrary input.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};
use thiserror::Error;

use super::types::{CandidateEvaluation, Component, ComponentNote, Judgment, SemanticDecomposition, Verdict};

/// Failed object starts tolerated before giving up on a reply.
const MAX_SPAN_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found in reply")]
    NoJson,
    #[error("reply JSON is not an object")]
    NotAnObject,
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong type; expected {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{0}` is empty")]
    EmptyField(String),
    #[error("unknown label `{value}` in `{field}`")]
    UnknownLabel { field: String, value: String },
    #[error("component `{0}` appears more than once")]
    DuplicateComponent(String),
    #[error("component `{0}` has no verdict")]
    MissingComponent(String),
    #[error("overall judgment is excellent_match but `{0}` is unmet")]
    InconsistentJudgment(String),
}

/// Body of the last ``` fenced block, if any block is closed.
pub fn last_fenced_block(reply: &str) -> Option<&str> {
    let mut fences = Vec::new();
    let mut from = 0;
    while let Some(pos) = reply[from..].find("```") {
        fences.push(from + pos);
        from += pos + 3;
    }
    let pairs = fences.len() / 2;
    if pairs == 0 {
        return None;
    }
    let open = fences[2 * (pairs - 1)];
    let close = fences[2 * (pairs - 1) + 1];
    let inner = &reply[open + 3..close];
    // Drop an info string such as `json` on the opening fence line.
    let body = match inner.find('\n') {
        Some(nl) if !inner[..nl].trim_start().starts_with('{') => &inner[nl + 1..],
        _ => inner,
    };
    Some(body.trim())
}

/// Top-level JSON objects embedded in free text, as `(start, end, object)`.
/// Each `{` not inside an earlier object is tried as the start of a value;
/// at most [`MAX_SPAN_ATTEMPTS`] failed starts are tolerated.
pub fn embedded_objects(text: &str) -> Vec<(usize, usize, Map<String, Value>)> {
    let mut found = Vec::new();
    let mut covered = 0;
    let mut failures = 0;
    for (i, _) in text.match_indices('{') {
        if i < covered {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                let end = i + stream.byte_offset();
                found.push((i, end, map));
                covered = end;
            }
            _ => {
                failures += 1;
                if failures >= MAX_SPAN_ATTEMPTS {
                    break;
                }
            }
        }
    }
    found
}

/// Extracts the reply's JSON object.
pub fn extract_json_object(reply: &str) -> Result<Map<String, Value>, ParseError> {
    let mut saw_json = false;
    if let Some(block) = last_fenced_block(reply) {
        match serde_json::from_str::<Value>(block) {
            Ok(Value::Object(map)) => return Ok(map),
            Ok(_) => saw_json = true,
            Err(_) => {}
        }
    }
    let longest = embedded_objects(reply).into_iter().fold(
        None,
        |best: Option<(usize, Map<String, Value>)>, (start, end, map)| match best {
            Some((len, _)) if len >= end - start => best,
            _ => Some((end - start, map)),
        },
    );
    match longest {
        Some((_, map)) => Ok(map),
        None if saw_json => Err(ParseError::NotAnObject),
        None => Err(ParseError::NoJson),
    }
}

fn non_empty_str<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a str, ParseError> {
    let value = map
        .get(field)
        .ok_or_else(|| ParseError::MissingField(field.to_string()))?;
    let s = value.as_str().ok_or_else(|| ParseError::WrongType {
        field: field.to_string(),
        expected: "string",
    })?;
    if s.trim().is_empty() {
        return Err(ParseError::EmptyField(field.to_string()));
    }
    Ok(s.trim())
}

/// Parses a deconstruction reply: an object with one non-empty string per
/// expected component name. Extra keys are ignored. A nested `components`
/// object is also accepted.
pub fn parse_decomposition<S: AsRef<str>>(reply: &str, names: &[S]) -> Result<SemanticDecomposition, ParseError> {
    let mut map = extract_json_object(reply)?;
    if let Some(Value::Object(inner)) = map.get("components") {
        if !names.iter().any(|n| map.contains_key(n.as_ref())) {
            map = inner.clone();
        }
    }
    let components = names
        .iter()
        .map(|name| {
            let name = name.as_ref();
            non_empty_str(&map, name).map(|d| Component {
                name: name.to_string(),
                description: d.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SemanticDecomposition {
        components,
        degraded: false,
    })
}

/// Parses an evaluation reply:
/// `{"overall": ..., "components": [{"name", "verdict", "rationale"}, ...]}`.
/// Notes are returned in decomposition order; every component must appear
/// exactly once.
pub fn parse_evaluation(
    reply: &str,
    candidate_id: &str,
    decomposition: &SemanticDecomposition,
) -> Result<CandidateEvaluation, ParseError> {
    let map = extract_json_object(reply)?;
    let overall_raw = non_empty_str(&map, "overall")?;
    let overall: Judgment = overall_raw.parse().map_err(|_| ParseError::UnknownLabel {
        field: "overall".into(),
        value: overall_raw.to_string(),
    })?;
    let entries = map
        .get("components")
        .ok_or_else(|| ParseError::MissingField("components".into()))?;

    let mut by_name: BTreeMap<String, ComponentNote> = BTreeMap::new();
    let mut record = |name: &str, entry: &Map<String, Value>| -> Result<(), ParseError> {
        let verdict_raw = non_empty_str(entry, "verdict")?;
        let verdict: Verdict = verdict_raw.parse().map_err(|_| ParseError::UnknownLabel {
            field: "verdict".into(),
            value: verdict_raw.to_string(),
        })?;
        let rationale = entry
            .get("rationale")
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim()
            .to_string();
        let note = ComponentNote {
            name: name.to_string(),
            verdict,
            rationale,
        };
        if by_name.insert(name.to_string(), note).is_some() {
            return Err(ParseError::DuplicateComponent(name.to_string()));
        }
        Ok(())
    };

    match entries {
        Value::Array(items) => {
            for item in items {
                let entry = item.as_object().ok_or_else(|| ParseError::WrongType {
                    field: "components[]".into(),
                    expected: "object",
                })?;
                let name = non_empty_str(entry, "name")?;
                record(name, entry)?;
            }
        }
        Value::Object(named) => {
            for (name, item) in named {
                let entry = item.as_object().ok_or_else(|| ParseError::WrongType {
                    field: name.clone(),
                    expected: "object",
                })?;
                record(name.trim(), entry)?;
            }
        }
        _ => {
            return Err(ParseError::WrongType {
                field: "components".into(),
                expected: "array or object",
            })
        }
    }

    let mut notes = Vec::with_capacity(decomposition.len());
    for component in &decomposition.components {
        let note = by_name
            .remove(&component.name)
            .ok_or_else(|| ParseError::MissingComponent(component.name.clone()))?;
        if overall == Judgment::ExcellentMatch && note.verdict == Verdict::Unmet {
            return Err(ParseError::InconsistentJudgment(note.name));
        }
        notes.push(note);
    }
    Ok(CandidateEvaluation {
        candidate_id: candidate_id.to_string(),
        overall,
        component_notes: notes,
        degraded: false,
    })
}

/// Parses a ranking reply `{"ranking": [3, 1, 2]}` into 1-based indices as
/// written by the model. Entries may be integers or strings such as `"[3]"`
/// or `"3"`; entries that are neither are skipped.
pub fn parse_ranking(reply: &str) -> Result<Vec<usize>, ParseError> {
    let map = extract_json_object(reply)?;
    let items = map
        .get("ranking")
        .ok_or_else(|| ParseError::MissingField("ranking".into()))?
        .as_array()
        .ok_or_else(|| ParseError::WrongType {
            field: "ranking".into(),
            expected: "array",
        })?;
    Ok(items.iter().filter_map(index_of).collect())
}

fn index_of(value: &Value) -> Option<usize> {
    match value {
        Value::Number(n) => n.as_u64().and_then(|v| usize::try_from(v).ok()),
        Value::String(s) => s
            .trim()
            .trim_start_matches(['[', '#', 'I', 'i'])
            .trim_end_matches(']')
            .trim()
            .parse()
            .ok(),
        _ => None,
    }
}
