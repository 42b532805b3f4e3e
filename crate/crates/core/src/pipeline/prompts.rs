//! Prompt templates and their rendering.
//!
//! Templates are plain UTF-8 text with named placeholders: `{query_text}`,
//! `{manipulation_text}`, `{components}`, `{evaluations}`, `{k}` and, for the
//! repair follow-up, `{error}`. Only these exact tokens are substituted, so
//! literal JSON braces in a template are left alone.

use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use super::types::{CandidateEvaluation, SemanticDecomposition};

/// Bumped whenever a shipped template changes wording.
pub const PROMPT_VERSION: &str = "v1";

pub const PLACEHOLDERS: [&str; 6] = [
    "{query_text}",
    "{manipulation_text}",
    "{components}",
    "{evaluations}",
    "{k}",
    "{error}",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub deconstruct_text: String,
    pub deconstruct_composed: String,
    pub evaluate: String,
    /// Evaluation against the raw query (R+E).
    pub evaluate_query: String,
    pub rank: String,
    /// Ranking from the decomposition plus images (R+D).
    pub rank_decomposition: String,
    /// Ranking from the raw query plus images (R).
    pub rank_query: String,
    pub repair: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            deconstruct_text: include_str!("../../templates/deconstruct_text.txt").into(),
            deconstruct_composed: include_str!("../../templates/deconstruct_composed.txt").into(),
            evaluate: include_str!("../../templates/evaluate.txt").into(),
            evaluate_query: include_str!("../../templates/evaluate_query.txt").into(),
            rank: include_str!("../../templates/rank.txt").into(),
            rank_decomposition: include_str!("../../templates/rank_decomposition.txt").into(),
            rank_query: include_str!("../../templates/rank_query.txt").into(),
            repair: include_str!("../../templates/repair.txt").into(),
        }
    }
}

impl PromptSet {
    /// Template file names, paired with the field each one fills.
    pub const FILE_NAMES: [&'static str; 8] = [
        "deconstruct_text.txt",
        "deconstruct_composed.txt",
        "evaluate.txt",
        "evaluate_query.txt",
        "rank.txt",
        "rank_decomposition.txt",
        "rank_query.txt",
        "repair.txt",
    ];

    /// Mutable access by file name, for loading overrides from a directory.
    pub fn slot_mut(&mut self, file_name: &str) -> Option<&mut String> {
        Some(match file_name {
            "deconstruct_text.txt" => &mut self.deconstruct_text,
            "deconstruct_composed.txt" => &mut self.deconstruct_composed,
            "evaluate.txt" => &mut self.evaluate,
            "evaluate_query.txt" => &mut self.evaluate_query,
            "rank.txt" => &mut self.rank,
            "rank_decomposition.txt" => &mut self.rank_decomposition,
            "rank_query.txt" => &mut self.rank_query,
            "repair.txt" => &mut self.repair,
            _ => return None,
        })
    }
}

/// Substitutes `{name}` placeholders. Unknown names are left verbatim.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in values {
            let token_len = name.len() + 2;
            let bytes = tail.as_bytes();
            if bytes.len() >= token_len && bytes[token_len - 1] == b'}' && &bytes[1..token_len - 1] == name.as_bytes() {
                out.push_str(value);
                rest = &tail[token_len..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// One `- name: description` line per component.
pub fn render_components(decomposition: &SemanticDecomposition) -> String {
    let mut out = String::new();
    for (i, c) in decomposition.components.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "- {}: {}", c.name, c.description);
    }
    out
}

/// Evaluations numbered from 1 in candidate order. Candidate ids are not
/// shown; the model refers to candidates by number only.
pub fn render_evaluations(evaluations: &[CandidateEvaluation]) -> String {
    let mut out = String::new();
    for (i, e) in evaluations.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = write!(out, "Candidate {}: overall judgment = {}", i + 1, e.overall.label());
        for note in &e.component_notes {
            let rationale = if note.rationale.is_empty() {
                String::from("(no rationale)")
            } else {
                note.rationale.clone()
            };
            let _ = write!(out, "\n  - {} [{}]: {}", note.name, note.verdict.as_str(), rationale);
        }
    }
    out
}

pub fn candidate_label(index: usize) -> String {
    format!("Candidate {}:", index + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::types::{ComponentNote, Judgment, Verdict, DEFAULT_COMPONENTS};
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn render_replaces_only_known_tokens() {
        let t = "Q: {query_text} k={k} json {\"a\": 1} {unknown} {k";
        let r = render(t, &[("query_text", "dogs"), ("k", "3")]);
        assert_eq!(r, "Q: dogs k=3 json {\"a\": 1} {unknown} {k");
    }

    #[test]
    fn shipped_templates_use_known_placeholders_only() {
        let set = PromptSet::default();
        for (name, t) in [
            ("deconstruct_text", &set.deconstruct_text),
            ("deconstruct_composed", &set.deconstruct_composed),
            ("evaluate", &set.evaluate),
            ("evaluate_query", &set.evaluate_query),
            ("rank", &set.rank),
            ("rank_decomposition", &set.rank_decomposition),
            ("rank_query", &set.rank_query),
            ("repair", &set.repair),
        ] {
            let mut rest = t.as_str();
            while let Some(i) = rest.find('{') {
                let tail = &rest[i..];
                let word_end = tail[1..].find(|c: char| !(c.is_ascii_lowercase() || c == '_'));
                if let Some(end) = word_end {
                    if end > 0 && tail.as_bytes()[end + 1] == b'}' {
                        let token = &tail[..end + 2];
                        assert!(PLACEHOLDERS.contains(&token), "{name}: unexpected {token}");
                    }
                }
                rest = &tail[1..];
            }
        }
        assert!(set.deconstruct_text.contains("{query_text}"));
        assert!(set.deconstruct_composed.contains("{manipulation_text}"));
        assert!(set.evaluate.contains("{components}"));
        assert!(set.rank.contains("{evaluations}") && set.rank.contains("{k}"));
        for name in DEFAULT_COMPONENTS {
            assert!(set.deconstruct_text.contains(name));
        }
    }

    #[test]
    fn evaluations_are_numbered_without_ids() {
        let evals = vec![CandidateEvaluation {
            candidate_id: "secret-id".to_string(),
            overall: Judgment::ExcellentMatch,
            component_notes: vec![ComponentNote {
                name: "activity".into(),
                verdict: Verdict::Met,
                rationale: "dunking".into(),
            }],
            degraded: false,
        }];
        let text = render_evaluations(&evals);
        assert!(text.starts_with("Candidate 1: overall judgment = excellent match"));
        assert!(text.contains("activity [met]: dunking"));
        assert!(!text.contains("secret-id"));
    }
}
