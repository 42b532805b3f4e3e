//! The three re-ranking stages and their ablation modes.
//!
//! Full mode runs deconstruction, one evaluation call per candidate, then a
//! single listwise ranking call over the textual evaluations. Every stage has
//! a fallback so a batch run never dies on one bad reply: an unparseable
//! evaluation becomes a degraded `no_match`, a failed ranking keeps the
//! initial order, and a failed deconstruction reuses the raw query text for
//! every component.

mod parse;
mod prompts;
mod repair;
mod types;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{
    cache_key, digest_hex, BackendError, ChatBackend, ChatRequest, ContentPart, ImagePart, Message, RequestContext,
    Stage, DEFAULT_TEMPERATURE,
};

pub use parse::{
    embedded_objects, extract_json_object, last_fenced_block, parse_decomposition, parse_evaluation, parse_ranking,
    ParseError,
};
pub use prompts::{render, render_components, render_evaluations, PromptSet, PLACEHOLDERS, PROMPT_VERSION};
pub use repair::{is_permutation, repair_permutation};
pub use types::{
    CandidateEvaluation, Component, ComponentNote, DialogueTurn, Judgment, Provenance, Query, QueryError, RankedEntry,
    RankedList, SemanticDecomposition, UnknownLabel, Verdict, DEFAULT_COMPONENTS, WHOLE_QUERY_COMPONENT,
};

/// Which stages run before the listwise ranking call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Ranking only, over the raw query and candidate images.
    R,
    /// Deconstruction, then ranking over components and candidate images.
    RD,
    /// Per-candidate evaluation against the raw query, then ranking.
    RE,
    /// Deconstruction, evaluation, ranking.
    #[default]
    RDE,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::R, Mode::RD, Mode::RE, Mode::RDE];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::R => "R",
            Self::RD => "R+D",
            Self::RE => "R+E",
            Self::RDE => "R+D+E",
        }
    }

    pub fn deconstructs(self) -> bool {
        matches!(self, Self::RD | Self::RDE)
    }

    pub fn evaluates(self) -> bool {
        matches!(self, Self::RE | Self::RDE)
    }

    /// Backend calls per query when every reply parses on the first try.
    pub fn expected_calls(self, k: usize) -> usize {
        match self {
            Self::R => 1,
            Self::RD => 2,
            Self::RE => k + 1,
            Self::RDE => k + 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}`; expected one of R, R+D, R+E, R+D+E")]
pub struct UnknownMode(pub String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        match compact.as_str() {
            "R" => Ok(Self::R),
            "R+D" | "RD" => Ok(Self::RD),
            "R+E" | "RE" => Ok(Self::RE),
            "R+D+E" | "RDE" => Ok(Self::RDE),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot load image `{reference}`: {message}")]
pub struct ImageError {
    pub reference: String,
    pub message: String,
}

/// Resolves candidate ids and reference-image paths to encoded images.
pub trait ImageSource {
    fn load(&self, reference: &str) -> Result<ImagePart, ImageError>;
}

impl<T: ImageSource + ?Sized> ImageSource for &T {
    fn load(&self, reference: &str) -> Result<ImagePart, ImageError> {
        (**self).load(reference)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model: String,
    pub temperature: f64,
    /// Component names requested from deconstruction, in order.
    pub components: Vec<String>,
    pub prompts: PromptSet,
    /// Re-attach candidate images to the evaluation-based ranking call.
    pub attach_thumbnails: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: "gemini-2.5-pro".into(),
            temperature: DEFAULT_TEMPERATURE,
            components: DEFAULT_COMPONENTS.iter().map(|s| s.to_string()).collect(),
            prompts: PromptSet::default(),
            attach_thumbnails: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Parsed,
    ParseFailed,
    BackendFailed,
}

/// One backend call, as recorded for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub query_id: String,
    pub stage: Stage,
    pub repair: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    pub request_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_digest: Option<String>,
    pub status: CallStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub attempts: u32,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("no candidates to re-rank")]
    NoCandidates,
    #[error("candidate `{0}` appears more than once")]
    DuplicateCandidate(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("deconstruction reply unusable ({error}); raw reply: {raw}")]
    Deconstruction { raw: String, error: ParseError },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Result of one listwise ranking call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingOutcome {
    pub ranked: RankedList,
    /// Why the initial order was kept, when the call failed.
    pub fallback: Option<String>,
}

/// Everything produced while re-ranking one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub mode: Mode,
    pub ranked: RankedList,
    pub decomposition: Option<SemanticDecomposition>,
    /// In candidate input order.
    pub evaluations: Vec<CandidateEvaluation>,
    pub transcript: Vec<TranscriptEntry>,
    pub deconstruction_error: Option<String>,
    pub ranking_fallback: Option<String>,
}

impl RerankOutcome {
    pub fn degraded_evaluations(&self) -> usize {
        self.evaluations.iter().filter(|e| e.degraded).count()
    }
}

enum CallFailure {
    Parse { raw: String, error: ParseError },
    Backend(BackendError),
}

impl CallFailure {
    fn describe(&self) -> String {
        match self {
            Self::Parse { error, .. } => format!("unparseable reply: {error}"),
            Self::Backend(e) => format!("backend error: {e}"),
        }
    }
}

/// Drives the stages against one backend and image source.
pub struct Pipeline<'a, B: ?Sized, I: ?Sized> {
    backend: &'a B,
    images: &'a I,
    config: &'a PipelineConfig,
}

impl<'a, B, I> Pipeline<'a, B, I>
where
    B: ChatBackend + ?Sized,
    I: ImageSource + ?Sized,
{
    pub fn new(backend: &'a B, images: &'a I, config: &'a PipelineConfig) -> Self {
        Self {
            backend,
            images,
            config,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        self.config
    }

    fn request(&self, context: RequestContext, parts: Vec<ContentPart>) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            messages: vec![Message::user(parts)],
            context,
        }
    }

    fn context(&self, stage: Stage, query_id: &str, candidates: &[String], components: Vec<String>) -> RequestContext {
        RequestContext {
            stage,
            query_id: query_id.to_string(),
            candidate_ids: candidates.to_vec(),
            components,
            repair: false,
        }
    }

    fn repair_request(&self, original: &ChatRequest, raw: &str, error: &ParseError) -> ChatRequest {
        let detail = error.to_string();
        let instruction = render(&self.config.prompts.repair, &[("error", detail.as_str())]);
        let mut request = original.clone();
        request.context.repair = true;
        request.messages.push(Message::user(vec![
            ContentPart::Text(format!("Your previous reply was:\n{raw}")),
            ContentPart::Text(instruction),
        ]));
        request
    }

    /// Issues `requests` concurrently (as the backend allows), parses each
    /// reply, and re-prompts once for every reply that fails to parse.
    /// Results are positional.
    fn call_batch<T>(
        &self,
        requests: Vec<ChatRequest>,
        parse: &dyn Fn(usize, &str) -> Result<T, ParseError>,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Vec<Result<T, CallFailure>> {
        let first = self.backend.chat_batch(&requests);
        let mut results: Vec<Option<Result<T, CallFailure>>> = Vec::with_capacity(requests.len());
        let mut retry: Vec<(usize, ChatRequest)> = Vec::new();
        for (i, (request, response)) in requests.iter().zip(first).enumerate() {
            match self.record(request, response, |raw| parse(i, raw), transcript) {
                Err(CallFailure::Parse { raw, error }) => {
                    retry.push((i, self.repair_request(request, &raw, &error)));
                    results.push(None);
                }
                other => results.push(Some(other)),
            }
        }
        if !retry.is_empty() {
            let (slots, repairs): (Vec<usize>, Vec<ChatRequest>) = retry.into_iter().unzip();
            let second = self.backend.chat_batch(&repairs);
            for ((slot, request), response) in slots.into_iter().zip(&repairs).zip(second) {
                results[slot] = Some(self.record(request, response, |raw| parse(slot, raw), transcript));
            }
        }
        results.into_iter().map(|r| r.expect("every slot filled")).collect()
    }

    fn call<T>(
        &self,
        request: ChatRequest,
        parse: &dyn Fn(&str) -> Result<T, ParseError>,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<T, CallFailure> {
        self.call_batch(vec![request], &|_, raw| parse(raw), transcript)
            .pop()
            .expect("one result per request")
    }

    fn record<T>(
        &self,
        request: &ChatRequest,
        response: Result<crate::chat::ChatResponse, BackendError>,
        parse: impl FnOnce(&str) -> Result<T, ParseError>,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<T, CallFailure> {
        let mut entry = TranscriptEntry {
            query_id: request.context.query_id.clone(),
            stage: request.context.stage,
            repair: request.context.repair,
            candidate_id: match request.context.stage {
                Stage::Evaluate => request.context.candidate_ids.first().cloned(),
                _ => None,
            },
            request_digest: cache_key(request),
            response_digest: None,
            status: CallStatus::BackendFailed,
            detail: None,
            attempts: 0,
            from_cache: false,
        };
        let outcome = match response {
            Err(e) => {
                entry.detail = Some(e.to_string());
                Err(CallFailure::Backend(e))
            }
            Ok(response) => {
                entry.response_digest = Some(digest_hex(response.text.as_bytes()));
                entry.attempts = response.attempts;
                entry.from_cache = response.from_cache;
                match parse(&response.text) {
                    Ok(v) => {
                        entry.status = CallStatus::Parsed;
                        Ok(v)
                    }
                    Err(error) => {
                        entry.status = CallStatus::ParseFailed;
                        entry.detail = Some(error.to_string());
                        Err(CallFailure::Parse {
                            raw: response.text,
                            error,
                        })
                    }
                }
            }
        };
        transcript.push(entry);
        outcome
    }

    fn deconstruct_request(&self, query_id: &str, query: &Query) -> Result<ChatRequest, PipelineError> {
        let context = self.context(Stage::Deconstruct, query_id, &[], self.config.components.clone());
        let parts = match query {
            Query::Text(text) => {
                vec![ContentPart::Text(render(
                    &self.config.prompts.deconstruct_text,
                    &[("query_text", text.as_str())],
                ))]
            }
            Query::Composed {
                reference_image,
                manipulation_text,
            } => {
                let image = self.images.load(reference_image)?;
                vec![
                    ContentPart::Image(image),
                    ContentPart::Text(render(
                        &self.config.prompts.deconstruct_composed,
                        &[("manipulation_text", manipulation_text.as_str())],
                    )),
                ]
            }
            Query::Dialogue { .. } => return Err(QueryError::UnflattenedDialogue.into()),
        };
        Ok(self.request(context, parts))
    }

    /// Splits the query into the configured semantic components with one
    /// backend call (plus at most one repair re-prompt).
    pub fn deconstruct(
        &self,
        query_id: &str,
        query: &Query,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<SemanticDecomposition, PipelineError> {
        let request = self.deconstruct_request(query_id, query)?;
        let names = &self.config.components;
        self.call(request, &|raw| parse_decomposition(raw, names), transcript)
            .map_err(|failure| match failure {
                CallFailure::Parse { raw, error } => PipelineError::Deconstruction { raw, error },
                CallFailure::Backend(e) => PipelineError::Backend(e),
            })
    }

    /// Like [`Self::deconstruct`], but a failed call yields a degraded
    /// decomposition whose components all carry the raw query text.
    fn deconstruct_or_fallback(
        &self,
        query_id: &str,
        query: &Query,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<(SemanticDecomposition, Option<String>), PipelineError> {
        match self.deconstruct(query_id, query, transcript) {
            Ok(d) => Ok((d, None)),
            Err(e @ (PipelineError::Deconstruction { .. } | PipelineError::Backend(_))) => {
                let fallback = SemanticDecomposition::fallback(&self.config.components, &query.display_text());
                Ok((fallback, Some(e.to_string())))
            }
            Err(e) => Err(e),
        }
    }

    fn query_parts(&self, query: &Query) -> Result<(Vec<ContentPart>, String), PipelineError> {
        match query {
            Query::Text(text) => Ok((Vec::new(), text.clone())),
            Query::Composed {
                reference_image,
                manipulation_text,
            } => {
                let image = self.images.load(reference_image)?;
                Ok((
                    vec![ContentPart::Text("Reference image:".into()), ContentPart::Image(image)],
                    format!("the reference image, changed as follows: {manipulation_text}"),
                ))
            }
            Query::Dialogue { .. } => Err(QueryError::UnflattenedDialogue.into()),
        }
    }

    fn evaluate_request(
        &self,
        query_id: &str,
        candidate_id: &str,
        decomposition: &SemanticDecomposition,
        raw_query: Option<&Query>,
    ) -> Result<ChatRequest, PipelineError> {
        let candidate = self.images.load(candidate_id)?;
        let context = self.context(
            Stage::Evaluate,
            query_id,
            &[candidate_id.to_string()],
            decomposition.names(),
        );
        let parts = match raw_query {
            None => vec![
                ContentPart::Image(candidate),
                ContentPart::Text(render(
                    &self.config.prompts.evaluate,
                    &[("components", render_components(decomposition).as_str())],
                )),
            ],
            Some(query) => {
                let (mut parts, text) = self.query_parts(query)?;
                if !parts.is_empty() {
                    parts.push(ContentPart::Text("Candidate image:".into()));
                }
                parts.push(ContentPart::Image(candidate));
                parts.push(ContentPart::Text(render(
                    &self.config.prompts.evaluate_query,
                    &[("query_text", text.as_str())],
                )));
                parts
            }
        };
        Ok(self.request(context, parts))
    }

    /// Evaluates one candidate image against the decomposition. An
    /// unparseable reply yields a degraded `no_match` record; backend errors
    /// are returned.
    pub fn evaluate_candidate(
        &self,
        query_id: &str,
        candidate_id: &str,
        decomposition: &SemanticDecomposition,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<CandidateEvaluation, PipelineError> {
        let request = self.evaluate_request(query_id, candidate_id, decomposition, None)?;
        match self.call(
            request,
            &|raw| parse_evaluation(raw, candidate_id, decomposition),
            transcript,
        ) {
            Ok(e) => Ok(e),
            Err(f @ CallFailure::Parse { .. }) => Ok(CandidateEvaluation::degraded(
                candidate_id,
                decomposition,
                &f.describe(),
            )),
            Err(CallFailure::Backend(e)) => Err(e.into()),
        }
    }

    /// Evaluates all candidates concurrently. With `raw_query` set the
    /// evaluation prompt carries the query itself instead of components.
    /// Every failure becomes a degraded record; image errors abort.
    fn evaluate_all(
        &self,
        query_id: &str,
        candidates: &[String],
        decomposition: &SemanticDecomposition,
        raw_query: Option<&Query>,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<Vec<CandidateEvaluation>, PipelineError> {
        let requests = candidates
            .iter()
            .map(|id| self.evaluate_request(query_id, id, decomposition, raw_query))
            .collect::<Result<Vec<_>, _>>()?;
        let results = self.call_batch(
            requests,
            &|i, raw| parse_evaluation(raw, &candidates[i], decomposition),
            transcript,
        );
        Ok(results
            .into_iter()
            .zip(candidates)
            .map(|(r, id)| match r {
                Ok(e) => e,
                Err(f) => CandidateEvaluation::degraded(id, decomposition, &f.describe()),
            })
            .collect())
    }

    fn rank_call(
        &self,
        request: ChatRequest,
        original: &[String],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> RankingOutcome {
        let k = original.len();
        let parsed = self.call(
            request,
            &|raw| {
                parse_ranking(raw).map(|indices| {
                    indices
                        .into_iter()
                        .filter(|i| (1..=k).contains(i))
                        .map(|i| original[i - 1].clone())
                        .collect::<Vec<_>>()
                })
            },
            transcript,
        );
        match parsed {
            Ok(order) => RankingOutcome {
                ranked: repair_permutation(&order, original),
                fallback: None,
            },
            Err(f) => RankingOutcome {
                ranked: RankedList::fallback(original),
                fallback: Some(f.describe()),
            },
        }
    }

    fn thumbnails(&self, candidates: &[String]) -> Result<Vec<ContentPart>, PipelineError> {
        let mut parts = Vec::with_capacity(candidates.len() * 2);
        for (i, id) in candidates.iter().enumerate() {
            parts.push(ContentPart::Text(prompts::candidate_label(i)));
            parts.push(ContentPart::Image(self.images.load(id)?));
        }
        Ok(parts)
    }

    /// Listwise ranking from the textual evaluations alone (no images unless
    /// thumbnails are enabled). Candidates are referred to by 1-based index.
    pub fn rank_listwise(
        &self,
        query_id: &str,
        evaluations: &[CandidateEvaluation],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<RankingOutcome, PipelineError> {
        let original: Vec<String> = evaluations.iter().map(|e| e.candidate_id.clone()).collect();
        check_candidates(&original)?;
        let k = original.len().to_string();
        let text = render(
            &self.config.prompts.rank,
            &[
                ("evaluations", render_evaluations(evaluations).as_str()),
                ("k", k.as_str()),
            ],
        );
        let mut parts = vec![ContentPart::Text(text)];
        if self.config.attach_thumbnails {
            parts.extend(self.thumbnails(&original)?);
        }
        let context = self.context(Stage::Rank, query_id, &original, Vec::new());
        Ok(self.rank_call(self.request(context, parts), &original, transcript))
    }

    fn rank_with_decomposition(
        &self,
        query_id: &str,
        decomposition: &SemanticDecomposition,
        candidates: &[String],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<RankingOutcome, PipelineError> {
        let k = candidates.len().to_string();
        let mut parts = vec![ContentPart::Text(render(
            &self.config.prompts.rank_decomposition,
            &[
                ("components", render_components(decomposition).as_str()),
                ("k", k.as_str()),
            ],
        ))];
        parts.extend(self.thumbnails(candidates)?);
        let context = self.context(Stage::RankWithDecomposition, query_id, candidates, Vec::new());
        Ok(self.rank_call(self.request(context, parts), candidates, transcript))
    }

    fn rank_with_query(
        &self,
        query_id: &str,
        query: &Query,
        candidates: &[String],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<RankingOutcome, PipelineError> {
        let k = candidates.len().to_string();
        let (mut parts, text) = self.query_parts(query)?;
        parts.push(ContentPart::Text(render(
            &self.config.prompts.rank_query,
            &[("query_text", text.as_str()), ("k", k.as_str())],
        )));
        parts.extend(self.thumbnails(candidates)?);
        let context = self.context(Stage::RankWithQuery, query_id, candidates, Vec::new());
        Ok(self.rank_call(self.request(context, parts), candidates, transcript))
    }

    /// Re-ranks `candidates` (initial-retrieval order, best first) in the
    /// given mode. The result is always a permutation of `candidates`.
    pub fn rerank(
        &self,
        query_id: &str,
        query: &Query,
        candidates: &[String],
        mode: Mode,
    ) -> Result<RerankOutcome, PipelineError> {
        self.rerank_reusing(query_id, query, candidates, mode, None)
    }

    /// Like [`Self::rerank`], but reuses the decomposition and any existing
    /// evaluations from `prior` instead of issuing fresh calls for them.
    pub fn rerank_reusing(
        &self,
        query_id: &str,
        query: &Query,
        candidates: &[String],
        mode: Mode,
        prior: Option<&RerankOutcome>,
    ) -> Result<RerankOutcome, PipelineError> {
        check_candidates(candidates)?;
        let flattened;
        let query = match query {
            Query::Dialogue { .. } => {
                flattened = Query::text(query.display_text())?;
                &flattened
            }
            q => q,
        };
        let mut transcript = Vec::new();
        let mut deconstruction_error = None;

        let decomposition = if mode.deconstructs() {
            match prior.and_then(|p| p.decomposition.clone()) {
                Some(d) => Some(d),
                None => {
                    let (d, err) = self.deconstruct_or_fallback(query_id, query, &mut transcript)?;
                    deconstruction_error = err;
                    Some(d)
                }
            }
        } else {
            None
        };

        let mut evaluations = Vec::new();
        let ranking = if mode.evaluates() {
            let (against, raw_query) = match &decomposition {
                Some(d) => (d.clone(), None),
                None => (SemanticDecomposition::whole_query(&query.display_text()), Some(query)),
            };
            let known: BTreeMap<&str, &CandidateEvaluation> = prior
                .map(|p| p.evaluations.iter().map(|e| (e.candidate_id.as_str(), e)).collect())
                .unwrap_or_default();
            let missing: Vec<String> = candidates
                .iter()
                .filter(|id| !known.contains_key(id.as_str()))
                .cloned()
                .collect();
            let fresh = self.evaluate_all(query_id, &missing, &against, raw_query, &mut transcript)?;
            let mut fresh: BTreeMap<String, CandidateEvaluation> =
                fresh.into_iter().map(|e| (e.candidate_id.clone(), e)).collect();
            evaluations = candidates
                .iter()
                .map(|id| match fresh.remove(id) {
                    Some(e) => e,
                    None => (*known[id.as_str()]).clone(),
                })
                .collect();
            self.rank_listwise(query_id, &evaluations, &mut transcript)?
        } else if let Some(d) = &decomposition {
            self.rank_with_decomposition(query_id, d, candidates, &mut transcript)?
        } else {
            self.rank_with_query(query_id, query, candidates, &mut transcript)?
        };

        debug_assert!(is_permutation(&ranking.ranked.ids(), candidates));
        Ok(RerankOutcome {
            mode,
            ranked: ranking.ranked,
            decomposition,
            evaluations,
            transcript,
            deconstruction_error,
            ranking_fallback: ranking.fallback,
        })
    }
}

fn check_candidates(candidates: &[String]) -> Result<(), PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::NoCandidates);
    }
    let mut seen = BTreeSet::new();
    for id in candidates {
        if !seen.insert(id.as_str()) {
            return Err(PipelineError::DuplicateCandidate(id.clone()));
        }
    }
    Ok(())
}
