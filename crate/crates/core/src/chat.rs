//! Chat-completion request model shared by the pipeline and every backend.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling temperature used for every call unless configuration overrides it.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::System => "system",
            Self::User => "user",
        }
    }
}

/// An encoded image ready for transmission.
#[derive(Clone, PartialEq, Eq)]
pub struct ImagePart {
    pub media_type: String,
    pub data: Vec<u8>,
}

impl fmt::Debug for ImagePart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImagePart")
            .field("media_type", &self.media_type)
            .field("bytes", &self.data.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentPart {
    Text(String),
    Image(ImagePart),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl Message {
    pub fn user(parts: Vec<ContentPart>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            parts: alloc::vec![ContentPart::Text(text.into())],
        }
    }
}

/// Which pipeline call a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Deconstruct,
    Evaluate,
    /// Listwise ranking over textual evaluations.
    Rank,
    /// Listwise ranking over the decomposition plus candidate images (R+D).
    RankWithDecomposition,
    /// Listwise ranking over the raw query plus candidate images (R).
    RankWithQuery,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Deconstruct => "deconstruct",
            Self::Evaluate => "evaluate",
            Self::Rank => "rank",
            Self::RankWithDecomposition => "rank_with_decomposition",
            Self::RankWithQuery => "rank_with_query",
        }
    }

    pub fn is_ranking(self) -> bool {
        matches!(self, Self::Rank | Self::RankWithDecomposition | Self::RankWithQuery)
    }
}

/// Bookkeeping that travels with a request but is never sent on the wire and
/// never enters the cache key. Mock backends read it to answer from fixture
/// labels; the transcript reads it for auditing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestContext {
    pub stage: Stage,
    pub query_id: String,
    /// Candidates referenced by the prompt, in prompt index order.
    pub candidate_ids: Vec<String>,
    /// Component names the reply must cover.
    pub components: Vec<String>,
    /// Set on the single "reply with valid JSON only" follow-up.
    pub repair: bool,
}

impl RequestContext {
    pub fn new(stage: Stage, query_id: impl Into<String>) -> Self {
        Self {
            stage,
            query_id: query_id.into(),
            candidate_ids: Vec::new(),
            components: Vec::new(),
            repair: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub context: RequestContext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub from_cache: bool,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("endpoint rejected the request with HTTP {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("scripted backend exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A chat-completions endpoint. Implementations must be safe to share
/// between worker threads.
pub trait ChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Issues independent requests, returning results in request order.
    /// Implementations may run them concurrently; callers rely only on the
    /// positional correspondence.
    fn chat_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, BackendError>> {
        requests.iter().map(|r| self.chat(r)).collect()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).chat(request)
    }

    fn chat_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, BackendError>> {
        (**self).chat_batch(requests)
    }
}

/// SHA-256 over the model, temperature, and every message field, each
/// length-prefixed. The request context is excluded.
pub fn cache_key(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    field(b"cotrr-chat-v1");
    field(request.model.as_bytes());
    field(&request.temperature.to_bits().to_le_bytes());
    field(&(request.messages.len() as u64).to_le_bytes());
    for message in &request.messages {
        field(message.role.as_str().as_bytes());
        field(&(message.parts.len() as u64).to_le_bytes());
        for part in &message.parts {
            match part {
                ContentPart::Text(text) => {
                    field(b"text");
                    field(text.as_bytes());
                }
                ContentPart::Image(image) => {
                    field(b"image");
                    field(image.media_type.as_bytes());
                    field(&image.data);
                }
            }
        }
    }
    to_hex(&hasher.finalize())
}

/// Lowercase hex SHA-256 of arbitrary bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

fn to_hex(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(HEX[(b >> 4) as usize] as char);
        out.push(HEX[(b & 0xf) as usize] as char);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformanceViolation {
    #[error("temperature {actual} differs from required {required}")]
    Temperature { actual: f64, required: f64 },
    #[error("request has no messages")]
    NoMessages,
    #[error("message {0} has no content parts")]
    EmptyMessage(usize),
    #[error("message {0} carries an image without a media type")]
    MissingMediaType(usize),
}

/// Checks a request against the profile's required temperature and the
/// structural message invariants.
pub fn check_conformance(request: &ChatRequest, required_temperature: f64) -> Result<(), ConformanceViolation> {
    if request.temperature.to_bits() != required_temperature.to_bits() {
        return Err(ConformanceViolation::Temperature {
            actual: request.temperature,
            required: required_temperature,
        });
    }
    if request.messages.is_empty() {
        return Err(ConformanceViolation::NoMessages);
    }
    for (i, message) in request.messages.iter().enumerate() {
        if message.parts.is_empty() {
            return Err(ConformanceViolation::EmptyMessage(i));
        }
        let untyped = message
            .parts
            .iter()
            .any(|p| matches!(p, ContentPart::Image(img) if img.media_type.is_empty()));
        if untyped {
            return Err(ConformanceViolation::MissingMediaType(i));
        }
    }
    Ok(())
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for ContentPart {
    fn from(text: &str) -> Self {
        Self::Text(text.to_string())
    }
}
