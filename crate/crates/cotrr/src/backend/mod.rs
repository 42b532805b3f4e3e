//! Chat backends: a retrying, caching, concurrency-bounded [`Client`] over a
//! pluggable [`Transport`] (HTTP or one of the mocks).

mod cache;
mod client;
mod http;
mod mock;
mod recording;
mod retry;

use std::fmt;
use std::str::FromStr;

use cotrr_core::ChatRequest;
use thiserror::Error;

pub use cache::{CacheEntry, DiskCache};
pub use client::{Client, Semaphore, DEFAULT_PARALLELISM};
pub use http::{HttpTransport, API_KEY_ENV, BASE_URL_ENV};
pub use mock::{Label, LabelError, Labels, MockKind, MockTransport, ScriptStep, ScriptedTransport, LABEL_COMPONENTS};
pub use recording::RecordingTransport;
pub use retry::RetryPolicy;

/// One failed round trip, before retry policy is applied.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("script exhausted after {served} responses")]
    ScriptExhausted { served: usize },
}

impl TransportError {
    /// Timeouts, connection failures, 429 and 5xx are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Status { status, .. } => *status == 429 || (500..600).contains(status),
            Self::Timeout(_) | Self::Connection(_) => true,
            Self::Malformed(_) | Self::ScriptExhausted { .. } => false,
        }
    }
}

/// Sends one request and returns the completion text.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

/// Parsed `--backend` value: `http` (or an explicit base URL) for a live
/// endpoint, or `mock:<kind>:<seed>[:<param>]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Http {
        base_url: Option<String>,
    },
    Mock {
        kind: MockKind,
        seed: u64,
        param: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid backend `{spec}`: {reason}")]
pub struct BackendSpecError {
    pub spec: String,
    pub reason: String,
}

impl BackendSpec {
    pub fn is_mock(&self) -> bool {
        matches!(self, Self::Mock { .. })
    }

    /// Directory-safe label, used to keep cache entries of different
    /// backends apart.
    pub fn cache_namespace(&self) -> String {
        match self {
            Self::Http { .. } => "http".into(),
            Self::Mock { kind, seed, param } => match param {
                Some(p) => format!("mock-{}-{seed}-{p}", kind.as_str()),
                None => format!("mock-{}-{seed}", kind.as_str()),
            },
        }
    }
}

impl FromStr for BackendSpec {
    type Err = BackendSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| BackendSpecError {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        if s == "http" || s == "live" {
            return Ok(Self::Http { base_url: None });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Self::Http {
                base_url: Some(s.trim_end_matches('/').to_string()),
            });
        }
        let mut fields = s.split(':');
        if fields.next() != Some("mock") {
            return Err(fail("expected `http`, a base URL, or `mock:<kind>:<seed>`"));
        }
        let kind: MockKind = fields
            .next()
            .ok_or_else(|| fail("missing mock kind"))?
            .parse()
            .map_err(|e: String| fail(&e))?;
        let seed = match fields.next() {
            None => 0,
            Some(v) => v.parse().map_err(|_| fail("seed must be an unsigned integer"))?,
        };
        let param = match fields.next() {
            None => None,
            Some(v) => Some(v.parse().map_err(|_| fail("parameter must be an unsigned integer"))?),
        };
        if fields.next().is_some() {
            return Err(fail("too many `:` fields"));
        }
        if kind == MockKind::Scripted {
            return Err(fail("scripted mocks are only available from the library"));
        }
        Ok(Self::Mock { kind, seed, param })
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Http { base_url: None } => f.write_str("http"),
            Self::Http { base_url: Some(url) } => f.write_str(url),
            Self::Mock {
                kind,
                seed,
                param: None,
            } => write!(f, "mock:{}:{seed}", kind.as_str()),
            Self::Mock {
                kind,
                seed,
                param: Some(p),
            } => write!(f, "mock:{}:{seed}:{p}", kind.as_str()),
        }
    }
}
