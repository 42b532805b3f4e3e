//! OpenAI-style chat-completions over HTTP.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use cotrr_core::{ChatRequest, ContentPart};
use serde_json::{json, Value};

use super::{Transport, TransportError};

pub const API_KEY_ENV: &str = "COTRR_API_KEY";
pub const BASE_URL_ENV: &str = "COTRR_BASE_URL";

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    /// `base_url` is the API root; requests go to `{base_url}/chat/completions`.
    pub fn new(base_url: &str, api_key: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// The JSON request body. Images travel as base64 data URLs.
pub fn request_body(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let content: Vec<Value> = m
                .parts
                .iter()
                .map(|part| match part {
                    ContentPart::Text(text) => json!({"type": "text", "text": text}),
                    ContentPart::Image(img) => json!({
                        "type": "image_url",
                        "image_url": {
                            "url": format!("data:{};base64,{}", img.media_type, STANDARD.encode(&img.data))
                        }
                    }),
                })
                .collect();
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": messages,
    })
}

/// Text of the first choice. Content given as an array of parts is joined.
pub fn completion_text(body: &str) -> Result<String, TransportError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| TransportError::Malformed(format!("response is not JSON: {e}")))?;
    let content = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    };
    if text.is_empty() {
        return Err(TransportError::Malformed("completion text is empty".into()));
    }
    Ok(text)
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::to_vec(&request_body(request)).expect("request body serializes");
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(&body[..]);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(TransportError::Timeout(t.to_string())),
            Err(e) => return Err(TransportError::Connection(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
            other => TransportError::Connection(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        completion_text(&text)
    }
}
