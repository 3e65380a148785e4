//! Chat-completion transports: an OpenAI-compatible HTTP client and a
//! scripted in-process backend for offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// A single failed round-trip. Retried by callers.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait ChatBackend: Send + Sync {
    /// Send one single-turn prompt and return the completion text.
    ///
    /// `subject` is the text the prompt is about (the variant text for
    /// classification). Remote backends ignore it; the scripted backend keys
    /// its responses on it.
    fn complete(&self, prompt: &str, subject: &str) -> Result<String, TransportError>;
}

#[derive(Debug)]
pub struct HttpChatBackend {
    url: String,
    model: String,
    temperature: Option<f64>,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        temperature: Option<f64>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::InvalidInput(format!("http client: {e}")))?;
        Ok(Self {
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            temperature,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, prompt: &str, _subject: &str) -> Result<String, TransportError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| TransportError(format!("request to {} failed: {e}", self.url)))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(TransportError(format!("{} returned {status}: {text}", self.url)));
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| TransportError(format!("bad completion payload: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| TransportError("completion has no choices".into()))
    }
}

/// Canned completions keyed by the SHA-256 hex digest of the subject text.
/// The key `"*"`, when present, answers every unknown subject.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, String>,
}

pub const SCRIPT_WILDCARD: &str = "*";

impl ScriptedBackend {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self { responses }
    }

    /// Build from `(subject text, completion)` pairs.
    pub fn from_texts<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(s, c)| (sha256_hex(s), c.to_string()))
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&body)?))
    }

    pub fn with_default(mut self, completion: impl Into<String>) -> Self {
        self.responses
            .insert(SCRIPT_WILDCARD.to_string(), completion.into());
        self
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _prompt: &str, subject: &str) -> Result<String, TransportError> {
        let key = sha256_hex(subject);
        self.responses
            .get(&key)
            .or_else(|| self.responses.get(SCRIPT_WILDCARD))
            .cloned()
            .ok_or_else(|| TransportError(format!("no scripted response for subject {key}")))
    }
}

/// Call `backend` up to `1 + max_retries` times until a round-trip succeeds.
pub fn complete_with_retries(
    backend: &dyn ChatBackend,
    prompt: &str,
    subject: &str,
    max_retries: u32,
    backoff: Duration,
) -> Result<String, TransportError> {
    let mut attempt = 0;
    loop {
        match backend.complete(prompt, subject) {
            Ok(text) => return Ok(text),
            Err(e) if attempt >= max_retries => return Err(e),
            Err(e) => {
                tracing::warn!(attempt, error = %e, "chat completion failed, retrying");
                attempt += 1;
                if !backoff.is_zero() {
                    std::thread::sleep(backoff * attempt);
                }
            }
        }
    }
}
