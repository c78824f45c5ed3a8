//! Chat-completion transport over HTTP.
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature",
//! "max_tokens"}`. The reply text is read from `choices[0].message.content`.

use std::time::Duration;

use layplan_core::planner::{BackendConfig, BackendError, ChatBackend, ChatMessage};
use serde::Serialize;
use serde_json::Value;

pub const URL_VAR: &str = "LAYPLAN_BACKEND_URL";
pub const KEY_VAR: &str = "LAYPLAN_BACKEND_KEY";
pub const MODEL_VAR: &str = "LAYPLAN_BACKEND_MODEL";

#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    url: String,
    key: Option<String>,
    config: BackendConfig,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

fn env_nonempty(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl HttpChatBackend {
    pub fn new(url: impl Into<String>, key: Option<String>, config: BackendConfig) -> Self {
        Self {
            url: url.into(),
            key,
            config,
        }
    }

    /// `None` when no endpoint is configured. The model variable overrides
    /// `config.model`.
    pub fn from_env(mut config: BackendConfig) -> Option<Self> {
        let url = env_nonempty(URL_VAR)?;
        if let Some(m) = env_nonempty(MODEL_VAR) {
            config.model = m;
        }
        Some(Self::new(url, env_nonempty(KEY_VAR), config))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }
}

/// Posts `body` and returns the decoded JSON reply. Must run off the async
/// executor: the blocking client owns its own runtime.
pub(crate) fn post_json(url: &str, key: Option<&str>, timeout_ms: u64, body: &impl Serialize) -> Result<Value, BackendError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_millis(timeout_ms))
        .build()
        .map_err(|e| BackendError::Protocol(e.to_string()))?;
    let mut req = client.post(url).json(body);
    if let Some(k) = key {
        req = req.bearer_auth(k);
    }
    let map = |e: reqwest::Error| {
        if e.is_timeout() {
            BackendError::Timeout(timeout_ms)
        } else {
            BackendError::Protocol(e.to_string())
        }
    };
    let resp = req.send().map_err(map)?;
    let status = resp.status();
    let text = resp.text().map_err(map)?;
    if !status.is_success() {
        let snippet: String = text.chars().take(200).collect();
        return Err(BackendError::Protocol(format!("HTTP {status}: {snippet}")));
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("reply is not JSON: {e}")))
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = Request {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let reply = post_json(&self.url, self.key.as_deref(), self.config.timeout_ms, &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Protocol("reply has no choices[0].message.content".into()))
    }
}
