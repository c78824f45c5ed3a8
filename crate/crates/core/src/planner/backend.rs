use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{build_prompt, SYSTEM_PROMPT};
use super::retrieval::Demonstration;
use super::PromptSpec;
use crate::codec::{parse, ParseOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

/// Generation settings. The endpoint and credentials are not part of this
/// struct; transports read them from their own environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    /// Repair attempts after a reply fails to parse.
    pub retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            model: String::from("default"),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_ms: 60_000,
            retries: 1,
        }
    }
}

/// A chat-completion model. Implementations should be deterministic at
/// temperature 0; the planner does not enforce it.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

/// Replays a fixed list of replies, repeating the last one when exhausted.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: Vec<Result<String, BackendError>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<String, BackendError>>) -> Self {
        assert!(!replies.is_empty(), "a scripted backend needs at least one reply");
        Self {
            replies,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn always(reply: impl Into<String>) -> Self {
        Self::new(vec![Ok(reply.into())])
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.replies[n.min(self.replies.len() - 1)].clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// Outcome of the last reply; earlier failed attempts are not counted.
    pub outcome: ParseOutcome,
    pub repair_count: u32,
    /// Every message exchanged, ending with the final reply.
    pub transcript: Vec<ChatMessage>,
}

impl PlanResult {
    pub fn raw_reply(&self) -> &str {
        self.outcome.raw_text()
    }
}

/// Sends `messages`, then up to `retries` repair turns that quote the
/// failure reason.
pub(crate) fn converse(
    mut messages: Vec<ChatMessage>,
    spec: &PromptSpec,
    backend: &dyn ChatBackend,
    retries: u32,
) -> Result<PlanResult, BackendError> {
    let mut repair_count = 0;
    loop {
        let reply = backend.complete(&messages)?;
        let outcome = parse(&reply, spec.format, spec.canvas_w, spec.canvas_h);
        messages.push(ChatMessage::new(Role::Assistant, reply));
        match outcome.failure_reason() {
            Some(reason) if repair_count < retries => {
                repair_count += 1;
                messages.push(ChatMessage::new(
                    Role::User,
                    format!(
                        "The previous answer could not be parsed ({reason}). Reply again with only the layout in the required format."
                    ),
                ));
            }
            _ => {
                return Ok(PlanResult {
                    outcome,
                    repair_count,
                    transcript: messages,
                })
            }
        }
    }
}

/// Builds the prompt, asks the backend and parses the reply strictly.
pub fn plan_layout(
    spec: &PromptSpec,
    demos: &[Demonstration],
    backend: &dyn ChatBackend,
    retries: u32,
) -> Result<PlanResult, BackendError> {
    let messages = vec![
        ChatMessage::new(Role::System, SYSTEM_PROMPT),
        ChatMessage::new(Role::User, build_prompt(spec, demos)),
    ];
    converse(messages, spec, backend, retries)
}
