//! Language-model plumbing: prompt templates, chat sessions, backends and
//! reply parsing.

mod backends;
mod http;
pub mod parse;
mod session;
mod template;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backends::{LlmFixture, RecordingBackend, ReplayBackend, ScriptedBackend, SentRequest};
pub use http::{HttpBackend, HttpConfig};
pub use session::{ChatSession, PromptRecord, RetryPolicy};
pub use template::{PromptCatalog, PromptTemplate, RenderedPrompt, REQUIRED_TEMPLATES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
    }
}

/// One chat turn to complete: the conversation so far plus the new prompt.
#[derive(Clone, Copy, Debug)]
pub struct CompletionRequest<'a> {
    pub system: &'a str,
    pub history: &'a [Message],
    pub prompt: &'a str,
    pub temperature: f64,
    /// Template the prompt was rendered from; informational, not part of the digest.
    pub template: Option<&'a str>,
}

impl CompletionRequest<'_> {
    /// Hex SHA-256 of the conversation `(system, turns, prompt)`.
    pub fn digest(&self) -> String {
        let key = serde_json::json!({
            "system": self.system,
            "turns": self.history,
            "prompt": self.prompt,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub model: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub cost_usd: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded reply for conversation digest {digest}{}", template.as_ref().map(|t| format!(" (prompt `{t}`)")).unwrap_or_default())]
    MissingFixture { digest: String, template: Option<String> },
    #[error("budget exceeded: spent ${spent:.4} of ${limit:.4}")]
    BudgetExceeded { spent: f64, limit: f64 },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("prompt template: {0}")]
    Template(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

/// A chat-completion provider. `complete` either returns reply text or an error;
/// it never panics on bad input.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError>;

    /// Short name for logs and accounting.
    fn name(&self) -> String;
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}
