use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmBackend, LlmError, Message, RenderedPrompt, Usage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Extra attempts after the first transport failure.
    pub max_retries: u32,
    /// Delay before retry `n` is `base_delay_ms * 2^n`.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub const NO_DELAY: RetryPolicy = RetryPolicy {
        max_retries: 3,
        base_delay_ms: 0,
    };
}

/// Log entry for one prompt sent in a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub template: String,
    pub values: BTreeMap<String, String>,
    pub prompt: String,
    pub reply: String,
    pub model: String,
    pub attempts: u32,
    pub usage: Usage,
    pub cost_usd: f64,
}

/// A multi-turn conversation. Turns are append-only; the system message is
/// fixed at creation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChatSession {
    pub id: String,
    pub system: String,
    pub temperature: f64,
    pub turns: Vec<Message>,
    pub log: Vec<PromptRecord>,
    pub usage: Usage,
    pub cost_usd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_usd: Option<f64>,
}

impl ChatSession {
    pub fn new(id: impl Into<String>, system: impl Into<String>) -> Self {
        ChatSession {
            id: id.into(),
            system: system.into(),
            temperature: 0.0,
            turns: Vec::new(),
            log: Vec::new(),
            usage: Usage::default(),
            cost_usd: 0.0,
            budget_usd: None,
        }
    }

    /// Caps the total cost this session may accrue.
    pub fn with_budget(mut self, limit_usd: Option<f64>) -> Self {
        self.budget_usd = limit_usd;
        self
    }

    /// Sends `prompt`, retrying transport failures with exponential backoff,
    /// and appends the exchange on success.
    pub fn complete(
        &mut self,
        backend: &dyn LlmBackend,
        prompt: &RenderedPrompt,
        retry: RetryPolicy,
    ) -> Result<String, LlmError> {
        if let Some(limit) = self.budget_usd {
            if self.cost_usd >= limit {
                return Err(LlmError::BudgetExceeded {
                    spent: self.cost_usd,
                    limit,
                });
            }
        }
        let req = CompletionRequest {
            system: &self.system,
            history: &self.turns,
            prompt: &prompt.text,
            temperature: self.temperature,
            template: Some(&prompt.template),
        };
        let mut attempt = 0;
        let completion = loop {
            attempt += 1;
            match backend.complete(&req) {
                Ok(c) => break c,
                Err(e) if e.is_retryable() && attempt <= retry.max_retries => {
                    let delay = retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                    tracing::warn!(session = %self.id, attempt, "{e}; retrying in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                }
                Err(e) => return Err(e),
            }
        };

        self.usage += completion.usage;
        self.cost_usd += completion.cost_usd.max(0.0);
        self.turns.push(Message::user(prompt.text.clone()));
        self.turns.push(Message::assistant(completion.text.clone()));
        self.log.push(PromptRecord {
            template: prompt.template.clone(),
            values: prompt.values.clone(),
            prompt: prompt.text.clone(),
            reply: completion.text.clone(),
            model: completion.model,
            attempts: attempt,
            usage: completion.usage,
            cost_usd: completion.cost_usd,
        });
        Ok(completion.text)
    }

    pub fn calls(&self) -> usize {
        self.log.len()
    }

    /// Writes the transcript as `<dir>/<id>.json`.
    pub fn save_transcript(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.id));
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::llm::{Completion, PromptCatalog, ScriptedBackend};

    struct Flaky {
        failures: AtomicU32,
    }

    impl LlmBackend for Flaky {
        fn complete(&self, _req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(LlmError::Transport("connection reset".into()));
            }
            Ok(Completion {
                text: "stack".into(),
                model: "flaky-1".into(),
                usage: Usage {
                    prompt_tokens: 10,
                    completion_tokens: 1,
                },
                cost_usd: 0.25,
            })
        }

        fn name(&self) -> String {
            "flaky".into()
        }
    }

    fn prompt() -> RenderedPrompt {
        PromptCatalog::bundled()
            .render("classify", &[("DESCRIPTION", "a stack of plates")])
            .unwrap()
    }

    #[test]
    fn retries_transport_errors_up_to_the_limit() {
        let ok = Flaky {
            failures: AtomicU32::new(3),
        };
        let mut s = ChatSession::new("s", "sys");
        assert_eq!(s.complete(&ok, &prompt(), RetryPolicy::NO_DELAY).unwrap(), "stack");
        assert_eq!(s.log[0].attempts, 4);

        let bad = Flaky {
            failures: AtomicU32::new(4),
        };
        let mut s = ChatSession::new("s", "sys");
        let err = s.complete(&bad, &prompt(), RetryPolicy::NO_DELAY).unwrap_err();
        assert!(matches!(err, LlmError::Transport(_)));
        assert!(s.turns.is_empty());
    }

    #[test]
    fn turns_append_and_cost_is_monotone() {
        let b = Flaky {
            failures: AtomicU32::new(0),
        };
        let mut s = ChatSession::new("s", "sys").with_budget(Some(0.6));
        let mut last = 0.0;
        for _ in 0..3 {
            s.complete(&b, &prompt(), RetryPolicy::NO_DELAY).unwrap();
            assert!(s.cost_usd >= last);
            last = s.cost_usd;
        }
        assert_eq!(s.turns.len(), 6);
        assert_eq!(s.usage.prompt_tokens, 30);
        assert_eq!(s.log[0].model, "flaky-1");
        let err = s.complete(&b, &prompt(), RetryPolicy::NO_DELAY).unwrap_err();
        assert!(matches!(err, LlmError::BudgetExceeded { .. }));
        assert_eq!(s.turns.len(), 6);
    }

    #[test]
    fn history_grows_with_each_exchange() {
        let b = ScriptedBackend::new(["one", "two"]);
        let mut s = ChatSession::new("s", "sys");
        s.complete(&b, &prompt(), RetryPolicy::NO_DELAY).unwrap();
        s.complete(&b, &prompt(), RetryPolicy::NO_DELAY).unwrap();
        let sent = b.sent();
        assert_eq!(sent[0].history.len(), 0);
        assert_eq!(sent[1].history.len(), 2);
        assert_eq!(sent[1].history[1].content, "one");
    }

    #[test]
    fn transcript_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let b = ScriptedBackend::new(["pile"]);
        let mut s = ChatSession::new("classify-1", "sys");
        s.complete(&b, &prompt(), RetryPolicy::NO_DELAY).unwrap();
        let path = s.save_transcript(dir.path()).unwrap();
        let back: ChatSession = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back.turns, s.turns);
        assert_eq!(back.log[0].template, "classify");
    }
}
