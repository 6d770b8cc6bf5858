use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionRequest, LlmBackend, LlmError, Message, Usage};

/// One recorded exchange, stored as `<digest>.json` in a fixture directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmFixture {
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub prompt: String,
    pub reply: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub cost_usd: f64,
}

/// Answers from recorded replies keyed by conversation digest.
#[derive(Clone, Debug, Default)]
pub struct ReplayBackend {
    fixtures: HashMap<String, LlmFixture>,
}

impl ReplayBackend {
    pub fn load(dir: &Path) -> Result<Self, LlmError> {
        let config = |msg: String| LlmError::Config(msg);
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| config(format!("fixture directory {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut fixtures = HashMap::new();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| config(format!("{}: {e}", path.display())))?;
            let fx: LlmFixture = serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
            fixtures.insert(fx.digest.clone(), fx);
        }
        Ok(ReplayBackend { fixtures })
    }

    pub fn from_fixtures(fixtures: impl IntoIterator<Item = LlmFixture>) -> Self {
        ReplayBackend {
            fixtures: fixtures.into_iter().map(|f| (f.digest.clone(), f)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let digest = req.digest();
        let fx = self.fixtures.get(&digest).ok_or_else(|| LlmError::MissingFixture {
            digest: digest.clone(),
            template: req.template.map(str::to_string),
        })?;
        Ok(Completion {
            text: fx.reply.clone(),
            model: if fx.model.is_empty() {
                "replay".into()
            } else {
                fx.model.clone()
            },
            usage: fx.usage,
            cost_usd: fx.cost_usd,
        })
    }

    fn name(&self) -> String {
        "replay".into()
    }
}

/// A request as seen by [`ScriptedBackend`], kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct SentRequest {
    pub system: String,
    pub history: Vec<Message>,
    pub prompt: String,
    pub template: Option<String>,
    pub digest: String,
}

type Responder = Box<dyn Fn(&SentRequest) -> Result<String, LlmError> + Send + Sync>;

enum Script {
    Queue(Mutex<VecDeque<String>>),
    Func(Responder),
}

/// Deterministic backend for tests and fixture authoring: replies come from a
/// fixed queue or a function of the request.
pub struct ScriptedBackend {
    script: Script,
    sent: Mutex<Vec<SentRequest>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend {
            script: Script::Queue(Mutex::new(replies.into_iter().map(Into::into).collect())),
            sent: Mutex::new(Vec::new()),
        }
    }

    pub fn from_fn(f: impl Fn(&SentRequest) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        ScriptedBackend {
            script: Script::Func(Box::new(f)),
            sent: Mutex::new(Vec::new()),
        }
    }

    pub fn sent(&self) -> Vec<SentRequest> {
        self.sent.lock().expect("lock").clone()
    }

    pub fn remaining(&self) -> usize {
        match &self.script {
            Script::Queue(q) => q.lock().expect("lock").len(),
            Script::Func(_) => usize::MAX,
        }
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let sent = SentRequest {
            system: req.system.to_string(),
            history: req.history.to_vec(),
            prompt: req.prompt.to_string(),
            template: req.template.map(str::to_string),
            digest: req.digest(),
        };
        let reply = match &self.script {
            Script::Queue(q) => q
                .lock()
                .expect("lock")
                .pop_front()
                .ok_or_else(|| LlmError::MissingFixture {
                    digest: sent.digest.clone(),
                    template: sent.template.clone(),
                })?,
            Script::Func(f) => f(&sent)?,
        };
        let usage = Usage {
            prompt_tokens: approx_tokens(req.system)
                + req.history.iter().map(|m| approx_tokens(&m.content)).sum::<u64>()
                + approx_tokens(req.prompt),
            completion_tokens: approx_tokens(&reply),
        };
        self.sent.lock().expect("lock").push(sent);
        Ok(Completion {
            text: reply,
            model: "scripted".into(),
            usage,
            cost_usd: 0.0,
        })
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// Rough token estimate (four characters per token).
fn approx_tokens(s: &str) -> u64 {
    (s.chars().count() as u64).div_ceil(4)
}

/// Forwards to an inner backend and stores each exchange as a replay fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(RecordingBackend { inner, dir })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(req)?;
        let fx = LlmFixture {
            digest: req.digest(),
            template: req.template.map(str::to_string),
            prompt: req.prompt.to_string(),
            reply: completion.text.clone(),
            model: completion.model.clone(),
            usage: completion.usage,
            cost_usd: completion.cost_usd,
        };
        let path = self.dir.join(format!("{}.json", fx.digest));
        let mut text = serde_json::to_string_pretty(&fx).expect("fixture serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(completion)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(history: &'a [Message], prompt: &'a str) -> CompletionRequest<'a> {
        CompletionRequest {
            system: "sys",
            history,
            prompt,
            temperature: 0.0,
            template: Some("classify"),
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(ScriptedBackend::new(["stack", "pile"]), dir.path()).unwrap();
        let h = [Message::user("x"), Message::assistant("y")];
        rec.complete(&req(&[], "a")).unwrap();
        rec.complete(&req(&h, "a")).unwrap();

        let replay = ReplayBackend::load(dir.path()).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.complete(&req(&[], "a")).unwrap().text, "stack");
        assert_eq!(replay.complete(&req(&h, "a")).unwrap().text, "pile");
    }

    #[test]
    fn unknown_digest_is_missing_fixture() {
        let replay = ReplayBackend::default();
        match replay.complete(&req(&[], "a")).unwrap_err() {
            LlmError::MissingFixture { digest, template } => {
                assert_eq!(digest.len(), 64);
                assert_eq!(template.as_deref(), Some("classify"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exhausted_script_errors() {
        let b = ScriptedBackend::new(["only"]);
        assert!(b.complete(&req(&[], "a")).is_ok());
        assert!(b.complete(&req(&[], "a")).is_err());
        assert_eq!(b.sent().len(), 1);
    }
}
