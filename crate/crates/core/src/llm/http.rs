use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Completion, CompletionRequest, LlmBackend, LlmError, Usage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; requests go to `<endpoint>/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// USD per million prompt tokens, for accounting.
    #[serde(default)]
    pub prompt_price_per_mtok: f64,
    #[serde(default)]
    pub completion_price_per_mtok: f64,
}

fn default_timeout() -> f64 {
    120.0
}

/// Live chat-completions backend (OpenAI-compatible wire format).
#[derive(Clone, Debug)]
pub struct HttpBackend {
    cfg: HttpConfig,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        if cfg.endpoint.trim().is_empty() {
            return Err(LlmError::Config("endpoint is empty".into()));
        }
        if cfg.model.trim().is_empty() {
            return Err(LlmError::Config("model is empty".into()));
        }
        Ok(HttpBackend { cfg })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'))
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let mut messages = vec![json!({"role": "system", "content": req.system})];
        messages.extend(
            req.history
                .iter()
                .map(|m| json!({"role": m.role, "content": m.content})),
        );
        messages.push(json!({"role": "user", "content": req.prompt}));
        let body = json!({
            "model": self.cfg.model,
            "temperature": req.temperature,
            "messages": messages,
        });

        // A client per call keeps the blocking runtime off any async caller's thread.
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(self.cfg.timeout_s))
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        let mut request = client.post(self.url()).json(&body);
        if let Some(key) = &self.cfg.api_key {
            request = request.bearer_auth(key);
        }
        let resp = request.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transport(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !status.is_success() {
            return Err(LlmError::Config(format!("HTTP {status}: {}", snippet(&text))));
        }

        let v: Value =
            serde_json::from_str(&text).map_err(|e| LlmError::Transport(format!("malformed response body: {e}")))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::Transport("response has no message content".into()))?;
        let usage = Usage {
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        let cost_usd = (usage.prompt_tokens as f64 * self.cfg.prompt_price_per_mtok
            + usage.completion_tokens as f64 * self.cfg.completion_price_per_mtok)
            / 1e6;
        Ok(Completion {
            text: content.to_string(),
            model: v["model"].as_str().unwrap_or(&self.cfg.model).to_string(),
            usage,
            cost_usd,
        })
    }

    fn name(&self) -> String {
        self.cfg.model.clone()
    }
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;
    use crate::llm::Message;

    /// Serves `responses` in order, one per connection, and returns the request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn cfg(endpoint: String) -> HttpConfig {
        HttpConfig {
            endpoint,
            model: "gpt-test".into(),
            api_key: Some("k".into()),
            timeout_s: 5.0,
            prompt_price_per_mtok: 10.0,
            completion_price_per_mtok: 30.0,
        }
    }

    #[test]
    fn sends_history_and_reports_model_and_cost() {
        let reply = r#"{"model": "gpt-test-0125", "choices": [{"message": {"role": "assistant", "content": "stack"}}],
            "usage": {"prompt_tokens": 1000, "completion_tokens": 100}}"#;
        let (url, server) = serve(vec![(200, reply.into())]);
        let backend = HttpBackend::new(cfg(url)).unwrap();
        let history = [Message::user("q"), Message::assistant("a")];
        let c = backend
            .complete(&CompletionRequest {
                system: "sys",
                history: &history,
                prompt: "classify",
                temperature: 0.0,
                template: None,
            })
            .unwrap();
        assert_eq!(c.text, "stack");
        assert_eq!(c.model, "gpt-test-0125");
        assert!((c.cost_usd - 0.013).abs() < 1e-12);

        let body: Value = serde_json::from_str(&server.join().unwrap()[0]).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 4);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][3]["content"], "classify");
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn status_classes_map_to_error_kinds() {
        let (url, server) = serve(vec![(503, "{}".into()), (401, "{}".into())]);
        let backend = HttpBackend::new(cfg(url)).unwrap();
        let req = CompletionRequest {
            system: "s",
            history: &[],
            prompt: "p",
            temperature: 0.0,
            template: None,
        };
        assert!(backend.complete(&req).unwrap_err().is_retryable());
        assert!(matches!(backend.complete(&req).unwrap_err(), LlmError::Config(_)));
        server.join().unwrap();
    }
}
