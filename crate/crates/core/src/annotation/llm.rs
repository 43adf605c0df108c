use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::consistency::Annotator;
use super::prompt::{build_prompt, SYSTEM_MESSAGE};
use super::{parse_label, AnnotationError};
use crate::catalog::Item;
use crate::labels::Fbl9;

/// Chat-completion client settings (`[annotator]` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Environment variable holding the bearer credential. When unset the
    /// request is sent without an Authorization header (local servers).
    pub api_key_env: String,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub timeout_secs: u64,
    /// Extra requests allowed when a response carries no parseable code.
    pub parse_retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            temperature: 1.0,
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            timeout_secs: 60,
            parse_retries: 2,
        }
    }
}

/// Append-only JSON-lines record of every request and response.
#[derive(Debug)]
pub struct AnnotationLog {
    out: Mutex<BufWriter<File>>,
}

impl AnnotationLog {
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| AnnotationError::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(AnnotationLog {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(&self, mut entry: Value) {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        entry["timestamp_ms"] = json!(ts);
        let mut out = self.out.lock().expect("log lock poisoned");
        // A failed log write must not fail the annotation itself.
        if let Err(e) = writeln!(out, "{entry}").and_then(|_| out.flush()) {
            log::warn!("annotation log write failed: {e}");
        }
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    log: Option<Arc<AnnotationLog>>,
}

impl LlmClient {
    pub fn new(config: LlmConfig, log: Option<Arc<AnnotationLog>>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        LlmClient { config, agent, log }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(self.config.backoff_max_ms);
        Duration::from_millis(ms)
    }

    fn attempt(&self, body: &Value, attempt: u32) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let (outcome, status, text) = match req.send_json(body) {
            Err(e) => (Attempt::Retry(e.to_string()), None, None),
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                match resp.body_mut().read_to_string() {
                    Err(e) => (Attempt::Retry(e.to_string()), Some(status), None),
                    Ok(text) => {
                        let outcome = match status {
                            200..=299 => Attempt::Done(text.clone()),
                            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
                            _ => Attempt::Fatal(format!("HTTP {status}: {text}")),
                        };
                        (outcome, Some(status), Some(text))
                    }
                }
            }
        };
        if let Some(log) = &self.log {
            let error = match &outcome {
                Attempt::Done(_) => None,
                Attempt::Retry(m) | Attempt::Fatal(m) => Some(m.clone()),
            };
            log.record(json!({
                "endpoint": self.config.endpoint,
                "attempt": attempt,
                "request": body,
                "status": status,
                "response": text,
                "error": error,
            }));
        }
        outcome
    }

    /// Sends one chat-completion request and returns the message content.
    /// Transport failures, 429 and 5xx responses are retried with exponential
    /// backoff up to `max_attempts` in total.
    pub fn complete(&self, prompt: &str) -> Result<String, AnnotationError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": prompt},
            ],
        });
        let max = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.attempt(&body, attempt) {
                Attempt::Done(text) => return extract_content(&text),
                Attempt::Fatal(message) => return Err(AnnotationError::Transport { attempts: attempt, message }),
                Attempt::Retry(message) => {
                    log::debug!("attempt {attempt}/{max} failed: {message}");
                    last = message;
                    if attempt < max {
                        thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(AnnotationError::Transport {
            attempts: max,
            message: last,
        })
    }
}

fn extract_content(body: &str) -> Result<String, AnnotationError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| AnnotationError::Unparseable(format!("non-JSON response body: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default();
    if content.trim().is_empty() {
        return Err(AnnotationError::Unparseable("empty completion".into()));
    }
    Ok(content.to_owned())
}

/// Annotator backed by a chat-completion endpoint. Each draw is a separate
/// request; the seed is not forwarded since sampling happens server side.
pub struct LlmAnnotator {
    client: LlmClient,
    id: String,
}

impl LlmAnnotator {
    pub fn new(client: LlmClient) -> Self {
        let id = format!("llm:{}", client.config.model);
        LlmAnnotator { client, id }
    }
}

impl Annotator for LlmAnnotator {
    fn id(&self) -> &str {
        &self.id
    }

    fn annotate(&self, x: &Item, y: &Item, _draw_seed: u64) -> Result<Fbl9, AnnotationError> {
        let prompt = build_prompt(x, y);
        let mut last = None;
        for _ in 0..=self.client.config.parse_retries {
            let text = self.client.complete(&prompt)?;
            match parse_label(&text) {
                Ok(label) => return Ok(label),
                Err(e) => {
                    log::debug!("unparseable completion for ({}, {}): {e}", x.id, y.id);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"C-2"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "C-2");
        assert!(matches!(extract_content("<html>"), Err(AnnotationError::Unparseable(_))));
        assert!(matches!(
            extract_content(r#"{"choices":[{"message":{"content":"  "}}]}"#),
            Err(AnnotationError::Unparseable(_))
        ));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let client = LlmClient::new(
            LlmConfig {
                backoff_base_ms: 100,
                backoff_max_ms: 350,
                ..LlmConfig::default()
            },
            None,
        );
        assert_eq!(client.backoff(1), Duration::from_millis(100));
        assert_eq!(client.backoff(2), Duration::from_millis(200));
        assert_eq!(client.backoff(3), Duration::from_millis(350));
    }
}
