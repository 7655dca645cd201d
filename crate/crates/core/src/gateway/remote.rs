//! Chat-completion HTTP client with retry, exponential backoff, and a
//! shared token-bucket rate limiter.
//!
//! The wire format is the OpenAI-style JSON message array, so any
//! compatible service works by pointing `endpoint` at it.

use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    parse_enumerated_reply, GatewayConfig, GatewayError, GatewayKind, GenerationClient,
    GenerationResult, Message,
};

pub struct RemoteClient {
    config: GatewayConfig,
    api_key: String,
    agent: ureq::Agent,
    bucket: Mutex<TokenBucket>,
    audit: Option<Mutex<std::fs::File>>,
}

/// Continuous-refill token bucket shared by all in-flight requests.
struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill_per_sec: f64,
    last_refill: Instant,
}

impl TokenBucket {
    fn new(per_minute: u32) -> Self {
        let capacity = per_minute.max(1) as f64;
        TokenBucket {
            capacity,
            tokens: capacity,
            refill_per_sec: per_minute as f64 / 60.0,
            last_refill: Instant::now(),
        }
    }

    fn refill(&mut self) {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last_refill).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        self.last_refill = now;
    }

    /// Time to wait before a token is available; zero if one was taken.
    fn try_take(&mut self) -> Duration {
        self.refill();
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - self.tokens) / self.refill_per_sec)
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
}

impl RemoteClient {
    pub fn new(config: GatewayConfig, api_key: String) -> Result<Self, GatewayError> {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let audit = match &config.audit_log {
            Some(path) => {
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| GatewayError::Config(format!("cannot open audit log: {e}")))?;
                Some(Mutex::new(file))
            }
            None => None,
        };
        let bucket = Mutex::new(TokenBucket::new(config.rate_limit_per_minute));
        Ok(RemoteClient {
            config,
            api_key,
            agent,
            bucket,
            audit,
        })
    }

    fn acquire_slot(&self) {
        if self.config.rate_limit_per_minute == 0 {
            return;
        }
        loop {
            let wait = self.bucket.lock().expect("bucket lock").try_take();
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }

    fn audit_entry(&self, dialogue: &[Message], attempt: u32, response: &str) {
        let Some(audit) = &self.audit else { return };
        let render = |text: &str| {
            if self.config.redact_audit {
                format!("sha256:{:x}", Sha256::digest(text.as_bytes()))
            } else {
                text.to_string()
            }
        };
        let entry = serde_json::json!({
            "attempt": attempt,
            "model": self.config.model,
            "request": dialogue
                .iter()
                .map(|m| serde_json::json!({"role": m.role, "content": render(&m.content)}))
                .collect::<Vec<_>>(),
            "response": render(response),
        });
        let mut file = audit.lock().expect("audit lock");
        let _ = writeln!(file, "{entry}");
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16)))
    }

    fn extract_content(value: &serde_json::Value) -> Option<&str> {
        value
            .get("choices")?
            .get(0)?
            .get("message")?
            .get("content")?
            .as_str()
    }
}

impl GenerationClient for RemoteClient {
    fn generate(&self, dialogue: &[Message], n: usize) -> Result<GenerationResult, GatewayError> {
        if n == 0 || dialogue.is_empty() {
            return Err(GatewayError::Config(
                "generation needs n >= 1 and a non-empty dialogue".into(),
            ));
        }
        let body = ChatRequest {
            model: &self.config.model,
            messages: dialogue,
        };
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            self.acquire_slot();
            let response = self
                .agent
                .post(&self.config.endpoint)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .set("Content-Type", "application/json")
                .send_json(&body);
            match response {
                Ok(resp) => {
                    let value: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| GatewayError::Transport(e.to_string()))?;
                    let content = Self::extract_content(&value)
                        .ok_or(GatewayError::Parse)?
                        .to_string();
                    self.audit_entry(dialogue, attempts, &content);
                    let paraphrases = parse_enumerated_reply(&content, n)?;
                    return Ok(GenerationResult {
                        paraphrases,
                        raw_response: content,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                    });
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let detail = resp.into_string().unwrap_or_default();
                    self.audit_entry(dialogue, attempts, &format!("HTTP {code}: {detail}"));
                    match code {
                        401 | 403 => return Err(GatewayError::Auth(format!("HTTP {code}"))),
                        429 => {
                            if attempts > self.config.max_retries {
                                return Err(GatewayError::RateLimited { attempts });
                            }
                        }
                        500..=599 => {
                            if attempts > self.config.max_retries {
                                return Err(GatewayError::Transport(format!(
                                    "HTTP {code} after {attempts} attempts"
                                )));
                            }
                        }
                        _ => {
                            return Err(GatewayError::Transport(format!(
                                "HTTP {code}: {detail}"
                            )))
                        }
                    }
                }
                Err(ureq::Error::Transport(t)) => {
                    self.audit_entry(dialogue, attempts, &format!("transport: {t}"));
                    if attempts > self.config.max_retries {
                        return Err(GatewayError::Timeout { attempts });
                    }
                }
            }
            std::thread::sleep(self.backoff(attempts - 1));
        }
    }

    fn kind(&self) -> GatewayKind {
        GatewayKind::Remote
    }
}
