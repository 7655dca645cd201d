//! Paraphrase-generation client: a remote chat-completion backend plus a
//! deterministic offline mock, behind one trait so the pipeline runs
//! without network access or API cost.

mod mock;
mod remote;

pub use mock::MockClient;
pub use remote::RemoteClient;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the API key for the remote backend.
/// The key is never accepted on the command line or stored in manifests.
pub const API_KEY_ENV: &str = "SATD_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by the backend after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("reply had no usable lines")]
    Parse,
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("missing API key: set the {API_KEY_ENV} environment variable")]
    MissingKey,
    #[error("invalid gateway configuration: {0}")]
    Config(String),
}

/// Chat roles of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One turn of a multi-turn dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
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

/// Which backend produced (or will produce) a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GatewayKind {
    Remote,
    Mock,
}

impl std::fmt::Display for GatewayKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GatewayKind::Remote => f.write_str("REMOTE"),
            GatewayKind::Mock => f.write_str("MOCK"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub kind: GatewayKind,
    /// Full URL of the chat-completion endpoint (remote only).
    pub endpoint: String,
    pub model: String,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Requests per minute; 0 disables rate limiting.
    pub rate_limit_per_minute: u32,
    pub timeout_ms: u64,
    pub mock_seed: u64,
    /// Optional JSONL audit log of request/response pairs (remote only).
    pub audit_log: Option<std::path::PathBuf>,
    /// Replace message texts with content hashes in the audit log.
    pub redact_audit: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            kind: GatewayKind::Mock,
            endpoint: String::new(),
            model: "gpt-3.5-turbo".to_string(),
            max_retries: 3,
            backoff_base_ms: 250,
            rate_limit_per_minute: 60,
            timeout_ms: 30_000,
            mock_seed: 0,
            audit_log: None,
            redact_audit: true,
        }
    }
}

/// What one generation call produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub paraphrases: Vec<String>,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// A paraphrase generator. Implementations must be safe for concurrent
/// callers up to the pipeline's configured in-flight limit.
pub trait GenerationClient: Send + Sync {
    /// Produce at most `n` paraphrases for the text carried by `dialogue`.
    fn generate(&self, dialogue: &[Message], n: usize) -> Result<GenerationResult, GatewayError>;

    fn kind(&self) -> GatewayKind;
}

/// Build the client selected by the config. The remote backend reads its
/// key from [`API_KEY_ENV`] and fails fast when it is absent.
pub fn build_client(config: &GatewayConfig) -> Result<Box<dyn GenerationClient>, GatewayError> {
    match config.kind {
        GatewayKind::Mock => Ok(Box::new(MockClient::new(config.mock_seed))),
        GatewayKind::Remote => {
            if config.endpoint.is_empty() {
                return Err(GatewayError::Config(
                    "remote gateway needs an endpoint URL".into(),
                ));
            }
            let key = std::env::var(API_KEY_ENV).map_err(|_| GatewayError::MissingKey)?;
            Ok(Box::new(RemoteClient::new(config.clone(), key)?))
        }
    }
}

/// Split a model reply into at most `n` paraphrases. Enumerated lines
/// ("1. ...", "2) ...") are preferred; when no enumeration is present the
/// reply is split on newlines instead.
pub fn parse_enumerated_reply(reply: &str, n: usize) -> Result<Vec<String>, GatewayError> {
    let mut saw_enumeration = false;
    let mut enumerated = Vec::new();
    let mut plain = Vec::new();
    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(stripped) = strip_enumeration(trimmed) {
            saw_enumeration = true;
            if !stripped.is_empty() {
                enumerated.push(stripped.to_string());
            }
        }
        plain.push(trimmed.to_string());
    }
    let mut lines = if saw_enumeration { enumerated } else { plain };
    for line in &mut lines {
        *line = strip_wrapping_quotes(line).to_string();
    }
    lines.retain(|l| !l.is_empty());
    if lines.is_empty() {
        return Err(GatewayError::Parse);
    }
    lines.truncate(n);
    Ok(lines)
}

fn strip_enumeration(line: &str) -> Option<&str> {
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some(rest.trim())
}

fn strip_wrapping_quotes(line: &str) -> &str {
    let line = line.trim();
    if line.len() >= 2 && line.starts_with('"') && line.ends_with('"') {
        &line[1..line.len() - 1]
    } else {
        line
    }
}
