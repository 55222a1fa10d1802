//! Chat backends: an OpenAI-compatible HTTP client, a fingerprint-keyed
//! replay store, and a scripted client for offline fixtures.
//!
//! Request fingerprint: SHA-256 (hex) of the canonical JSON (sorted keys,
//! `", "` and `": "` separators)
//! `{"messages": [{"parts": [{"text": ..., "type": "text"},
//! {"png_sha256": ..., "type": "image"}], "role": "user"}]}`. Text is hashed as UTF-8, images
//! by the SHA-256 of their PNG encoding. Model name, temperature and token
//! limits are not part of the key.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::json::to_canonical_string;
use crate::raster::{save_png, Raster};

pub const ENV_ENDPOINT: &str = "REFOCUS_ENDPOINT";
pub const ENV_API_KEY: &str = "REFOCUS_API_KEY";
pub const ENV_MODEL: &str = "REFOCUS_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(Arc<Raster>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, parts: vec![Part::Text(text.into())] }
    }

    pub fn user(parts: Vec<Part>) -> Self {
        ChatMessage { role: Role::User, parts }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, parts: vec![Part::Text(text.into())] }
    }

    /// Text parts joined by newlines.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Empty means the client's configured model.
    pub model_name: String,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        ChatRequest { messages, temperature: 0.0, max_output_tokens: 1024, model_name: String::new() }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.parts.is_empty() {
                return Err(LlmError::InvalidRequest(format!("message {i} has no parts")));
            }
            if m.role == Role::System && m.parts.iter().any(|p| matches!(p, Part::Image(_))) {
                return Err(LlmError::InvalidRequest("system messages are text-only".into()));
            }
        }
        Ok(())
    }

    /// Replay key, see the module docs.
    pub fn fingerprint(&self) -> String {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image(r) => json!({"type": "image", "png_sha256": hex::encode(Sha256::digest(save_png(r)))}),
                    })
                    .collect();
                json!({"role": m.role.as_str(), "parts": parts})
            })
            .collect();
        let canon = to_canonical_string(&json!({ "messages": messages }));
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("TransportError: {0}")]
    Transport(String),
    #[error("AuthError: {0}")]
    Auth(String),
    #[error("ReplayMiss: no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("StorageError: {0}")]
    Storage(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("ConfigError: {0}")]
    Config(String),
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<C: ChatClient + ?Sized> ChatClient for Arc<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    fingerprint: String,
    response: String,
}

/// Fingerprint to response map, optionally backed by a JSONL file that
/// new records are appended to.
#[derive(Debug, Default)]
pub struct ReplayStore {
    path: Option<PathBuf>,
    map: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl ReplayStore {
    pub fn in_memory() -> Self {
        ReplayStore::default()
    }

    /// Load `path` if it exists; records are appended to it. Later lines win
    /// over earlier ones with the same fingerprint.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| LlmError::Storage(format!("{}: {e}", path.display())))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| LlmError::Storage(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: StoreLine = serde_json::from_str(&line)
                    .map_err(|e| LlmError::Storage(format!("{} line {}: {e}", path.display(), n + 1)))?;
                map.insert(rec.fingerprint, rec.response);
            }
        }
        Ok(ReplayStore { path: Some(path), map: RwLock::new(map), writer: Mutex::new(None) })
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, fingerprint: &str) -> Option<String> {
        self.map.read().unwrap().get(fingerprint).cloned()
    }

    pub fn get(&self, request: &ChatRequest) -> Option<String> {
        self.lookup(&request.fingerprint())
    }

    /// Persist a pair. Writes are serialized; reads may continue meanwhile.
    pub fn record(&self, request: &ChatRequest, response: &str) -> Result<(), LlmError> {
        let fingerprint = request.fingerprint();
        let mut w = self.writer.lock().unwrap();
        if let Some(path) = &self.path {
            if w.is_none() {
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| LlmError::Storage(format!("{}: {e}", path.display())))?;
                *w = Some(f);
            }
            let line = serde_json::to_string(&StoreLine { fingerprint: fingerprint.clone(), response: response.to_string() })
                .map_err(|e| LlmError::Storage(e.to_string()))?;
            let f = w.as_mut().unwrap();
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| LlmError::Storage(e.to_string()))?;
        }
        self.map.write().unwrap().insert(fingerprint, response.to_string());
        Ok(())
    }
}

/// Answers from a [`ReplayStore`]. With an upstream client, misses are
/// forwarded and recorded.
pub struct ReplayClient {
    store: Arc<ReplayStore>,
    upstream: Option<Box<dyn ChatClient>>,
}

impl ReplayClient {
    pub fn new(store: Arc<ReplayStore>) -> Self {
        ReplayClient { store, upstream: None }
    }

    pub fn recording(store: Arc<ReplayStore>, upstream: Box<dyn ChatClient>) -> Self {
        ReplayClient { store, upstream: Some(upstream) }
    }

    pub fn store(&self) -> &Arc<ReplayStore> {
        &self.store
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let fingerprint = request.fingerprint();
        if let Some(r) = self.store.lookup(&fingerprint) {
            return Ok(r);
        }
        match &self.upstream {
            Some(up) => {
                let r = up.complete(request)?;
                self.store.record(request, &r)?;
                Ok(r)
            }
            None => Err(LlmError::ReplayMiss { fingerprint }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Substrings that must all occur in the first user message.
    #[serde(rename = "match", default)]
    pub matches: Vec<String>,
    pub responses: Vec<String>,
}

/// Stateless fixture client: the entry whose match strings all occur in the
/// first user message (most match strings wins) supplies response number
/// `k`, where `k` counts the assistant messages already in the request. Past
/// the end of the list the last response repeats.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    entries: Vec<ScriptEntry>,
}

impl ScriptedClient {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedClient { entries }
    }

    /// One script used for every task.
    pub fn single(responses: Vec<String>) -> Self {
        ScriptedClient { entries: vec![ScriptEntry { matches: vec![], responses }] }
    }

    pub fn from_json(s: &str) -> Result<Self, LlmError> {
        let entries: Vec<ScriptEntry> = serde_json::from_str(s).map_err(|e| LlmError::Config(format!("script: {e}")))?;
        Ok(ScriptedClient { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let p = path.as_ref();
        let s = std::fs::read_to_string(p).map_err(|e| LlmError::Config(format!("{}: {e}", p.display())))?;
        Self::from_json(&s)
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let first_user = request.messages.iter().find(|m| m.role == Role::User).map(|m| m.text()).unwrap_or_default();
        let entry = self
            .entries
            .iter()
            .filter(|e| e.matches.iter().all(|m| first_user.contains(m.as_str())))
            .fold(None::<&ScriptEntry>, |best, e| match best {
                Some(b) if b.matches.len() >= e.matches.len() => Some(b),
                _ => Some(e),
            })
            .filter(|e| !e.responses.is_empty())
            .ok_or_else(|| LlmError::ReplayMiss { fingerprint: request.fingerprint() })?;
        let k = request.messages.iter().filter(|m| m.role == Role::Assistant).count();
        Ok(entry.responses[k.min(entry.responses.len() - 1)].clone())
    }
}

/// Blocking client for an OpenAI-compatible `chat/completions` endpoint.
pub struct OpenAiClient {
    url: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl std::fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print the key
        f.debug_struct("OpenAiClient").field("url", &self.url).field("model", &self.model).finish()
    }
}

impl OpenAiClient {
    pub const TIMEOUT: Duration = Duration::from_secs(120);

    /// `endpoint` may be the API base (`.../v1`) or the full completions URL.
    pub fn new(endpoint: &str, api_key: Option<String>, model: &str) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") { base.to_string() } else { format!("{base}/chat/completions") };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Self::TIMEOUT))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiClient { url, api_key, model: model.to_string(), agent, attempts: 3, backoff: Duration::from_millis(500) }
    }

    /// Endpoint, key and model from the environment. `model` overrides
    /// the model variable when given.
    pub fn from_env(model: Option<&str>) -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let model = match model {
            Some(m) => m.to_string(),
            None => std::env::var(ENV_MODEL).map_err(|_| LlmError::Config(format!("{ENV_MODEL} is not set")))?,
        };
        Ok(Self::new(&endpoint, key, &model))
    }

    pub fn with_retry(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let model = if request.model_name.is_empty() { &self.model } else { &request.model_name };
        let messages: Vec<Value> = request.messages.iter().map(wire_message).collect();
        json!({
            "model": model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(Attempt::Fatal(LlmError::Auth(format!("HTTP {status}")))),
            429 | 500..=599 => return Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text)))),
            _ => return Err(Attempt::Fatal(LlmError::Transport(format!("HTTP {status}: {}", snippet(&text))))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| Attempt::Fatal(LlmError::Transport(format!("bad JSON: {e}"))))?;
        extract_content(&v).ok_or_else(|| Attempt::Fatal(LlmError::Transport("response has no message content".into())))
    }
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn wire_message(m: &ChatMessage) -> Value {
    if m.role == Role::System || m.parts.iter().all(|p| matches!(p, Part::Text(_))) {
        return json!({"role": m.role.as_str(), "content": m.text()});
    }
    let content: Vec<Value> = m
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image(r) => json!({"type": "image_url", "image_url": {"url": png_data_url(r)}}),
        })
        .collect();
    json!({"role": m.role.as_str(), "content": content})
}

pub fn png_data_url(r: &Raster) -> String {
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(save_png(r)))
}

// content may be a plain string or a list of text parts
fn extract_content(v: &Value) -> Option<String> {
    let c = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match c {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            Some(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
        }
        _ => None,
    }
}

impl ChatClient for OpenAiClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let body = self.request_body(request);
        let mut last = String::new();
        for i in 0..self.attempts {
            if i > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(i - 1));
            }
            match self.attempt(&body) {
                Ok(s) => return Ok(s),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat request attempt {} failed: {msg}", i + 1);
                    last = msg;
                }
            }
        }
        Err(LlmError::Transport(format!("{} attempts failed, last: {last}", self.attempts)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Color;

    fn req_with(img: Raster) -> ChatRequest {
        ChatRequest::new(vec![
            ChatMessage::system("sys"),
            ChatMessage::user(vec![Part::Text("q".into()), Part::Image(Arc::new(img))]),
        ])
    }

    #[test]
    fn fingerprint_sees_image_content() {
        let a = req_with(Raster::filled(1, 1, Color::WHITE));
        let b = req_with(Raster::filled(1, 1, Color::BLACK));
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), req_with(Raster::filled(1, 1, Color::WHITE)).fingerprint());
        let mut c = a.clone();
        c.temperature = 0.7;
        assert_eq!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn fingerprint_is_order_sensitive() {
        let m1 = ChatMessage::user(vec![Part::Text("a".into())]);
        let m2 = ChatMessage::assistant("b");
        let x = ChatRequest::new(vec![m1.clone(), m2.clone()]);
        let y = ChatRequest::new(vec![m2, m1]);
        assert_ne!(x.fingerprint(), y.fingerprint());
    }

    #[test]
    fn fingerprint_golden() {
        let r = ChatRequest::new(vec![ChatMessage::user(vec![Part::Text("hi".into())])]);
        let canon = r#"{"messages": [{"parts": [{"text": "hi", "type": "text"}], "role": "user"}]}"#;
        assert_eq!(r.fingerprint(), hex::encode(Sha256::digest(canon.as_bytes())));
    }

    #[test]
    fn replay_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let req = req_with(Raster::filled(2, 2, Color::RED));
        {
            let store = ReplayStore::open(&path).unwrap();
            store.record(&req, "FINAL ANSWER: 2. TERMINATE").unwrap();
        }
        let client = ReplayClient::new(Arc::new(ReplayStore::open(&path).unwrap()));
        assert_eq!(client.complete(&req).unwrap(), "FINAL ANSWER: 2. TERMINATE");
        assert_eq!(client.complete(&req).unwrap(), "FINAL ANSWER: 2. TERMINATE");
        let other = req_with(Raster::filled(2, 2, Color::WHITE));
        match client.complete(&other) {
            Err(LlmError::ReplayMiss { fingerprint }) => assert_eq!(fingerprint, other.fingerprint()),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn record_through_upstream() {
        let store = Arc::new(ReplayStore::in_memory());
        let client = ReplayClient::recording(store.clone(), Box::new(ScriptedClient::single(vec!["x".into()])));
        let req = req_with(Raster::filled(1, 1, Color::WHITE));
        assert_eq!(client.complete(&req).unwrap(), "x");
        assert_eq!(store.get(&req).as_deref(), Some("x"));
    }

    #[test]
    fn script_selection() {
        let c = ScriptedClient::from_json(
            r#"[{"match": [], "responses": ["generic"]},
                {"match": ["Belgian"], "responses": ["one", "two"]}]"#,
        )
        .unwrap();
        let mut req = ChatRequest::new(vec![ChatMessage::user(vec![Part::Text("Belgian riders?".into())])]);
        assert_eq!(c.complete(&req).unwrap(), "one");
        req.messages.push(ChatMessage::assistant("one"));
        req.messages.push(ChatMessage::user(vec![Part::Text("next".into())]));
        assert_eq!(c.complete(&req).unwrap(), "two");
        req.messages.push(ChatMessage::assistant("two"));
        assert_eq!(c.complete(&req).unwrap(), "two");
        let other = ChatRequest::new(vec![ChatMessage::user(vec![Part::Text("UK?".into())])]);
        assert_eq!(c.complete(&other).unwrap(), "generic");
    }

    #[test]
    fn invalid_requests() {
        assert!(ChatRequest::new(vec![]).validate().is_err());
        let mut r = req_with(Raster::filled(1, 1, Color::WHITE));
        r.temperature = -1.0;
        assert!(r.validate().is_err());
        let bad = ChatRequest::new(vec![ChatMessage {
            role: Role::System,
            parts: vec![Part::Image(Arc::new(Raster::filled(1, 1, Color::WHITE)))],
        }]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wire_body_uses_data_urls() {
        let c = OpenAiClient::new("http://localhost:1/v1/", None, "m");
        let body = c.request_body(&req_with(Raster::filled(1, 1, Color::WHITE)));
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["content"], "sys");
        let url = body["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
        assert_eq!(c.url, "http://localhost:1/v1/chat/completions");
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let c = OpenAiClient::new("http://127.0.0.1:9", None, "m").with_retry(2, Duration::from_millis(1));
        let e = c.complete(&req_with(Raster::filled(1, 1, Color::WHITE))).unwrap_err();
        assert!(matches!(e, LlmError::Transport(_)), "{e:?}");
    }
}
