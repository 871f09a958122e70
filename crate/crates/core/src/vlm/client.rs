use std::collections::BTreeMap;
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::PromptBundle;
use crate::extraction::{ExtractionDataset, ExtractionStep};
use crate::graph::ConnectorType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("cannot decode response: {0}")]
    Decode(String),
    #[error("no recorded response for prompt {0}")]
    NoResponse(String),
    #[error("model key missing; set CONNKIT_MODEL_KEY")]
    MissingKey,
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Parallel,
    Serial,
}

/// A vision-language model endpoint.
pub trait ModelClient: Send + Sync {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError>;

    /// Whether `send` may be called from several threads at once.
    fn concurrency(&self) -> Concurrency {
        Concurrency::Parallel
    }
}

impl<C: ModelClient + ?Sized> ModelClient for &C {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        (**self).send(prompt)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// Hex SHA-256 over template, text and image references.
pub fn prompt_key(prompt: &PromptBundle) -> String {
    let mut h = Sha256::new();
    h.update(prompt.template.as_bytes());
    h.update([0]);
    h.update(prompt.text.as_bytes());
    for image in &prompt.images {
        h.update([0]);
        h.update(image.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

type Responder = dyn Fn(&PromptBundle) -> Result<String, ClientError> + Send + Sync;

/// Deterministic in-process client driven by a closure.
pub struct MockClient {
    respond: Box<Responder>,
}

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Task: (\S+) \| Step: (\d+) \| Stage: ([12])").expect("valid regex"));

impl MockClient {
    pub fn new(respond: impl Fn(&PromptBundle) -> Result<String, ClientError> + Send + Sync + 'static) -> Self {
        Self {
            respond: Box::new(respond),
        }
    }

    /// Answers every prompt with the dataset's ground truth.
    pub fn oracle(dataset: &ExtractionDataset) -> Self {
        let dataset = dataset.clone();
        Self::new(move |prompt| {
            let (step, stage) = prompt_step(prompt).ok_or_else(|| ClientError::Decode("prompt header not found".into()))?;
            let step = dataset
                .step(step)
                .ok_or_else(|| ClientError::NoResponse(format!("step {step}")))?;
            Ok(if stage == 1 { oracle_stage1(step) } else { oracle_stage2(step) })
        })
    }
}

impl ModelClient for MockClient {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        (self.respond)(prompt)
    }
}

/// Step index and stage named in a prompt header.
pub fn prompt_step(prompt: &PromptBundle) -> Option<(usize, u8)> {
    let c = HEADER.captures(&prompt.text)?;
    Some((c[2].parse().ok()?, c[3].parse().ok()?))
}

/// Ground-truth stage-1 answer in the documented map form.
pub fn oracle_stage1(step: &ExtractionStep) -> String {
    let mut per_component: BTreeMap<&str, BTreeMap<ConnectorType, usize>> = BTreeMap::new();
    for pair in &step.truth_pairs {
        for p in &pair.points {
            if let Some(i) = step.component_of(p) {
                *per_component
                    .entry(&step.components[i].label)
                    .or_default()
                    .entry(pair.connector_type)
                    .or_default() += 1;
            }
        }
    }
    let obj: serde_json::Map<String, Value> = per_component
        .into_iter()
        .map(|(name, counts)| {
            let mut items: Vec<Value> = counts.into_iter().map(|(k, n)| json!([n, k.as_str()])).collect();
            let v = if items.len() == 1 { items.remove(0) } else { Value::from(items) };
            (name.to_owned(), v)
        })
        .collect();
    format!("```json\n{}\n```", Value::Object(obj))
}

pub fn oracle_stage2(step: &ExtractionStep) -> String {
    let pairs: Vec<Value> = step
        .truth_pairs
        .iter()
        .map(|p| json!([p.points[0].as_str(), p.points[1].as_str(), p.connector_type.as_str()]))
        .collect();
    format!("Here are the pairs:\n{}", Value::from(pairs))
}

/// Serves recorded responses keyed by [`prompt_key`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayClient {
    pub responses: BTreeMap<String, String>,
}

impl ReplayClient {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self {
            responses: serde_json::from_str(text)?,
        })
    }
}

impl ModelClient for ReplayClient {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        let key = prompt_key(prompt);
        self.responses.get(&key).cloned().ok_or(ClientError::NoResponse(key))
    }
}

/// Wraps a client and records every successful response for later replay.
pub struct RecordingClient<C> {
    inner: C,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<C: ModelClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn into_replay(self) -> ReplayClient {
        ReplayClient {
            responses: self.recorded.into_inner().unwrap_or_else(|e| e.into_inner()),
        }
    }
}

impl<C: ModelClient> ModelClient for RecordingClient<C> {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        let response = self.inner.send(prompt)?;
        self.recorded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(prompt_key(prompt), response.clone());
        Ok(response)
    }

    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }
}

/// Raw HTTP POST, swappable for tests.
pub trait Transport: Send + Sync {
    /// Returns status code and body.
    fn post(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<(u16, String), String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<(u16, String), String> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_s() -> u64 {
    120
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

/// Chat-completions style JSON client with bounded retries.
pub struct HttpClient {
    config: HttpConfig,
    key: String,
    transport: Box<dyn Transport>,
}

impl HttpClient {
    pub fn new(config: HttpConfig, key: String, transport: Box<dyn Transport>) -> Self {
        Self { config, key, transport }
    }

    /// Key from `CONNKIT_MODEL_KEY`, transport over ureq.
    pub fn from_env(config: HttpConfig) -> Result<Self, ClientError> {
        let key = std::env::var("CONNKIT_MODEL_KEY").map_err(|_| ClientError::MissingKey)?;
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_s));
        Ok(Self::new(config, key, Box::new(transport)))
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> Value {
        let mut content = vec![json!({"type": "text", "text": prompt.text})];
        content.extend(
            prompt
                .images
                .iter()
                .map(|url| json!({"type": "image_url", "image_url": {"url": url}})),
        );
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }

    fn attempt(&self, body: &str) -> Result<String, ClientError> {
        let headers = [
            ("Content-Type", "application/json".to_owned()),
            ("Authorization", format!("Bearer {}", self.key)),
        ];
        let (status, text) = self
            .transport
            .post(&self.config.endpoint, &headers, body)
            .map_err(ClientError::Transport)?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ClientError::Decode("missing choices[0].message.content".into()))
    }
}

impl ModelClient for HttpClient {
    fn send(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        let body = self.request_body(prompt).to_string();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.config.max_attempts.max(1) => {
                    log::warn!("model request failed (attempt {attempt}): {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
