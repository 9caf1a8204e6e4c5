//! Chat-model and detector clients: HTTP transports, fixture-replaying mocks
//! and an on-disk response cache.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PrepError, Result};

pub const API_KEY_ENV: &str = "GAS_CHAT_API_KEY";
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatTask {
    Decompose,
    Scenario,
}

#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub task: ChatTask,
    /// The user's request; `None` for scenario generation.
    pub request_text: Option<&'a str>,
    pub prompt: &'a str,
    pub image_png: &'a [u8],
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String>;
}

/// Raw detector output for one caption, in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Detections {
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
}

pub trait DetectorClient: Send + Sync {
    fn detect(&self, image_png: &[u8], caption: &str) -> Result<Detections>;

    /// Detections scoring below this are discarded.
    fn score_threshold(&self) -> f64 {
        DEFAULT_SCORE_THRESHOLD
    }
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String> {
        (**self).complete(req)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String> {
        (**self).complete(req)
    }
}

impl<D: DetectorClient + ?Sized> DetectorClient for &D {
    fn detect(&self, image_png: &[u8], caption: &str) -> Result<Detections> {
        (**self).detect(image_png, caption)
    }
    fn score_threshold(&self) -> f64 {
        (**self).score_threshold()
    }
}

impl<D: DetectorClient + ?Sized> DetectorClient for Box<D> {
    fn detect(&self, image_png: &[u8], caption: &str) -> Result<Detections> {
        (**self).detect(image_png, caption)
    }
    fn score_threshold(&self) -> f64 {
        (**self).score_threshold()
    }
}

#[derive(Debug, Clone)]
pub struct Transport {
    pub max_attempts: u32,
    pub timeout: Duration,
    pub retry_backoff: Duration,
}

impl Default for Transport {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            timeout: Duration::from_secs(120),
            retry_backoff: Duration::from_millis(250),
        }
    }
}

fn build_client(service: &'static str, t: &Transport) -> Result<Client> {
    if t.max_attempts == 0 {
        return Err(PrepError::InvalidRequest(
            "max_attempts must be at least 1".into(),
        ));
    }
    Client::builder()
        .timeout(t.timeout)
        .build()
        .map_err(|e| PrepError::Client {
            service,
            message: format!("cannot build HTTP client: {e}"),
            attempts: 0,
        })
}

/// POSTs JSON, retrying transport failures and 5xx responses.
fn post_json<R: for<'de> Deserialize<'de>>(
    service: &'static str,
    client: &Client,
    t: &Transport,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<R> {
    let mut last = String::new();
    for attempt in 1..=t.max_attempts {
        if attempt > 1 {
            std::thread::sleep(t.retry_backoff * (attempt - 1));
        }
        let mut req = client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        match req.send() {
            Ok(resp) if resp.status().is_success() => {
                return resp.json::<R>().map_err(|e| PrepError::Client {
                    service,
                    message: format!("malformed response from {url}: {e}"),
                    attempts: attempt,
                });
            }
            Ok(resp) if resp.status().is_server_error() => {
                last = format!("{url} returned {}", resp.status());
            }
            Ok(resp) => {
                return Err(PrepError::Client {
                    service,
                    message: format!("{url} returned {}", resp.status()),
                    attempts: attempt,
                })
            }
            Err(e) => last = format!("{url}: {e}"),
        }
    }
    Err(PrepError::Client {
        service,
        message: last,
        attempts: t.max_attempts,
    })
}

#[derive(Debug, Clone)]
pub struct HttpChatConfig {
    /// Full URL of an OpenAI-style chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub transport: Transport,
}

/// Multimodal chat client. Reads the API key from [`API_KEY_ENV`] at
/// construction; endpoints without auth work when the variable is unset.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    config: HttpChatConfig,
    api_key: Option<String>,
    client: Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpChatClient {
    pub fn new(config: HttpChatConfig) -> Result<Self> {
        let client = build_client("chat", &config.transport)?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn request_body(&self, req: &ChatRequest<'_>) -> serde_json::Value {
        let data_url = format!("data:image/png;base64,{}", STANDARD.encode(req.image_png));
        serde_json::json!({
            "model": self.config.model,
            "messages": [{
                "role": "user",
                "content": [
                    { "type": "text", "text": req.prompt },
                    { "type": "image_url", "image_url": { "url": data_url } }
                ]
            }]
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String> {
        let resp: ChatResponse = post_json(
            "chat",
            &self.client,
            &self.config.transport,
            &self.config.endpoint,
            self.api_key.as_deref(),
            &self.request_body(req),
        )?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| PrepError::Client {
                service: "chat",
                message: "response has no choices".into(),
                attempts: 1,
            })
    }
}

#[derive(Debug, Clone)]
pub struct HttpDetectorConfig {
    pub endpoint: String,
    pub score_threshold: f64,
    pub transport: Transport,
}

impl HttpDetectorConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            transport: Transport::default(),
        }
    }
}

/// Zero-shot detector: `POST {image: b64 png, caption}` to `{boxes, scores}`.
#[derive(Debug, Clone)]
pub struct HttpDetectorClient {
    config: HttpDetectorConfig,
    client: Client,
}

impl HttpDetectorClient {
    pub fn new(config: HttpDetectorConfig) -> Result<Self> {
        let client = build_client("detector", &config.transport)?;
        Ok(Self { config, client })
    }
}

impl DetectorClient for HttpDetectorClient {
    fn detect(&self, image_png: &[u8], caption: &str) -> Result<Detections> {
        let body = serde_json::json!({ "image": STANDARD.encode(image_png), "caption": caption });
        post_json(
            "detector",
            &self.client,
            &self.config.transport,
            &self.config.endpoint,
            None,
            &body,
        )
    }

    fn score_threshold(&self) -> f64 {
        self.config.score_threshold
    }
}

/// Recorded responses for both clients.
///
/// `chat` maps `"scenario"` to the scenario response and each request text
/// to its decomposition response; `detector` maps captions to detections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    #[serde(default)]
    pub chat: BTreeMap<String, String>,
    #[serde(default)]
    pub detector: BTreeMap<String, Detections>,
}

impl MockFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            PrepError::InvalidRequest(format!("bad mock fixture {}: {e}", path.display()))
        })
    }
}

pub const SCENARIO_KEY: &str = "scenario";

#[derive(Debug, Clone, Default)]
pub struct MockChatClient {
    responses: BTreeMap<String, String>,
}

impl MockChatClient {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        Self { responses }
    }

    pub fn fixture_key(req: &ChatRequest<'_>) -> String {
        match req.task {
            ChatTask::Scenario => SCENARIO_KEY.to_string(),
            ChatTask::Decompose => req.request_text.unwrap_or_default().trim().to_string(),
        }
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String> {
        let key = Self::fixture_key(req);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| PrepError::Client {
                service: "chat",
                message: format!("no fixture response for {key:?}"),
                attempts: 1,
            })
    }
}

/// Replays recorded detections; an unknown caption yields no boxes.
#[derive(Debug, Clone)]
pub struct MockDetectorClient {
    detections: BTreeMap<String, Detections>,
    threshold: f64,
}

impl MockDetectorClient {
    pub fn new(detections: BTreeMap<String, Detections>) -> Self {
        Self {
            detections,
            threshold: DEFAULT_SCORE_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

impl DetectorClient for MockDetectorClient {
    fn detect(&self, _image_png: &[u8], caption: &str) -> Result<Detections> {
        Ok(self
            .detections
            .get(caption.trim())
            .cloned()
            .unwrap_or_default())
    }

    fn score_threshold(&self) -> f64 {
        self.threshold
    }
}

/// Caches chat responses on disk keyed by the prompt and image hashes.
/// Entries are written to a temporary file and renamed into place.
#[derive(Debug, Clone)]
pub struct CachedChatClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: ChatClient> CachedChatClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }

    pub fn cache_key(req: &ChatRequest<'_>) -> String {
        let mut h = Sha256::new();
        h.update(Sha256::digest(req.prompt.as_bytes()));
        h.update(Sha256::digest(req.image_png));
        hex::encode(h.finalize())
    }

    pub fn entry_path(&self, req: &ChatRequest<'_>) -> PathBuf {
        self.dir.join(format!("{}.txt", Self::cache_key(req)))
    }
}

impl<C: ChatClient> ChatClient for CachedChatClient<C> {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String> {
        let path = self.entry_path(req);
        if let Ok(hit) = fs::read_to_string(&path) {
            return Ok(hit);
        }
        let resp = self.inner.complete(req)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(resp.as_bytes())?;
        tmp.persist(&path).map_err(|e| PrepError::Io(e.error))?;
        Ok(resp)
    }
}
