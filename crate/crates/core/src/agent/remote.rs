//! Agent backed by an OpenAI-compatible `/chat/completions` endpoint.

use std::io::Cursor;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use serde_json::{json, Value};

use super::{AgentError, AgentRequest, DecisionAgent, QueryRequest};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Resends after the first attempt.
    pub retry_budget: u32,
    pub timeout: Duration,
    /// Delay before the first resend; doubles on each further one.
    pub backoff_base: Duration,
    /// Requests allowed in flight across every clone of the agent.
    pub max_connections: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            retry_budget: 2,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_secs(1),
            max_connections: 4,
        }
    }

    /// Reads `VOG_ENDPOINT`, `VOG_MODEL` and the optional `VOG_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("VOG_ENDPOINT").ok()?;
        let model = std::env::var("VOG_MODEL").ok()?;
        let mut cfg = RemoteConfig::new(endpoint, model);
        cfg.api_key = std::env::var("VOG_API_KEY").ok().filter(|k| !k.is_empty());
        Some(cfg)
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Counting semaphore shared by clones.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone)]
pub struct RemoteAgent {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    slots: Arc<Slots>,
}

impl RemoteAgent {
    pub fn new(config: RemoteConfig) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AgentError::TransportError(e.to_string()))?;
        let slots = Arc::new(Slots {
            free: Mutex::new(config.max_connections.max(1)),
            cv: Condvar::new(),
        });
        Ok(RemoteAgent { config, client, slots })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_body(&self, system: &str, user: &str, image: Option<&RgbImage>) -> Result<Vec<u8>, AgentError> {
        let mut content = vec![json!({ "type": "text", "text": user })];
        if let Some(img) = image {
            content.push(json!({
                "type": "image_url",
                "image_url": { "url": png_data_url(img)? },
            }));
        }
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": content },
            ],
        });
        serde_json::to_vec(&body).map_err(|e| AgentError::BadResponse(e.to_string()))
    }

    fn send_once(&self, body: &[u8], timeout: Duration) -> Result<String, AgentError> {
        let _slot = self.slots.acquire();
        let mut req = self
            .client
            .post(self.config.url())
            .timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AgentError::HttpStatus(status.as_u16()));
        }
        let text = resp.text().map_err(classify)?;
        reply_content(&text)
    }

    /// Sends the same body up to `1 + retry_budget` times.
    fn send(&self, body: &[u8], timeout: Duration) -> Result<String, AgentError> {
        let mut delay = self.config.backoff_base;
        let mut attempt = 0;
        loop {
            match self.send_once(body, timeout) {
                Ok(text) => return Ok(text),
                Err(e) if attempt < self.config.retry_budget && retryable(&e) => {
                    log::warn!("remote agent attempt {} failed: {e}; retrying in {delay:?}", attempt + 1);
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify(e: reqwest::Error) -> AgentError {
    if e.is_timeout() {
        AgentError::Timeout
    } else {
        AgentError::TransportError(e.to_string())
    }
}

fn retryable(e: &AgentError) -> bool {
    match e {
        AgentError::TransportError(_) | AgentError::Timeout => true,
        AgentError::HttpStatus(code) => *code >= 500 || *code == 429,
        _ => false,
    }
}

fn png_data_url(img: &RgbImage) -> Result<String, AgentError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| AgentError::BadResponse(format!("png encoding: {e}")))?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(buf.into_inner());
    Ok(format!("data:image/png;base64,{b64}"))
}

/// `choices[0].message.content`, accepting either a string or a list of
/// text parts.
fn reply_content(body: &str) -> Result<String, AgentError> {
    let v: Value = serde_json::from_str(body).map_err(|e| AgentError::BadResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| AgentError::BadResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(AgentError::BadResponse(format!("content is {other}"))),
    }
}

impl DecisionAgent for RemoteAgent {
    fn name(&self) -> &str {
        "remote"
    }

    fn extract_query(&mut self, request: &QueryRequest<'_>) -> Result<String, AgentError> {
        let body = self.request_body(request.system_prompt, request.user_prompt, None)?;
        self.send(&body, request.timeout)
    }

    fn decide(&mut self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        let body = self.request_body(request.system_prompt, request.user_prompt, Some(request.grid_image))?;
        self.send(&body, request.timeout)
    }
}
