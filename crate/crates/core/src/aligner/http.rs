//! Chat-completions style HTTP provider.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::provider::{ProviderError, VlmProvider, VlmRequest};

pub const API_KEY_ENV: &str = "PASG_VLM_API_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpProviderConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig, api_key: Option<String>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, api_key, client })
    }

    /// Read the API key from the environment.
    pub fn from_env(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        Self::new(config, std::env::var(API_KEY_ENV).ok())
    }

    fn body(&self, req: &VlmRequest) -> Result<Value, ProviderError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt.text})];
        for path in &req.prompt.images {
            let bytes = std::fs::read(path)
                .map_err(|e| ProviderError::BadResponse(format!("cannot read image {}: {e}", path.display())))?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
        }
        Ok(json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }))
    }
}

impl VlmProvider for HttpProvider {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError> {
        let mut call = self
            .client
            .post(&self.config.endpoint)
            .header("X-Request-Id", &req.request_id)
            .json(&self.body(req)?);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Err(ProviderError::Auth(format!("HTTP {status}"))),
            429 => return Err(ProviderError::RateLimited),
            500..=599 => return Err(ProviderError::Transport(format!("HTTP {status}"))),
            200..=299 => {}
            _ => return Err(ProviderError::BadResponse(format!("HTTP {status}"))),
        }
        let v: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::BadResponse(e.to_string())
            }
        })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }
}
