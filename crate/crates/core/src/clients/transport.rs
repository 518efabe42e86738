//! Blocking JSON-over-HTTP transport shared by the remote clients.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Environment variable naming the model service base URL.
pub const ENDPOINT_ENV: &str = "OPENVOXEL_MODEL_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_s: f64,
    /// Extra attempts after the first failure.
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { endpoint: "http://127.0.0.1:8080".into(), timeout_s: 60.0, retries: 2 }
    }
}

impl RemoteConfig {
    /// Endpoint from `OPENVOXEL_MODEL_ENDPOINT` when set, else the default.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                cfg.endpoint = url.trim().to_string();
            }
        }
        cfg
    }
}

/// Failure of one POST: the service could not be reached (after retries) or
/// answered with a body that does not parse.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PostError {
    Unreachable(String),
    BadBody(String),
}

pub(crate) struct JsonTransport {
    agent: ureq::Agent,
    base: String,
    retries: u32,
}

impl JsonTransport {
    pub(crate) fn new(cfg: &RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .http_status_as_error(true)
            .build()
            .into();
        Self { agent, base: cfg.endpoint.trim_end_matches('/').to_string(), retries: cfg.retries }
    }

    /// POSTs `body` to `base + path`, retrying transport failures.
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, PostError> {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.agent.post(&url).send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_body()
                        .read_json::<R>()
                        .map_err(|e| PostError::BadBody(format!("{url}: bad reply body: {e}")));
                }
                Err(e) => {
                    log::warn!("POST {url} attempt {} failed: {e}", attempt + 1);
                    last = format!("{url}: {e}");
                }
            }
        }
        Err(PostError::Unreachable(last))
    }
}

pub fn b64_encode(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, String> {
    STANDARD.decode(text.trim()).map_err(|e| e.to_string())
}
