//! Shared HTTP transport for model backends.
//!
//! Every backend is addressed by a [`BackendEndpoint`]. A `base_url` with the
//! `mock://` scheme selects the deterministic in-process mock of the
//! corresponding stage instead of the network.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

fn default_timeout() -> f64 {
    60.0
}

fn default_backoff() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_base_s: f64,
}

impl BackendEndpoint {
    pub fn mock() -> Self {
        Self::http("mock://")
    }

    pub fn http(base_url: impl Into<String>) -> Self {
        BackendEndpoint {
            base_url: base_url.into(),
            auth_token_env: None,
            timeout_s: default_timeout(),
            max_retries: 0,
            backoff_base_s: default_backoff(),
        }
    }

    pub fn is_mock(&self) -> bool {
        self.base_url.starts_with("mock://")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::Config(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if !(self.backoff_base_s.is_finite() && self.backoff_base_s >= 0.0) {
            return Err(Error::Config("backoff_base_s must be non-negative".into()));
        }
        if !self.is_mock() && !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::Config(format!(
                "base_url `{}` must use http, https or mock",
                self.base_url
            )));
        }
        Ok(())
    }
}

/// Cloneable invocation counter shared between a backend and its observer.
#[derive(Debug, Clone, Default)]
pub struct CallCounter(Arc<AtomicU64>);

impl CallCounter {
    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

enum Failure {
    Timeout,
    Transport(String),
    Status(u16, String),
}

/// Blocking JSON-over-HTTP client with bounded exponential-backoff retries.
///
/// Timeouts, transport errors and 5xx responses are retried; 4xx responses
/// are returned immediately as [`Error::BackendRejected`].
pub struct HttpClient {
    name: String,
    endpoint: BackendEndpoint,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(name: impl Into<String>, endpoint: &BackendEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_s)))
            .http_status_as_error(false)
            .build();
        Ok(HttpClient {
            name: name.into(),
            endpoint: endpoint.clone(),
            agent: config.into(),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), path)
    }

    fn bearer(&self) -> Result<Option<String>> {
        match &self.endpoint.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(|token| Some(format!("Bearer {token}")))
                .map_err(|_| Error::Config(format!("environment variable `{var}` is not set"))),
        }
    }

    fn attempt(&self, url: &str, body: &[u8], auth: Option<&str>) -> std::result::Result<Vec<u8>, Failure> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(auth) = auth {
            req = req.header("Authorization", auth);
        }
        let mut resp = req.send(body).map_err(classify)?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_vec()
            .map_err(classify)?;
        if (200..300).contains(&status) {
            Ok(bytes)
        } else {
            Err(Failure::Status(status, String::from_utf8_lossy(&bytes).into_owned()))
        }
    }

    /// POST `body` as JSON to `path` and return the raw 2xx response body.
    pub fn post_json_raw<B: Serialize + ?Sized>(&self, path: &str, body: &B) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(body)?;
        let auth = self.bearer()?;
        let url = self.url(path);
        let attempts = self.endpoint.max_retries + 1;
        let mut last = Failure::Timeout;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.endpoint.backoff_base_s * 2f64.powi(attempt as i32 - 1);
                thread::sleep(Duration::from_secs_f64(delay));
            }
            match self.attempt(&url, &payload, auth.as_deref()) {
                Ok(bytes) => return Ok(bytes),
                Err(Failure::Status(status, body)) if status < 500 => {
                    return Err(Error::BackendRejected { backend: self.name.clone(), status, body })
                }
                Err(failure) => last = failure,
            }
        }
        Err(match last {
            Failure::Timeout => Error::BackendTimeout { backend: self.name.clone(), attempts },
            Failure::Transport(message) => Error::BackendTransport {
                backend: self.name.clone(),
                attempts,
                message,
            },
            Failure::Status(status, body) => Error::BackendRejected { backend: self.name.clone(), status, body },
        })
    }

    /// POST JSON and decode a JSON response body.
    pub fn post_json<B: Serialize + ?Sized, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let bytes = self.post_json_raw(path, body)?;
        serde_json::from_slice(&bytes).map_err(|e| {
            Error::parse_failure(
                format!("{} response is not the expected JSON: {e}", self.name),
                String::from_utf8_lossy(&bytes),
            )
        })
    }
}

fn classify(err: ureq::Error) -> Failure {
    match err {
        ureq::Error::Timeout(_) => Failure::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => Failure::Timeout,
        other => Failure::Transport(other.to_string()),
    }
}

/// `{"text": ...}` response shared by the analyze and complete endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}
