//! Text-completion client for a model server speaking the llama.cpp
//! `/completion` shape: `{"prompt", "n_predict", "temperature", "stop",
//! "seed"}` in, `{"content", "stop"}` out.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::backend::{Backend, BackendError, GenRequest, GenResponse};

/// Environment variable holding the bearer token for the model server.
pub const TOKEN_ENV: &str = "PROMPTLAB_API_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            max_in_flight: 4,
        }
    }

    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n_predict: usize,
    temperature: f64,
    stop: &'a [String],
    seed: u64,
}

#[derive(Deserialize)]
struct CompletionReply {
    content: Option<String>,
    #[serde(default)]
    stop: bool,
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    cfg: HttpBackendConfig,
    agent: ureq::Agent,
    permits: Permits,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            permits: Permits::new(cfg.max_in_flight),
            cfg,
            agent,
        }
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.cfg
    }

    fn attempt(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        let _permit = self.permits.acquire();
        let body = CompletionRequest {
            prompt: &req.prompt_text,
            n_predict: req.max_new_units,
            temperature: req.temperature,
            stop: &req.stop_markers,
            seed: req.seed,
        };
        let started = Instant::now();
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(token) = &self.cfg.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| self.map_error(e))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Status { code: status, body });
        }
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| self.map_error(e))?;
        let reply: CompletionReply =
            serde_json::from_str(&raw).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text = reply
            .content
            .ok_or_else(|| BackendError::Malformed("reply has no `content` field".into()))?;
        Ok(GenResponse {
            text,
            finished: reply.stop,
            elapsed: started.elapsed(),
        })
    }

    fn map_error(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.cfg.timeout),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                BackendError::Timeout(self.cfg.timeout)
            }
            ureq::Error::StatusCode(code) => BackendError::Status {
                code,
                body: String::new(),
            },
            ureq::Error::Json(e) => BackendError::Malformed(e.to_string()),
            other => BackendError::Transport(other.to_string()),
        }
    }
}

impl Backend for HttpBackend {
    /// Up to `max_attempts` tries with exponential backoff on retryable
    /// failures. No partial text is ever returned.
    fn complete(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err(err) if err.is_retryable() && attempt < self.cfg.max_attempts => {
                    let delay = self.cfg.backoff_base * 2u32.pow(attempt - 1);
                    warn!(%err, attempt, ?delay, "retrying generation request");
                    thread::sleep(delay);
                }
                Err(err) => {
                    debug!(%err, attempt, "generation request failed");
                    return Err(err);
                }
            }
        }
    }
}
