use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::SPECIAL_TOKENS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => *code == 429 || *code >= 500,
            BackendError::Malformed(_) | BackendError::InvalidRequest(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prompt_text: String,
    /// Tokens for a model server, items (tags or sentences) for the mock.
    pub max_new_units: usize,
    pub stop_markers: Vec<String>,
    pub temperature: f64,
    pub seed: u64,
}

impl GenRequest {
    pub fn new(prompt_text: impl Into<String>, seed: u64) -> Self {
        GenRequest {
            prompt_text: prompt_text.into(),
            max_new_units: 256,
            stop_markers: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            temperature: 0.8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_units == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_units must be >= 1".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResponse {
    pub text: String,
    pub finished: bool,
    #[serde(rename = "elapsed_ms", with = "millis")]
    pub elapsed: Duration,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

/// Anything that continues a text prompt.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &GenRequest) -> Result<GenResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        (**self).complete(req)
    }
}

/// Cuts `text` at the earliest occurrence of any stop marker.
pub fn truncate_at_stop(text: &str, markers: &[String]) -> (String, bool) {
    let cut = markers
        .iter()
        .filter(|m| !m.is_empty())
        .filter_map(|m| text.find(m.as_str()))
        .min();
    match cut {
        Some(at) => (text[..at].to_string(), true),
        None => (text.to_string(), false),
    }
}

/// Validates the request, calls the backend and applies stop markers.
pub fn generate<B: Backend + ?Sized>(
    backend: &B,
    req: &GenRequest,
) -> Result<GenResponse, BackendError> {
    req.validate()?;
    let mut resp = backend.complete(req)?;
    let (text, stopped) = truncate_at_stop(&resp.text, &req.stop_markers);
    resp.text = text;
    resp.finished |= stopped;
    Ok(resp)
}
