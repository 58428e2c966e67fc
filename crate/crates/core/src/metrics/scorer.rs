//! Client side of an external image scorer (aesthetic, artifact detection,
//! ...). The model itself runs elsewhere; this module only batches refs,
//! retries transport failures and keeps per-item failures in place.
//!
//! Wire format: `POST {"images": [ref, ...]}` answered by
//! `{"results": [{"score": 5.1} | {"error": "reason"}, ...]}` in request order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer transport failure: {0}")]
    Transport(String),
    #[error("scorer returned status {0}")]
    Status(u16),
    #[error("malformed scorer reply: {0}")]
    Malformed(String),
}

impl ScorerError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ScorerError::Transport(_) => true,
            ScorerError::Status(code) => *code == 429 || *code >= 500,
            ScorerError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreOutcome {
    Score { score: f64 },
    Missing { error: String },
}

impl ScoreOutcome {
    pub fn score(&self) -> Option<f64> {
        match self {
            ScoreOutcome::Score { score } => Some(*score),
            ScoreOutcome::Missing { .. } => None,
        }
    }
}

pub trait ImageScorer: Send + Sync {
    /// Scores one batch; the reply must have one outcome per ref.
    fn score_batch(&self, refs: &[String]) -> Result<Vec<ScoreOutcome>, ScorerError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringOptions {
    pub batch_size: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            batch_size: 32,
            max_attempts: 3,
            backoff_base: Duration::from_millis(200),
            max_in_flight: 2,
        }
    }
}

fn score_with_retry<S: ImageScorer + ?Sized>(
    scorer: &S,
    batch: &[String],
    opts: &ScoringOptions,
) -> Result<Vec<ScoreOutcome>, ScorerError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match scorer.score_batch(batch) {
            Ok(out) if out.len() == batch.len() => return Ok(out),
            Ok(out) => {
                return Err(ScorerError::Malformed(format!(
                    "{} results for {} images",
                    out.len(),
                    batch.len()
                )))
            }
            Err(e) if e.is_retryable() && attempt < opts.max_attempts => {
                warn!(error = %e, attempt, "retrying scorer batch");
                thread::sleep(opts.backoff_base * 2u32.pow(attempt - 1));
            }
            Err(e) => return Err(e),
        }
    }
}

/// One outcome per image ref, in input order. Batches run on at most
/// `max_in_flight` threads.
type BatchSlot = Option<Result<Vec<ScoreOutcome>, ScorerError>>;

pub fn score_images<S: ImageScorer + ?Sized>(
    scorer: &S,
    image_refs: &[String],
    opts: &ScoringOptions,
) -> Result<Vec<ScoreOutcome>, ScorerError> {
    if image_refs.is_empty() {
        return Ok(Vec::new());
    }
    let batches: Vec<&[String]> = image_refs.chunks(opts.batch_size.max(1)).collect();
    let results: Mutex<Vec<BatchSlot>> = Mutex::new(vec![None; batches.len()]);
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, batches.len());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(i) else { break };
                let r = score_with_retry(scorer, batch, opts);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(image_refs.len());
    for r in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        out.extend(r.expect("every batch scored")?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    images: &'a [String],
}

#[derive(Deserialize)]
struct ScoreReply {
    results: Vec<ScoreOutcome>,
}

pub struct HttpScorer {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpScorer {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl ImageScorer for HttpScorer {
    fn score_batch(&self, refs: &[String]) -> Result<Vec<ScoreOutcome>, ScorerError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&ScoreRequest { images: refs })
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ScorerError::Status(status));
        }
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        let reply: ScoreReply =
            serde_json::from_str(&raw).map_err(|e| ScorerError::Malformed(e.to_string()))?;
        Ok(reply.results)
    }
}
