use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::header::{CONTENT_TYPE, COOKIE, SET_COOKIE};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use promptlab_core::preference::{Metric, DEFAULT_BASE};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;
use tracing::error;

use crate::store::{Submission, SurveyStore};
use crate::SurveyError;

pub const RATER_HEADER: &str = "x-rater-id";
pub const RATER_COOKIE: &str = "rater_id";

#[derive(Debug, Clone, Default)]
pub struct AppConfig {
    /// Built survey UI, served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Pair images, served under `/images`.
    pub images_dir: Option<PathBuf>,
}

struct Rater {
    id: String,
    issued: bool,
}

fn rater_from(headers: &HeaderMap, fallback: Option<&str>) -> Rater {
    let from_header = headers
        .get(RATER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty());
    let from_cookie = headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, v)| *k == RATER_COOKIE && !v.is_empty())
        .map(|(_, v)| v);
    match from_header
        .or(from_cookie)
        .or(fallback.filter(|s| !s.is_empty()))
    {
        Some(id) => Rater {
            id: id.to_string(),
            issued: false,
        },
        None => Rater {
            id: uuid::Uuid::new_v4().to_string(),
            issued: true,
        },
    }
}

fn with_rater(mut resp: Response, rater: &Rater) -> Response {
    if rater.issued {
        let cookie = format!(
            "{RATER_COOKIE}={}; Path=/; Max-Age=31536000; SameSite=Lax; HttpOnly",
            rater.id
        );
        if let Ok(v) = HeaderValue::from_str(&cookie) {
            resp.headers_mut().append(SET_COOKIE, v);
        }
    }
    resp
}

impl IntoResponse for SurveyError {
    fn into_response(self) -> Response {
        let (code, status) = match &self {
            SurveyError::NoMorePairs => (StatusCode::NOT_FOUND, "no_more_pairs"),
            SurveyError::UnknownPair(_) => (StatusCode::NOT_FOUND, "unknown_pair"),
            SurveyError::NotServed(_) => (StatusCode::CONFLICT, "not_served"),
            SurveyError::AlreadyVoted(_) => (StatusCode::CONFLICT, "already_voted"),
            SurveyError::Skipped(_) => (StatusCode::CONFLICT, "skipped"),
            SurveyError::MissingMetric(_) => (StatusCode::UNPROCESSABLE_ENTITY, "missing_metric"),
            SurveyError::InvalidSubmission(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_submission")
            }
            SurveyError::Pool(_)
            | SurveyError::Corrupt(_)
            | SurveyError::Io(_)
            | SurveyError::Preference(_) => {
                error!(error = %self, "survey request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        (
            code,
            Json(json!({ "status": status, "error": self.to_string() })),
        )
            .into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, SurveyError>
where
    F: FnOnce() -> Result<T, SurveyError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| SurveyError::Io(std::io::Error::other(e)))?
}

async fn next_pair(State(store): State<Arc<SurveyStore>>, headers: HeaderMap) -> Response {
    let rater = rater_from(&headers, None);
    let id = rater.id.clone();
    let resp = match blocking(move || store.next_pair(&id)).await {
        Ok(pair) => Json(pair).into_response(),
        Err(e) => e.into_response(),
    };
    with_rater(resp, &rater)
}

async fn vote(
    State(store): State<Arc<SurveyStore>>,
    headers: HeaderMap,
    Json(sub): Json<Submission>,
) -> Response {
    let rater = rater_from(&headers, sub.rater_id.as_deref());
    let id = rater.id.clone();
    let resp = match blocking(move || store.submit(&id, &sub)).await {
        Ok(reveal) => Json(reveal).into_response(),
        Err(e) => e.into_response(),
    };
    with_rater(resp, &rater)
}

#[derive(Deserialize)]
struct RefreshBody {
    pair_id: String,
    #[serde(default)]
    rater_id: Option<String>,
}

async fn refresh(
    State(store): State<Arc<SurveyStore>>,
    headers: HeaderMap,
    Json(body): Json<RefreshBody>,
) -> Response {
    let rater = rater_from(&headers, body.rater_id.as_deref());
    let id = rater.id.clone();
    let resp = match blocking(move || store.refresh(&id, &body.pair_id)).await {
        Ok(pair) => Json(pair).into_response(),
        Err(e) => e.into_response(),
    };
    with_rater(resp, &rater)
}

#[derive(Deserialize)]
struct ResultsQuery {
    metric: Option<String>,
    base: Option<f64>,
}

async fn results(State(store): State<Arc<SurveyStore>>, Query(q): Query<ResultsQuery>) -> Response {
    let metric = match q
        .metric
        .as_deref()
        .filter(|m| !m.is_empty())
        .map(str::parse::<Metric>)
    {
        None => None,
        Some(Ok(m)) => Some(m),
        Some(Err(e)) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "status": "bad_query", "error": e.to_string() })),
            )
                .into_response()
        }
    };
    let base = q.base.unwrap_or(DEFAULT_BASE);
    match blocking(move || store.results(metric, base)).await {
        // same bytes as the offline report
        Ok(report) => ([(CONTENT_TYPE, "application/json")], report.to_json()).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(store: Arc<SurveyStore>, cfg: &AppConfig) -> Router {
    let mut app = Router::new()
        .route("/api/pair", get(next_pair))
        .route("/api/vote", post(vote))
        .route("/api/refresh", post(refresh))
        .route("/api/results", get(results))
        .with_state(store);
    if let Some(images) = &cfg.images_dir {
        app = app.nest_service("/images", ServeDir::new(images));
    }
    if let Some(ui) = &cfg.ui_dir {
        app = app.fallback_service(ServeDir::new(ui).append_index_html_on_directories(true));
    }
    app
}

/// Runs the service until the listener fails or ctrl-c is received.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
