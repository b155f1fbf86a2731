//! HTTP API over a [`Journal`] backed by the simulated forge.
//!
//! Webhook deliveries are acknowledged with 202 and processed by a background
//! worker; everything else runs inline under the journal lock.

pub mod cli;

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use journal_core::forge::{Ingested, SimulatedForge, WebhookPayload};
use journal_core::journal::{Action, Journal, JournalError, PublishedArticle, SubmissionStatus};
use journal_core::person::{PersonRef, Role};
use journal_core::workflow::{render_badge, SubmissionRequest, SubmissionState, WorkflowError};

pub type SimJournal = Journal<SimulatedForge>;

pub const ACTOR_HEADER: &str = "x-actor";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

pub struct AppState {
    journal: Mutex<SimJournal>,
    work: Notify,
}

impl AppState {
    pub fn new(journal: SimJournal) -> Arc<Self> {
        Arc::new(Self {
            journal: Mutex::new(journal),
            work: Notify::new(),
        })
    }

    pub fn journal(&self) -> MutexGuard<'_, SimJournal> {
        // a panic while holding the lock leaves committed state intact
        self.journal.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Drains the webhook queue whenever new events arrive.
pub fn spawn_worker(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        loop {
            state.work.notified().await;
            let result = state.journal().process_pending();
            match result {
                Ok(done) => {
                    for p in done {
                        tracing::debug!(event = %p.event_id, status = %p.outcome.status, "event processed");
                    }
                }
                Err(err) => tracing::error!(%err, "event processing failed"),
            }
        }
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/submissions", post(submit).get(list_submissions))
        .route("/api/submissions/{id}", get(status))
        .route("/api/submissions/{id}/badge.svg", get(badge_svg))
        .route("/api/submissions/{id}/actions", post(act))
        .route(
            "/api/submissions/{id}/checklists/{reviewer}/{item}",
            put(toggle_item),
        )
        .route("/api/submissions/{id}/publication", get(publication))
        .route("/api/published", get(published))
        .route("/api/events", post(events))
        .route("/api/report", get(report))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_owned(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<JournalError> for ApiError {
    fn from(err: JournalError) -> Self {
        let message = err.to_string();
        let (status, code) = match &err {
            JournalError::UnknownSubmission(_) => (StatusCode::NOT_FOUND, "not_found"),
            JournalError::UnknownActor(_) => (StatusCode::FORBIDDEN, "unknown_actor"),
            JournalError::Ingest(_) => (StatusCode::BAD_REQUEST, "malformed_payload"),
            JournalError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            JournalError::Workflow(w) => match w {
                WorkflowError::Unauthorized { .. } => (StatusCode::FORBIDDEN, "unauthorized"),
                WorkflowError::ForgeUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "forge_unavailable"),
                WorkflowError::InvalidField(_) => (StatusCode::BAD_REQUEST, "invalid_field"),
                WorkflowError::InvalidDoi(_) => (StatusCode::BAD_REQUEST, "invalid_doi"),
                WorkflowError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
                WorkflowError::Pipeline(_) => (StatusCode::INTERNAL_SERVER_ERROR, "publishing_failed"),
                _ => (StatusCode::UNPROCESSABLE_ENTITY, "precondition_failed"),
            },
        };
        ApiError::new(status, code, message)
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> Option<&'a str> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
}

fn actor(headers: &HeaderMap) -> ApiResult<&str> {
    header_str(headers, ACTOR_HEADER)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing_actor", "the X-Actor header is required"))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

/// Submission form. Fields are optional here so that missing ones produce a 400
/// naming the field.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub title: Option<String>,
    pub repository_url: Option<String>,
    pub software_version: Option<String>,
    pub author_handle: Option<String>,
    pub author_name: Option<String>,
    pub presubmission_inquiry: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub id: String,
    pub sequence_number: u64,
    pub state: SubmissionState,
    pub badge_url: String,
    pub status_url: String,
}

fn required(field: Option<String>, name: &str) -> ApiResult<String> {
    field
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_field", format!("{name} is required")))
}

async fn submit(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let form: SubmitRequest = parse_json(&body)?;
    let title = required(form.title, "title")?;
    let repository_url = required(form.repository_url, "repository_url")?;
    let software_version = required(form.software_version, "software_version")?;
    let handle = required(form.author_handle, "author_handle")?;
    let mut author =
        PersonRef::new(handle, Role::Author).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_field", e.to_string()))?;
    if let Some(name) = form.author_name.filter(|n| !n.trim().is_empty()) {
        author = author.with_name(name.trim());
    }
    let request = SubmissionRequest {
        title,
        repository_url,
        software_version,
        author,
        presubmission_inquiry: form.presubmission_inquiry,
    };
    let key = header_str(&headers, IDEMPOTENCY_HEADER);
    let mut journal = state.journal();
    let replay = key.is_some_and(|k| journal.persisted().idempotency_keys.contains_key(k));
    let s = journal.submit(request, key)?;
    let id = s.id().to_string();
    let response = SubmitResponse {
        badge_url: format!("/api/submissions/{id}/badge.svg"),
        status_url: format!("/api/submissions/{id}"),
        id,
        sequence_number: s.sequence_number(),
        state: s.state(),
    };
    let code = if replay { StatusCode::OK } else { StatusCode::CREATED };
    Ok((code, Json(response)).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub state: Option<SubmissionState>,
}

async fn list_submissions(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<ListQuery>,
) -> Json<Vec<SubmissionStatus>> {
    let viewer = header_str(&headers, ACTOR_HEADER);
    let journal = state.journal();
    let list = journal
        .submissions()
        .filter(|s| query.state.is_none_or(|st| s.state() == st))
        .map(|s| journal.status(s, viewer))
        .collect();
    Json(list)
}

async fn status(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<SubmissionStatus>> {
    let journal = state.journal();
    let s = journal.find(&id)?;
    Ok(Json(journal.status(s, header_str(&headers, ACTOR_HEADER))))
}

async fn badge_svg(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let journal = state.journal();
    let s = journal.find(&id)?;
    let badge = render_badge(s.state(), &format!("/api/submissions/{}", s.id()));
    let svg = badge.to_svg(&title_initials(&journal.config().journal_title));
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn act(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SubmissionStatus>> {
    let actor = actor(&headers)?.to_owned();
    let action: Action = parse_json(&body)?;
    let mut journal = state.journal();
    let sid = journal.find(&id)?.id();
    journal.apply(sid, action, &actor)?;
    let s = journal.find(&id)?;
    Ok(Json(journal.status(s, Some(&actor))))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ToggleRequest {
    pub checked: bool,
}

async fn toggle_item(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path((id, reviewer, item)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult<Json<SubmissionStatus>> {
    let actor = actor(&headers)?.to_owned();
    let toggle: ToggleRequest = parse_json(&body)?;
    let mut journal = state.journal();
    let sid = journal.find(&id)?.id();
    journal.apply(
        sid,
        Action::SetChecklistItem {
            reviewer,
            item,
            checked: toggle.checked,
        },
        &actor,
    )?;
    let s = journal.find(&id)?;
    Ok(Json(journal.status(s, Some(&actor))))
}

async fn publication(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let journal = state.journal();
    let s = journal.find(&id)?;
    match journal.publication(s.id()) {
        Some(p) => Ok(Json(p.clone()).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "submission is not published")),
    }
}

async fn published(State(state): State<Arc<AppState>>) -> Json<Vec<PublishedArticle>> {
    Json(state.journal().published())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventAck {
    pub status: String,
}

async fn events(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_payload", e.to_string()))?;
    let payload = WebhookPayload::from_json(text)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_payload", e.to_string()))?;
    let outcome = state.journal().ingest(payload)?;
    let status = match outcome {
        Ingested::Enqueued => {
            state.work.notify_one();
            "enqueued"
        }
        Ingested::Duplicate => "duplicate",
    };
    Ok((StatusCode::ACCEPTED, Json(EventAck { status: status.into() })).into_response())
}

async fn report(State(state): State<Arc<AppState>>) -> Json<journal_core::analytics::Report> {
    Json(state.journal().report())
}

/// Initials of the journal title, used as the badge's left-hand text.
fn title_initials(title: &str) -> String {
    title
        .split_whitespace()
        .filter_map(|w| w.chars().next())
        .filter(|c| c.is_uppercase())
        .collect()
}
