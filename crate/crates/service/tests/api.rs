use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use journal_core::checklist::ChecklistTemplate;
use journal_core::clock::SteppingClock;
use journal_core::config::JournalConfig;
use journal_core::forge::SimulatedForge;
use journal_core::journal::Journal;
use journal_core::person::{PersonRef, Role};
use journal_core::workflow::{render_badge, SubmissionState};
use journal_service::{router, spawn_worker, AppState};

fn config() -> JournalConfig {
    let person = |h: &str, r| PersonRef::new(h, r).unwrap();
    JournalConfig {
        first_sequence_number: 205,
        people: vec![
            person("arfon", Role::EditorInChief),
            person("danielskatz", Role::Editor),
            person("zhaozhang", Role::Reviewer),
        ],
        ..JournalConfig::default()
    }
}

fn app() -> (Router, Arc<AppState>) {
    let start = Utc.with_ymd_and_hms(2017, 2, 26, 9, 0, 0).unwrap();
    let clock = Arc::new(SteppingClock::new(start, chrono::Duration::minutes(1)));
    let config = config();
    let mut forge = SimulatedForge::new(config.bot(), clock.clone());
    forge.add_repository(&config.reviews_repository);
    let state = AppState::new(Journal::in_memory(config, forge, clock));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: Method, uri: &str, actor: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, actor, body, None).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into_owned()))
    };
    (status, value)
}

async fn call_raw(
    app: &Router,
    method: Method,
    uri: &str,
    actor: Option<&str>,
    body: Option<Value>,
    key: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(a) = actor {
        req = req.header("x-actor", a);
    }
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn form(title: &str) -> Value {
    json!({
        "title": title,
        "repository_url": format!("https://github.com/example/{}", title.to_lowercase().replace(' ', "-")),
        "software_version": "1.0.0",
        "author_handle": "lmcinnes",
        "author_name": "Leland McInnes"
    })
}

async fn submit(app: &Router, title: &str) -> String {
    let (status, body) = call(app, Method::POST, "/api/submissions", None, Some(form(title))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_owned()
}

async fn act(app: &Router, id: &str, actor: &str, action: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/api/submissions/{id}/actions"), Some(actor), Some(action)).await
}

async fn into_review(app: &Router, id: &str) {
    for (actor, action) in [
        ("arfon", json!({"action": "assign_editor", "editor": "danielskatz"})),
        ("danielskatz", json!({"action": "assign_reviewer", "reviewer": "zhaozhang"})),
        ("danielskatz", json!({"action": "start_review", "magic_word": "bananas"})),
    ] {
        let (status, body) = act(app, id, actor, action).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
}

async fn tick(app: &Router, id: &str, items: usize) -> Value {
    let mut last = Value::Null;
    for item in ChecklistTemplate::standard().items().take(items) {
        let uri = format!("/api/submissions/{id}/checklists/zhaozhang/{}", item.id);
        let (status, body) = call(app, Method::PUT, &uri, Some("zhaozhang"), Some(json!({"checked": true}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        last = body;
    }
    last
}

async fn publish(app: &Router, id: &str) -> Value {
    into_review(app, id).await;
    tick(app, id, 18).await;
    let (status, body) = act(app, id, "danielskatz", json!({"action": "set_archive", "doi": "10.5281/zenodo.401403"})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, body) = act(app, id, "arfon", json!({"action": "accept"})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

#[tokio::test]
async fn valid_submission_is_created_in_pre_review() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::POST, "/api/submissions", None, Some(form("hdbscan"))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"], "pre_review");
    assert_eq!(body["sequence_number"], 205);
    let id = body["id"].as_str().unwrap();
    assert_eq!(body["badge_url"], format!("/api/submissions/{id}/badge.svg"));

    let (status, status_body) = call(&app, Method::GET, body["status_url"].as_str().unwrap(), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(status_body["state"], "pre_review");
    assert!(status_body["pre_review_issue"]["number"].is_u64());
}

#[tokio::test]
async fn missing_repository_url_is_rejected() {
    let (app, state) = app();
    let mut body = form("hdbscan");
    body.as_object_mut().unwrap().remove("repository_url");
    let (status, err) = call(&app, Method::POST, "/api/submissions", None, Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "invalid_field");
    assert!(err["message"].as_str().unwrap().contains("repository_url"));
    assert_eq!(state.journal().submissions().count(), 0);

    let (status, _) = call_raw(&app, Method::POST, "/api/submissions", None, None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn forge_outage_maps_to_503() {
    let (app, state) = app();
    state.journal().forge_mut().fail_next(1);
    let (status, err) = call(&app, Method::POST, "/api/submissions", None, Some(form("hdbscan"))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(err["error"], "forge_unavailable");

    // the retry succeeds on a fresh sequence number
    let (status, body) = call(&app, Method::POST, "/api/submissions", None, Some(form("hdbscan"))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["sequence_number"], 206);
    let (_, list) = call(&app, Method::GET, "/api/submissions", None, None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn idempotency_key_yields_single_record() {
    let (app, state) = app();
    let first = call_raw(&app, Method::POST, "/api/submissions", None, Some(form("hdbscan")), Some("k-1")).await;
    let second = call_raw(&app, Method::POST, "/api/submissions", None, Some(form("hdbscan")), Some("k-1")).await;
    assert_eq!(first.0, StatusCode::CREATED);
    assert_eq!(second.0, StatusCode::OK);
    let a: Value = serde_json::from_slice(&first.1).unwrap();
    let b: Value = serde_json::from_slice(&second.1).unwrap();
    assert_eq!(a["id"], b["id"]);
    assert_eq!(state.journal().submissions().count(), 1);
    assert_eq!(state.journal().forge().issues().count(), 1);
}

#[tokio::test]
async fn unknown_submission_is_404() {
    let (app, _) = app();
    for uri in [
        "/api/submissions/6f1c9a52-0000-5000-8000-000000000000",
        "/api/submissions/999",
        "/api/submissions/not-an-id/badge.svg",
    ] {
        let (status, body) = call(&app, Method::GET, uri, None, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "not_found");
    }
}

#[tokio::test]
async fn half_ticked_checklist_reports_half_progress() {
    let (app, _) = app();
    let id = submit(&app, "hdbscan").await;
    into_review(&app, &id).await;
    let body = tick(&app, &id, 9).await;
    assert_eq!(body["state"], "under_review");
    let checklist = &body["checklists"][0];
    assert_eq!(checklist["reviewer"], "zhaozhang");
    assert_eq!(checklist["checked"], 9);
    assert_eq!(checklist["total"], 18);
    assert_eq!(checklist["progress"], 0.5);
    assert_eq!(body["capabilities"]["can_edit_checklists"], json!(["zhaozhang"]));
}

#[tokio::test]
async fn badge_matches_rendered_badge() {
    let (app, _) = app();
    let id = submit(&app, "hdbscan").await;
    let (_, status) = call(&app, Method::GET, &format!("/api/submissions/{id}"), None, None).await;
    let expected = render_badge(SubmissionState::PreReview, &format!("/api/submissions/{id}"));
    assert_eq!(status["badge"]["state_label"], expected.state_label);
    assert_eq!(status["badge"]["color"], expected.color);

    let uri = format!("/api/submissions/{id}/badge.svg");
    let req = Request::builder().uri(&uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/svg+xml");
    let svg = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(&expected.state_label));
    assert!(svg.contains("JOSS"));
}

#[tokio::test]
async fn actions_require_actor_and_role() {
    let (app, _) = app();
    let id = submit(&app, "hdbscan").await;
    let assign = json!({"action": "assign_editor", "editor": "danielskatz"});
    let (status, _) = call(&app, Method::POST, &format!("/api/submissions/{id}/actions"), None, Some(assign.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, body) = act(&app, &id, "zhaozhang", assign.clone()).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["error"], "unauthorized");
    let (status, _) = act(&app, &id, "nobody", assign).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, body) = act(&app, &id, "arfon", json!({"action": "accept"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "illegal_transition");
    into_review(&app, &id).await;
    let (status, body) = act(&app, &id, "arfon", json!({"action": "set_archive", "doi": "not a doi"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_doi");
}

#[tokio::test]
async fn published_list_is_newest_first() {
    let (app, _) = app();
    let (_, empty) = call(&app, Method::GET, "/api/published", None, None).await;
    assert_eq!(empty, json!([]));

    let mut ids = Vec::new();
    for title in ["First", "Second", "Third"] {
        let id = submit(&app, title).await;
        let body = publish(&app, &id).await;
        assert_eq!(body["state"], "published");
        ids.push(id);
    }
    let (_, list) = call(&app, Method::GET, "/api/published", None, None).await;
    let titles: Vec<_> = list.as_array().unwrap().iter().map(|a| a["title"].as_str().unwrap()).collect();
    assert_eq!(titles, ["Third", "Second", "First"]);
    assert_eq!(list[2]["doi"], "10.21105/joss.00205");
    assert_eq!(list[2]["archive_doi"], "10.5281/zenodo.401403");
    assert_eq!(list[2]["authors"], json!(["Leland McInnes"]));

    let (status, publication) = call(&app, Method::GET, &format!("/api/submissions/{}/publication", ids[0]), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(publication["deposit_xml"].as_str().unwrap().contains("10.21105/joss.00205"));
}

#[tokio::test]
async fn webhook_comment_is_applied_asynchronously() {
    let (app, state) = app();
    spawn_worker(state.clone());
    let id = submit(&app, "hdbscan").await;
    let (_, status) = call(&app, Method::GET, &format!("/api/submissions/{id}"), None, None).await;
    let issue = status["pre_review_issue"].clone();
    let event = json!({
        "kind": "comment_created",
        "repository": issue["repository"],
        "issue_number": issue["number"],
        "actor": "arfon",
        "body": "@whedon assign @danielskatz as editor",
        "event_id": "delivery-1"
    });
    let (code, ack) = call(&app, Method::POST, "/api/events", None, Some(event.clone())).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    assert_eq!(ack["status"], "enqueued");

    let mut editor = Value::Null;
    for _ in 0..200 {
        let (_, status) = call(&app, Method::GET, &format!("/api/submissions/{id}"), None, None).await;
        editor = status["editor"]["handle"].clone();
        if !editor.is_null() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(editor, "danielskatz");

    // redelivery is acknowledged but has no second effect
    let (code, ack) = call(&app, Method::POST, "/api/events", None, Some(event)).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    assert_eq!(ack["status"], "duplicate");
    tokio::time::sleep(Duration::from_millis(50)).await;
    let journal = state.journal();
    let (_, issue) = journal.forge().issues().next().unwrap();
    let replies = issue.comments.iter().filter(|c| c.contains("Editor assigned")).count();
    assert_eq!(replies, 1);
}

#[tokio::test]
async fn malformed_webhook_is_400() {
    let (app, state) = app();
    let (code, body) = call(&app, Method::POST, "/api/events", None, Some(json!({"kind": "comment_created"}))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "malformed_payload");
    let (code, _) = call_raw(&app, Method::POST, "/api/events", None, None, None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(state.journal().pending_events(), 0);
}

#[tokio::test]
async fn report_reflects_published_articles() {
    let (app, _) = app();
    let (_, empty) = call(&app, Method::GET, "/api/report", None, None).await;
    assert_eq!(empty["record_count"], 0);
    let id = submit(&app, "hdbscan").await;
    publish(&app, &id).await;
    let (code, report) = call(&app, Method::GET, "/api/report", None, None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(report["record_count"], 1);
    assert_eq!(report["editors"], json!([["danielskatz", 1]]));
    let cost: Vec<_> = report["cost"].as_array().unwrap().iter().map(|r| r["per_article"].clone()).collect();
    assert_eq!(cost, [json!("504.00"), json!("11.06"), json!("6.03"), json!("3.51")]);
}

#[tokio::test]
async fn list_filters_by_state() {
    let (app, _) = app();
    let id = submit(&app, "First").await;
    submit(&app, "Second").await;
    into_review(&app, &id).await;
    let (_, list) = call(&app, Method::GET, "/api/submissions?state=under_review", None, None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], id.as_str());
}
