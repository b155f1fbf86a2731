//! Issue-tracker abstraction, the deterministic simulated forge, and webhook
//! event ingestion.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IssueRef {
    pub repository: String,
    pub number: u64,
}

impl IssueRef {
    pub fn new(repository: impl Into<String>, number: u64) -> Self {
        Self {
            repository: repository.into(),
            number,
        }
    }
}

impl fmt::Display for IssueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.repository, self.number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IssueOpened,
    CommentCreated,
    IssueEdited,
    IssueClosed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeEvent {
    pub event_id: String,
    pub kind: EventKind,
    pub issue: IssueRef,
    pub actor_handle: String,
    pub body: String,
    pub occurred_at: DateTime<Utc>,
    /// Issue title, carried on `IssueOpened` events only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl ForgeEvent {
    pub fn to_payload(&self) -> WebhookPayload {
        WebhookPayload {
            kind: Some(self.kind),
            repository: Some(self.issue.repository.clone()),
            issue_number: Some(self.issue.number as i64),
            actor: Some(self.actor_handle.clone()),
            body: Some(self.body.clone()),
            event_id: Some(self.event_id.clone()),
            occurred_at: Some(self.occurred_at),
            title: self.title.clone(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForgeError {
    #[error("forge unavailable: {0}")]
    Unavailable(String),
    #[error("issue {0} is closed")]
    IssueClosed(IssueRef),
    #[error("issue {0} does not exist")]
    UnknownIssue(IssueRef),
}

/// The minimal issue-tracker surface the journal depends on.
pub trait Forge: Send {
    fn open_issue(&mut self, repository: &str, title: &str, body: &str) -> Result<IssueRef, ForgeError>;
    fn post_comment(&mut self, issue: &IssueRef, body: &str) -> Result<ForgeEvent, ForgeError>;
    /// Replaces the issue body; used to project checklist state into the review issue.
    fn edit_issue(&mut self, issue: &IssueRef, body: &str) -> Result<ForgeEvent, ForgeError>;
    fn close_issue(&mut self, issue: &IssueRef) -> Result<ForgeEvent, ForgeError>;
    fn issue_body(&self, issue: &IssueRef) -> Option<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimIssue {
    pub title: String,
    pub body: String,
    pub open: bool,
    pub comments: Vec<String>,
}

/// In-memory reference forge. All activity is recorded as an ordered event log,
/// optionally mirrored to an append-only JSON-lines file.
pub struct SimulatedForge {
    bot_handle: String,
    repositories: BTreeSet<String>,
    issues: BTreeMap<IssueRef, SimIssue>,
    next_number: BTreeMap<String, u64>,
    log: Vec<ForgeEvent>,
    clock: Arc<dyn Clock>,
    failures_pending: u32,
    sink: Option<File>,
}

impl fmt::Debug for SimulatedForge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedForge")
            .field("bot_handle", &self.bot_handle)
            .field("repositories", &self.repositories)
            .field("issues", &self.issues.len())
            .field("events", &self.log.len())
            .finish()
    }
}

impl SimulatedForge {
    pub fn new(bot_handle: impl Into<String>, clock: Arc<dyn Clock>) -> Self {
        Self {
            bot_handle: bot_handle.into(),
            repositories: BTreeSet::new(),
            issues: BTreeMap::new(),
            next_number: BTreeMap::new(),
            log: Vec::new(),
            clock,
            failures_pending: 0,
            sink: None,
        }
    }

    /// Opens (or creates) an event-log file, replays it to rebuild issue state,
    /// and appends all further events to it.
    pub fn with_log_file(
        bot_handle: impl Into<String>,
        clock: Arc<dyn Clock>,
        path: impl AsRef<Path>,
    ) -> std::io::Result<Self> {
        let path = path.as_ref();
        let mut forge = Self::new(bot_handle, clock);
        if path.exists() {
            for event in read_event_log(path)? {
                forge.replay(event);
            }
        }
        forge.sink = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(forge)
    }

    pub fn add_repository(&mut self, repository: impl Into<String>) {
        self.repositories.insert(repository.into());
    }

    /// Makes the next `n` mutating calls fail with `ForgeError::Unavailable`.
    pub fn fail_next(&mut self, n: u32) {
        self.failures_pending = n;
    }

    pub fn events(&self) -> &[ForgeEvent] {
        &self.log
    }

    pub fn issue(&self, issue: &IssueRef) -> Option<&SimIssue> {
        self.issues.get(issue)
    }

    pub fn issues(&self) -> impl Iterator<Item = (&IssueRef, &SimIssue)> {
        self.issues.iter()
    }

    /// Serialized event log, one JSON document per line.
    pub fn event_log_text(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    /// A human comments on an issue. Returns the event for webhook delivery.
    pub fn comment_as(&mut self, issue: &IssueRef, actor: &str, body: &str) -> Result<ForgeEvent, ForgeError> {
        self.check_available()?;
        self.require_open(issue)?;
        self.issues.get_mut(issue).unwrap().comments.push(body.to_owned());
        Ok(self.record(EventKind::CommentCreated, issue.clone(), actor, body, None))
    }

    /// A human edits an issue body (for example, ticking checklist boxes).
    pub fn edit_as(&mut self, issue: &IssueRef, actor: &str, body: &str) -> Result<ForgeEvent, ForgeError> {
        self.check_available()?;
        self.require_open(issue)?;
        self.issues.get_mut(issue).unwrap().body = body.to_owned();
        Ok(self.record(EventKind::IssueEdited, issue.clone(), actor, body, None))
    }

    fn check_available(&mut self) -> Result<(), ForgeError> {
        if self.failures_pending > 0 {
            self.failures_pending -= 1;
            return Err(ForgeError::Unavailable("injected fault".into()));
        }
        Ok(())
    }

    fn require_open(&self, issue: &IssueRef) -> Result<(), ForgeError> {
        match self.issues.get(issue) {
            None => Err(ForgeError::UnknownIssue(issue.clone())),
            Some(i) if !i.open => Err(ForgeError::IssueClosed(issue.clone())),
            Some(_) => Ok(()),
        }
    }

    fn record(
        &mut self,
        kind: EventKind,
        issue: IssueRef,
        actor: &str,
        body: &str,
        title: Option<String>,
    ) -> ForgeEvent {
        let event = ForgeEvent {
            event_id: format!("sim-{:08}", self.log.len() + 1),
            kind,
            issue,
            actor_handle: actor.to_owned(),
            body: body.to_owned(),
            occurred_at: self.clock.now(),
            title,
        };
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            if let Err(err) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::error!(%err, "failed to append simulated forge event");
            }
        }
        self.log.push(event.clone());
        event
    }

    fn replay(&mut self, event: ForgeEvent) {
        let issue = event.issue.clone();
        match event.kind {
            EventKind::IssueOpened => {
                self.repositories.insert(issue.repository.clone());
                let next = self.next_number.entry(issue.repository.clone()).or_insert(1);
                *next = (*next).max(issue.number + 1);
                self.issues.insert(
                    issue,
                    SimIssue {
                        title: event.title.clone().unwrap_or_default(),
                        body: event.body.clone(),
                        open: true,
                        comments: Vec::new(),
                    },
                );
            }
            EventKind::CommentCreated => {
                if let Some(i) = self.issues.get_mut(&issue) {
                    i.comments.push(event.body.clone());
                }
            }
            EventKind::IssueEdited => {
                if let Some(i) = self.issues.get_mut(&issue) {
                    i.body = event.body.clone();
                }
            }
            EventKind::IssueClosed => {
                if let Some(i) = self.issues.get_mut(&issue) {
                    i.open = false;
                }
            }
        }
        self.log.push(event);
    }
}

impl Forge for SimulatedForge {
    fn open_issue(&mut self, repository: &str, title: &str, body: &str) -> Result<IssueRef, ForgeError> {
        self.check_available()?;
        if !self.repositories.contains(repository) {
            return Err(ForgeError::Unavailable(format!(
                "repository {repository} is not configured"
            )));
        }
        let next = self.next_number.entry(repository.to_owned()).or_insert(1);
        let issue = IssueRef::new(repository, *next);
        *next += 1;
        self.issues.insert(
            issue.clone(),
            SimIssue {
                title: title.to_owned(),
                body: body.to_owned(),
                open: true,
                comments: Vec::new(),
            },
        );
        let bot = self.bot_handle.clone();
        self.record(EventKind::IssueOpened, issue.clone(), &bot, body, Some(title.to_owned()));
        Ok(issue)
    }

    fn post_comment(&mut self, issue: &IssueRef, body: &str) -> Result<ForgeEvent, ForgeError> {
        let bot = self.bot_handle.clone();
        self.comment_as(issue, &bot, body)
    }

    fn edit_issue(&mut self, issue: &IssueRef, body: &str) -> Result<ForgeEvent, ForgeError> {
        let bot = self.bot_handle.clone();
        self.edit_as(issue, &bot, body)
    }

    fn close_issue(&mut self, issue: &IssueRef) -> Result<ForgeEvent, ForgeError> {
        self.check_available()?;
        self.require_open(issue)?;
        self.issues.get_mut(issue).unwrap().open = false;
        let bot = self.bot_handle.clone();
        Ok(self.record(EventKind::IssueClosed, issue.clone(), &bot, "", None))
    }

    fn issue_body(&self, issue: &IssueRef) -> Option<String> {
        self.issues.get(issue).map(|i| i.body.clone())
    }
}

pub fn read_event_log(path: &Path) -> std::io::Result<Vec<ForgeEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(event) => events.push(event),
            // torn trailing write
            Err(err) => {
                tracing::warn!(%err, "skipping unreadable event-log line");
            }
        }
    }
    Ok(events)
}

/// Appends events to a JSON-lines file.
#[derive(Debug)]
pub struct EventLogWriter {
    path: PathBuf,
    file: File,
}

impl EventLogWriter {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn append(&mut self, event: &ForgeEvent) -> std::io::Result<()> {
        let line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed webhook payload: {0}")]
    MalformedPayload(String),
}

/// Webhook document as delivered over HTTP. Every field is optional at the
/// serde level so validation can name exactly what is missing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookPayload {
    pub kind: Option<EventKind>,
    pub repository: Option<String>,
    pub issue_number: Option<i64>,
    pub actor: Option<String>,
    pub body: Option<String>,
    pub event_id: Option<String>,
    pub occurred_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl WebhookPayload {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        serde_json::from_str(text).map_err(|e| IngestError::MalformedPayload(e.to_string()))
    }

    /// Validates the payload. `received_at` stands in for a missing `occurred_at`.
    pub fn into_event(self, received_at: DateTime<Utc>) -> Result<ForgeEvent, IngestError> {
        let missing = |field: &str| IngestError::MalformedPayload(format!("missing field `{field}`"));
        let kind = self.kind.ok_or_else(|| missing("kind"))?;
        let repository = self.repository.ok_or_else(|| missing("repository"))?;
        if repository.split('/').filter(|p| !p.is_empty()).count() != 2
            || repository.matches('/').count() != 1
        {
            return Err(IngestError::MalformedPayload(format!(
                "repository {repository:?} is not owner/name"
            )));
        }
        let number = self.issue_number.ok_or_else(|| missing("issue_number"))?;
        if number < 1 {
            return Err(IngestError::MalformedPayload(format!(
                "issue_number {number} is not positive"
            )));
        }
        let actor = self.actor.ok_or_else(|| missing("actor"))?;
        if actor.is_empty() || actor.chars().any(char::is_whitespace) {
            return Err(IngestError::MalformedPayload(format!("invalid actor {actor:?}")));
        }
        let event_id = self.event_id.ok_or_else(|| missing("event_id"))?;
        if event_id.trim().is_empty() {
            return Err(missing("event_id"));
        }
        Ok(ForgeEvent {
            event_id,
            kind,
            issue: IssueRef::new(repository, number as u64),
            actor_handle: actor.trim_start_matches('@').to_owned(),
            body: self.body.unwrap_or_default(),
            occurred_at: self.occurred_at.unwrap_or(received_at),
            title: self.title,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingested {
    Enqueued,
    Duplicate,
}

/// Deduplicating FIFO of forge events awaiting processing.
#[derive(Debug, Default, Clone)]
pub struct EventQueue {
    seen: HashSet<String>,
    pending: VecDeque<ForgeEvent>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a queue whose dedup set already contains `seen`.
    pub fn with_seen(seen: impl IntoIterator<Item = String>) -> Self {
        Self {
            seen: seen.into_iter().collect(),
            pending: VecDeque::new(),
        }
    }

    pub fn ingest(&mut self, event: ForgeEvent) -> Ingested {
        if !self.seen.insert(event.event_id.clone()) {
            return Ingested::Duplicate;
        }
        self.pending.push_back(event);
        Ingested::Enqueued
    }

    pub fn ingest_payload(
        &mut self,
        payload: WebhookPayload,
        received_at: DateTime<Utc>,
    ) -> Result<(ForgeEvent, Ingested), IngestError> {
        let event = payload.into_event(received_at)?;
        let outcome = self.ingest(event.clone());
        Ok((event, outcome))
    }

    pub fn pop(&mut self) -> Option<ForgeEvent> {
        self.pending.pop_front()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn has_seen(&self, event_id: &str) -> bool {
        self.seen.contains(event_id)
    }
}
