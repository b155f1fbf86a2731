//! The journal: submissions, people, the forge and the store wired together.
//!
//! Every public mutating method either fails without changing anything or
//! records its effects in one commit.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{export_report, CostParameters, Report, ReviewRecord};
use crate::article::{ArticlePipeline, Publication};
use crate::checklist::{ChecklistTemplate, ItemState};
use crate::clock::Clock;
use crate::command::{handle_comment, sync_review_issue, CommandContext, CommandOutcome};
use crate::config::JournalConfig;
use crate::forge::{EventKind, EventQueue, Forge, ForgeError, ForgeEvent, IngestError, Ingested, IssueRef, WebhookPayload};
use crate::person::{PersonRef, PersonRegistry, Role};
use crate::store::{Commit, FileStore, PersistedState, StoreError};
use crate::workflow::{
    create_submission, render_badge, split_review_body, Badge, ScreeningVerdict, SequenceCounter,
    Submission, SubmissionId, SubmissionRequest, SubmissionState, WorkflowError, WorkflowSettings,
};

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("no submission with id {0}")]
    UnknownSubmission(String),
    #[error("@{0} is not registered")]
    UnknownActor(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl JournalError {
    pub fn is_forge_failure(&self) -> bool {
        matches!(self, JournalError::Workflow(WorkflowError::ForgeUnavailable(_)))
    }
}

/// Operations available outside the chat-ops channel (HTTP, CLI, scenarios).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Screen { verdict: ScreeningVerdict },
    Reject,
    Withdraw,
    AssignEditor { editor: String },
    AssignReviewer { reviewer: String },
    UnassignReviewer { reviewer: String },
    StartReview { magic_word: String },
    SetArchive { doi: String },
    SetFastTrack { fast_track: bool },
    SetChecklistItem { reviewer: String, item: String, checked: bool },
    Accept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistProgress {
    pub reviewer: String,
    pub checked: usize,
    pub total: usize,
    pub progress: f64,
    pub complete: bool,
    pub items: BTreeMap<String, ItemState>,
}

/// What the actor may do next; clients derive their controls from this.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub can_assign: bool,
    pub can_accept: bool,
    pub can_withdraw: bool,
    /// Reviewers whose checklist the actor may edit.
    pub can_edit_checklists: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionStatus {
    pub id: SubmissionId,
    pub sequence_number: u64,
    pub title: String,
    pub state: SubmissionState,
    pub repository_url: String,
    pub software_version: String,
    pub submitting_author: PersonRef,
    pub editor: Option<PersonRef>,
    pub reviewers: Vec<PersonRef>,
    pub fast_track: bool,
    pub archive_doi: Option<String>,
    pub article_doi: Option<String>,
    pub pre_review_issue: Option<IssueRef>,
    pub review_issue: Option<IssueRef>,
    pub checklists: Vec<ChecklistProgress>,
    pub badge: Badge,
    pub badge_url: String,
    pub submitted_at: DateTime<Utc>,
    pub accepted_at: Option<DateTime<Utc>>,
    pub published_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedArticle {
    pub id: SubmissionId,
    pub title: String,
    pub authors: Vec<String>,
    pub doi: String,
    pub archive_doi: String,
    pub published_at: DateTime<Utc>,
}

/// Result of processing one forge event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Processed {
    pub event_id: String,
    pub submission: Option<SubmissionId>,
    pub outcome: CommandOutcome,
}

pub struct Journal<F: Forge> {
    config: JournalConfig,
    settings: WorkflowSettings,
    template: &'static ChecklistTemplate,
    registry: PersonRegistry,
    state: PersistedState,
    counter: SequenceCounter,
    by_issue: BTreeMap<IssueRef, SubmissionId>,
    queue: EventQueue,
    forge: F,
    pipeline: ArticlePipeline,
    clock: Arc<dyn Clock>,
    store: Option<FileStore>,
}

impl<F: Forge> Journal<F> {
    /// A journal kept in memory only.
    pub fn in_memory(config: JournalConfig, forge: F, clock: Arc<dyn Clock>) -> Self {
        let state = PersistedState {
            sequence_counter: config.first_sequence_number,
            ..PersistedState::default()
        };
        Self::from_state(config, forge, clock, state, None)
    }

    /// A journal backed by the file store under `config.storage_path`.
    pub fn open(config: JournalConfig, forge: F, clock: Arc<dyn Clock>) -> Result<Self, JournalError> {
        let (store, mut state) = FileStore::open(&config.storage_path, config.snapshot_every)?;
        state.sequence_counter = state.sequence_counter.max(config.first_sequence_number);
        Ok(Self::from_state(config, forge, clock, state, Some(store)))
    }

    fn from_state(
        config: JournalConfig,
        forge: F,
        clock: Arc<dyn Clock>,
        state: PersistedState,
        store: Option<FileStore>,
    ) -> Self {
        let mut registry = PersonRegistry::new();
        for p in &config.people {
            registry.upsert(p.clone());
        }
        for p in state.people.values() {
            registry.upsert(p.clone());
        }
        let mut by_issue = BTreeMap::new();
        for s in state.submissions.values() {
            for issue in [s.pre_review_issue(), s.review_issue()].into_iter().flatten() {
                by_issue.insert(issue.clone(), s.id());
            }
        }
        Self {
            settings: config.workflow_settings(),
            pipeline: ArticlePipeline::new(config.deposit_settings()),
            template: ChecklistTemplate::standard(),
            counter: SequenceCounter::starting_at(state.sequence_counter),
            queue: EventQueue::with_seen(state.processed_events.iter().cloned()),
            config,
            registry,
            state,
            by_issue,
            forge,
            clock,
            store,
        }
    }

    pub fn config(&self) -> &JournalConfig {
        &self.config
    }
    pub fn forge(&self) -> &F {
        &self.forge
    }
    pub fn forge_mut(&mut self) -> &mut F {
        &mut self.forge
    }
    pub fn pipeline_mut(&mut self) -> &mut ArticlePipeline {
        &mut self.pipeline
    }
    pub fn registry(&self) -> &PersonRegistry {
        &self.registry
    }
    pub fn template(&self) -> &'static ChecklistTemplate {
        self.template
    }
    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }
    pub fn next_sequence_number(&self) -> u64 {
        self.counter.peek()
    }
    pub fn persisted(&self) -> &PersistedState {
        &self.state
    }
    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn commit(&mut self, mut commit: Commit) -> Result<(), JournalError> {
        commit.sequence_counter = Some(self.counter.peek());
        self.state.apply(&commit);
        if let Some(store) = &mut self.store {
            store.commit(&commit, &self.state)?;
        }
        Ok(())
    }

    pub fn register_person(&mut self, person: PersonRef) -> Result<(), JournalError> {
        self.registry.upsert(person.clone());
        self.commit(Commit {
            people: vec![person],
            ..Commit::default()
        })
    }

    pub fn submission(&self, id: SubmissionId) -> Option<&Submission> {
        self.state.submissions.get(&id)
    }

    pub fn find(&self, id: &str) -> Result<&Submission, JournalError> {
        id.parse::<SubmissionId>()
            .ok()
            .and_then(|id| self.state.submissions.get(&id))
            .or_else(|| {
                let n: u64 = id.parse().ok()?;
                self.state.submissions.values().find(|s| s.sequence_number() == n)
            })
            .ok_or_else(|| JournalError::UnknownSubmission(id.to_owned()))
    }

    pub fn submissions(&self) -> impl Iterator<Item = &Submission> {
        self.state.submissions.values()
    }

    pub fn submission_for_issue(&self, issue: &IssueRef) -> Option<&Submission> {
        self.by_issue.get(issue).and_then(|id| self.state.submissions.get(id))
    }

    pub fn publication(&self, id: SubmissionId) -> Option<&Publication> {
        self.state.publications.get(&id)
    }

    /// Intake: creates the submission and opens its pre-review issue. A
    /// repeated idempotency key returns the submission created the first time.
    pub fn submit(
        &mut self,
        request: SubmissionRequest,
        idempotency_key: Option<&str>,
    ) -> Result<&Submission, JournalError> {
        if let Some(id) = idempotency_key.and_then(|k| self.state.idempotency_keys.get(k)) {
            return Ok(&self.state.submissions[id]);
        }
        let author = self.registry.get(&request.author.handle).cloned();
        let mut request = request;
        match author {
            Some(known) => {
                if request.author.display_name.is_none() {
                    request.author.display_name = known.display_name;
                }
                request.author.role = known.role;
            }
            None => request.author.role = Role::Author,
        }
        let mut submission = create_submission(&self.counter, request, self.clock.now())?;
        if let Err(err) = submission.open_pre_review(&mut self.forge, &self.settings) {
            // the number stays consumed so it is never handed out twice
            self.commit(Commit::default())?;
            return Err(err.into());
        }
        let id = submission.id();
        let mut commit = Commit {
            submissions: vec![submission.clone()],
            ..Commit::default()
        };
        if self.registry.get(&submission.submitting_author().handle).is_none() {
            self.registry.upsert(submission.submitting_author().clone());
            commit.people.push(submission.submitting_author().clone());
        }
        if let Some(key) = idempotency_key {
            commit.idempotency_keys.push((key.to_owned(), id));
        }
        if let Some(issue) = submission.pre_review_issue() {
            self.by_issue.insert(issue.clone(), id);
        }
        self.commit(commit)?;
        Ok(&self.state.submissions[&id])
    }

    fn actor(&self, handle: &str) -> Result<PersonRef, JournalError> {
        self.registry
            .get(handle)
            .cloned()
            .ok_or_else(|| JournalError::UnknownActor(handle.trim_start_matches('@').to_owned()))
    }

    fn person_or_reviewer(&self, handle: &str) -> Result<PersonRef, JournalError> {
        match self.registry.get(handle) {
            Some(p) => Ok(p.clone()),
            None => PersonRef::new(handle, Role::Reviewer)
                .map_err(|e| WorkflowError::InvalidField(e.to_string()).into()),
        }
    }

    /// Applies a direct action by a registered actor.
    pub fn apply(&mut self, id: SubmissionId, action: Action, actor_handle: &str) -> Result<&Submission, JournalError> {
        let actor = self.actor(actor_handle)?;
        let mut s = self
            .state
            .submissions
            .get(&id)
            .cloned()
            .ok_or_else(|| JournalError::UnknownSubmission(id.to_string()))?;
        let now = self.clock.now();
        let mut publication = None;
        let template = self.template;
        match action {
            Action::Screen { verdict } => s.screen(verdict, &actor, &mut self.forge, &self.settings)?,
            Action::Reject => s.reject(&actor)?,
            Action::Withdraw => s.withdraw(&actor)?,
            Action::AssignEditor { editor } => {
                let editor = self
                    .registry
                    .get(&editor)
                    .cloned()
                    .ok_or(WorkflowError::NotAnEditor(editor))?;
                s.assign_editor(editor, &actor)?
            }
            Action::AssignReviewer { reviewer } => {
                let reviewer = self.person_or_reviewer(&reviewer)?;
                s.assign_reviewer(reviewer, &actor, template)?
            }
            Action::UnassignReviewer { reviewer } => s.unassign_reviewer(&reviewer, &actor)?,
            Action::StartReview { magic_word } => {
                s.start_review(&magic_word, &actor, &mut self.forge, &self.settings, template)
                    .map(|_| ())?
            }
            Action::SetArchive { doi } => s.set_archive(&doi, &actor).map(|_| ())?,
            Action::SetFastTrack { fast_track } => s.set_fast_track(fast_track, &actor, template)?,
            Action::SetChecklistItem { reviewer, item, checked } => {
                let value = if checked { ItemState::Checked } else { ItemState::Unchecked };
                s.set_checklist_item(&reviewer, &item, value, &actor, now)?
            }
            Action::Accept => {
                let result = s.accept_and_publish(&actor, &self.pipeline, &mut self.forge, &self.settings, now);
                match result {
                    Ok(p) => publication = Some(p),
                    // acceptance itself may have been committed before publishing failed
                    Err(err) if s.state() == SubmissionState::Accepted => {
                        self.store_submission(s, None)?;
                        return Err(err.into());
                    }
                    Err(err) => return Err(err.into()),
                }
            }
        }
        if s.state() == SubmissionState::UnderReview {
            sync_review_issue(&s, &mut self.forge, template);
        }
        self.store_submission(s, publication)?;
        Ok(&self.state.submissions[&id])
    }

    fn store_submission(&mut self, s: Submission, publication: Option<Publication>) -> Result<(), JournalError> {
        let id = s.id();
        if self.state.submissions.get(&id) == Some(&s) && publication.is_none() {
            return Ok(());
        }
        let mut commit = Commit::default();
        for issue in [s.pre_review_issue(), s.review_issue()].into_iter().flatten() {
            self.by_issue.insert(issue.clone(), id);
        }
        for r in s.reviewers() {
            if self.registry.get(&r.handle).is_none() {
                self.registry.upsert(r.clone());
                commit.people.push(r.clone());
            }
        }
        if let Some(p) = publication {
            commit.publications.push((id, p));
        }
        commit.submissions.push(s);
        self.commit(commit)
    }

    /// Validates and enqueues a webhook delivery. Duplicates are acknowledged only.
    pub fn ingest(&mut self, payload: WebhookPayload) -> Result<Ingested, JournalError> {
        // the clock is read only when the delivery carries no timestamp, so a
        // redelivery never perturbs a deterministic clock
        let received_at = payload.occurred_at.unwrap_or_else(|| self.clock.now());
        let (_, outcome) = self.queue.ingest_payload(payload, received_at)?;
        Ok(outcome)
    }

    pub fn ingest_event(&mut self, event: ForgeEvent) -> Ingested {
        self.queue.ingest(event)
    }

    /// Processes everything queued, in arrival order.
    pub fn process_pending(&mut self) -> Result<Vec<Processed>, JournalError> {
        let mut out = Vec::new();
        while let Some(event) = self.queue.pop() {
            out.push(self.process_event(event)?);
        }
        Ok(out)
    }

    fn process_event(&mut self, event: ForgeEvent) -> Result<Processed, JournalError> {
        let id = self.by_issue.get(&event.issue).copied();
        let from_bot = event.actor_handle.eq_ignore_ascii_case(self.config.bot());
        let mut outcome = CommandOutcome::ignored();
        let mut updated = None;
        if let (Some(id), false) = (id, from_bot) {
            let mut s = self.state.submissions[&id].clone();
            match event.kind {
                EventKind::CommentCreated => {
                    outcome = self.on_comment(&mut s, &event);
                }
                EventKind::IssueEdited if s.review_issue() == Some(&event.issue) => {
                    self.on_review_edit(&mut s, &event);
                }
                _ => {}
            }
            if self.state.submissions.get(&id) != Some(&s) {
                updated = Some(s);
            }
        }
        let mut commit = Commit {
            processed_events: vec![event.event_id.clone()],
            ..Commit::default()
        };
        if let Some(s) = updated {
            for issue in [s.pre_review_issue(), s.review_issue()].into_iter().flatten() {
                self.by_issue.insert(issue.clone(), s.id());
            }
            for r in s.reviewers() {
                if self.registry.get(&r.handle).is_none() {
                    self.registry.upsert(r.clone());
                    commit.people.push(r.clone());
                }
            }
            commit.submissions.push(s);
        }
        self.commit(commit)?;
        Ok(Processed {
            event_id: event.event_id,
            submission: id,
            outcome,
        })
    }

    fn on_comment(&mut self, s: &mut Submission, event: &ForgeEvent) -> CommandOutcome {
        let actor = self
            .registry
            .get(&event.actor_handle)
            .cloned()
            .or_else(|| PersonRef::new(event.actor_handle.as_str(), Role::Author).ok());
        let Some(actor) = actor else {
            return CommandOutcome::ignored();
        };
        if actor.role.is_editorial() {
            if let Err(err) = s.apply_fast_track_note(&event.body, &actor, self.template) {
                tracing::debug!(%err, "fast-track note not applied");
            }
        }
        let ctx = CommandContext {
            registry: &self.registry,
            settings: &self.settings,
            template: self.template,
            pipeline: &self.pipeline,
            bot_handle: self.config.bot(),
        };
        handle_comment(&event.body, actor, event.issue.clone(), s, &mut self.forge, &ctx)
    }

    /// Applies checkbox changes made by editing the review issue, then
    /// rewrites the issue so it shows exactly the stored state.
    fn on_review_edit(&mut self, s: &mut Submission, event: &ForgeEvent) {
        if s.state() != SubmissionState::UnderReview {
            return;
        }
        let actor = match self.registry.get(&event.actor_handle) {
            Some(p) => p.clone(),
            None => {
                sync_review_issue(s, &mut self.forge, self.template);
                return;
            }
        };
        for (handle, section) in split_review_body(&event.body) {
            let Ok(edited) = self.template.parse_markdown(&section) else {
                continue;
            };
            let Some(current) = s.checklist_for(&handle).cloned() else {
                continue;
            };
            for (item, value) in edited {
                if current.state(&item) != Some(value) {
                    if let Err(err) = s.set_checklist_item(&handle, &item, value, &actor, event.occurred_at) {
                        tracing::info!(%err, reviewer = %handle, %item, "checklist edit rejected");
                    }
                }
            }
        }
        sync_review_issue(s, &mut self.forge, self.template);
    }

    pub fn status(&self, s: &Submission, viewer: Option<&str>) -> SubmissionStatus {
        let badge_url = format!("/api/submissions/{}/badge.svg", s.id());
        let checklists = s
            .checklists()
            .iter()
            .map(|c| ChecklistProgress {
                reviewer: c.reviewer.handle.clone(),
                checked: c.checked_count(),
                total: c.states().len(),
                progress: c.progress(),
                complete: c.is_complete(),
                items: c.states().clone(),
            })
            .collect();
        let capabilities = viewer.and_then(|h| self.registry.get(h)).map(|p| {
            let live = !s.state().is_terminal();
            let reviewing = s.state() == SubmissionState::UnderReview;
            Capabilities {
                can_assign: live
                    && p.role.is_editorial()
                    && matches!(s.state(), SubmissionState::PreReview | SubmissionState::UnderReview),
                can_accept: p.role.can_publish()
                    && matches!(s.state(), SubmissionState::UnderReview | SubmissionState::Accepted),
                can_withdraw: live && p.same_handle(&s.submitting_author().handle),
                can_edit_checklists: if reviewing {
                    s.checklists()
                        .iter()
                        .filter(|c| p.role.is_editorial() || c.reviewer.same_handle(&p.handle))
                        .map(|c| c.reviewer.handle.clone())
                        .collect()
                } else {
                    Vec::new()
                },
            }
        });
        SubmissionStatus {
            id: s.id(),
            sequence_number: s.sequence_number(),
            title: s.title().to_owned(),
            state: s.state(),
            repository_url: s.repository_url().to_owned(),
            software_version: s.software_version().to_owned(),
            submitting_author: s.submitting_author().clone(),
            editor: s.editor().cloned(),
            reviewers: s.reviewers().to_vec(),
            fast_track: s.fast_track(),
            archive_doi: s.archive_doi().map(ToString::to_string),
            article_doi: s.article_doi().map(ToString::to_string),
            pre_review_issue: s.pre_review_issue().cloned(),
            review_issue: s.review_issue().cloned(),
            checklists,
            badge: render_badge(s.state(), &format!("/api/submissions/{}", s.id())),
            badge_url,
            submitted_at: s.submitted_at(),
            accepted_at: s.accepted_at(),
            published_at: s.published_at(),
            capabilities,
        }
    }

    /// Published articles, newest first.
    pub fn published(&self) -> Vec<PublishedArticle> {
        let mut out: Vec<PublishedArticle> = self
            .state
            .submissions
            .values()
            .filter(|s| s.state() == SubmissionState::Published)
            .map(|s| {
                let publication = self.state.publications.get(&s.id());
                PublishedArticle {
                    id: s.id(),
                    title: s.title().to_owned(),
                    authors: publication
                        .map(|p| p.authors.clone())
                        .unwrap_or_else(|| vec![s.submitting_author().name_or_handle().to_owned()]),
                    doi: s.article_doi().map(ToString::to_string).unwrap_or_default(),
                    archive_doi: s.archive_doi().map(ToString::to_string).unwrap_or_default(),
                    published_at: s.published_at().unwrap_or(s.submitted_at()),
                }
            })
            .collect();
        out.sort_by(|a, b| b.published_at.cmp(&a.published_at).then(b.doi.cmp(&a.doi)));
        out
    }

    /// Review records for every published submission. The journal does not
    /// track declined invitations, so `reviewers_contacted` counts the
    /// reviewers who were assigned; language and country are not collected.
    pub fn review_records(&self) -> Vec<ReviewRecord> {
        self.state
            .submissions
            .values()
            .filter(|s| s.state() == SubmissionState::Published)
            .map(|s| ReviewRecord {
                submission_id: s.id().to_string(),
                submitted_at: s.submitted_at().date_naive(),
                published_at: s.published_at().unwrap_or(s.submitted_at()).date_naive(),
                reviewer_count: s.reviewers().len() as u32,
                reviewers_contacted: s.reviewers().len() as u32,
                editor_handle: s.editor().map(|e| e.handle.clone()).unwrap_or_default(),
                languages: Vec::new(),
                author_countries: Vec::new(),
            })
            .collect()
    }

    pub fn report(&self) -> Report {
        export_report(&self.review_records(), &CostParameters::default())
    }

    /// Writes a snapshot now, if the journal is backed by a store.
    pub fn checkpoint(&mut self) -> Result<(), JournalError> {
        if let Some(store) = &mut self.store {
            store.snapshot(&self.state)?;
        }
        Ok(())
    }
}

impl From<ForgeError> for JournalError {
    fn from(err: ForgeError) -> Self {
        JournalError::Workflow(WorkflowError::ForgeUnavailable(err))
    }
}
