//! Submission lifecycle.
//!
//! ```text
//! Submitted ──open_pre_review──▶ PreReview ──start_review──▶ UnderReview ──accept──▶ Accepted ──▶ Published
//!     │                            │                             │                      │
//!     └──screen/reject──▶ Rejected ◀┘                             └──────withdraw────────┴──▶ Withdrawn
//! ```
//!
//! Every operation validates before it mutates: on error the submission is
//! left exactly as it was. The one exception is a publishing failure after
//! acceptance, which leaves the submission in `Accepted` so publication can be
//! resumed.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::article::{
    mint_article_doi_with_prefix, validate_archive_doi, ArchiveDoi, Doi, DoiError, PipelineError,
    PipelineHandle, Publication,
};
use crate::checklist::{detect_fast_track, ChecklistError, ChecklistTemplate, ItemState, ReviewerChecklist};
use crate::forge::{Forge, ForgeError, IssueRef};
use crate::person::{PersonRef, Role};

const ID_NAMESPACE: Uuid = Uuid::from_u128(0x6f6a_2d73_7562_6d69_7373_696f_6e73_0001);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubmissionId(Uuid);

impl SubmissionId {
    /// Ids are derived from the sequence number so replays are reproducible.
    pub fn from_sequence(sequence_number: u64) -> Self {
        Self(Uuid::new_v5(&ID_NAMESPACE, format!("submission/{sequence_number}").as_bytes()))
    }
}

impl fmt::Display for SubmissionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for SubmissionId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(Self)
    }
}

/// Journal-wide article counter. `next` hands out each value once.
#[derive(Debug)]
pub struct SequenceCounter(AtomicU64);

impl SequenceCounter {
    pub fn starting_at(first: u64) -> Self {
        Self(AtomicU64::new(first.max(1)))
    }

    pub fn next(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }

    /// The value the next call to `next` will return.
    pub fn peek(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn ensure_above(&self, used: u64) {
        self.0.fetch_max(used + 1, Ordering::SeqCst);
    }
}

impl Default for SequenceCounter {
    fn default() -> Self {
        Self::starting_at(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionState {
    Submitted,
    PreReview,
    UnderReview,
    Accepted,
    Published,
    Withdrawn,
    Rejected,
}

impl SubmissionState {
    pub const ALL: [SubmissionState; 7] = [
        SubmissionState::Submitted,
        SubmissionState::PreReview,
        SubmissionState::UnderReview,
        SubmissionState::Accepted,
        SubmissionState::Published,
        SubmissionState::Withdrawn,
        SubmissionState::Rejected,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SubmissionState::Published | SubmissionState::Withdrawn | SubmissionState::Rejected
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            SubmissionState::Submitted => "submitted",
            SubmissionState::PreReview => "pre-review",
            SubmissionState::UnderReview => "under review",
            SubmissionState::Accepted => "accepted",
            SubmissionState::Published => "published",
            SubmissionState::Withdrawn => "withdrawn",
            SubmissionState::Rejected => "rejected",
        }
    }

    fn color(self) -> &'static str {
        match self {
            SubmissionState::Submitted => "lightgrey",
            SubmissionState::PreReview => "orange",
            SubmissionState::UnderReview => "yellow",
            SubmissionState::Accepted => "green",
            SubmissionState::Published => "brightgreen",
            SubmissionState::Withdrawn => "lightgrey",
            SubmissionState::Rejected => "red",
        }
    }
}

impl fmt::Display for SubmissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Badge {
    pub state_label: String,
    pub color: String,
    pub target_url: String,
}

pub fn render_badge(state: SubmissionState, submission_url: &str) -> Badge {
    Badge {
        state_label: state.label().to_owned(),
        color: state.color().to_owned(),
        target_url: submission_url.to_owned(),
    }
}

impl Badge {
    fn hex(&self) -> &'static str {
        match self.color.as_str() {
            "lightgrey" => "#9f9f9f",
            "orange" => "#fe7d37",
            "yellow" => "#dfb317",
            "green" => "#97ca00",
            "brightgreen" => "#4c1",
            "red" => "#e05d44",
            _ => "#555",
        }
    }

    /// Flat two-part status badge for embedding in READMEs.
    pub fn to_svg(&self, left: &str) -> String {
        let lw = 6 * left.chars().count() as u32 + 10;
        let rw = 6 * self.state_label.chars().count() as u32 + 10;
        let w = lw + rw;
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"20\" role=\"img\" aria-label=\"{left}: {label}\">",
                "<title>{left}: {label}</title>",
                "<a href=\"{url}\">",
                "<rect width=\"{lw}\" height=\"20\" fill=\"#555\"/>",
                "<rect x=\"{lw}\" width=\"{rw}\" height=\"20\" fill=\"{hex}\"/>",
                "<g fill=\"#fff\" text-anchor=\"middle\" font-family=\"Verdana,DejaVu Sans,sans-serif\" font-size=\"11\">",
                "<text x=\"{lx}\" y=\"14\">{left}</text>",
                "<text x=\"{rx}\" y=\"14\">{label}</text>",
                "</g></a></svg>"
            ),
            w = w,
            lw = lw,
            rw = rw,
            lx = lw / 2,
            rx = lw + rw / 2,
            left = xml_text(left),
            label = xml_text(&self.state_label),
            url = xml_text(&self.target_url),
            hex = self.hex(),
        )
    }
}

fn xml_text(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("cannot {operation} a submission that is {state}")]
    IllegalTransition {
        operation: &'static str,
        state: SubmissionState,
    },
    #[error("@{actor} ({role}) is not allowed to {operation}")]
    Unauthorized {
        actor: String,
        role: Role,
        operation: &'static str,
    },
    #[error("@{0} is already a reviewer")]
    DuplicateReviewer(String),
    #[error("@{0} cannot be both editor and reviewer")]
    EditorReviewerConflict(String),
    #[error("@{0} is not a reviewer of this submission")]
    UnknownReviewer(String),
    #[error("@{0} does not hold an editorial role")]
    NotAnEditor(String),
    #[error("a submission under review needs at least one reviewer")]
    LastReviewer,
    #[error("no editor has been assigned")]
    MissingEditor,
    #[error("no reviewer has been assigned")]
    MissingReviewer,
    #[error("the magic word does not match")]
    WrongMagicWord,
    #[error(transparent)]
    InvalidDoi(#[from] DoiError),
    #[error("no software archive DOI has been set")]
    MissingArchive,
    #[error("checklist of @{reviewer} is incomplete ({checked}/{total})")]
    ChecklistIncomplete {
        reviewer: String,
        checked: usize,
        total: usize,
    },
    #[error(transparent)]
    Checklist(#[from] ChecklistError),
    #[error(transparent)]
    ForgeUnavailable(#[from] ForgeError),
    #[error("publishing failed: {0}")]
    Pipeline(#[from] PipelineError),
}

/// Deployment values the state machine consults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSettings {
    pub magic_word: String,
    pub reviews_repository: String,
    pub doi_prefix: String,
}

impl Default for WorkflowSettings {
    fn default() -> Self {
        Self {
            magic_word: "bananas".into(),
            reviews_repository: "openjournals/joss-reviews".into(),
            doi_prefix: crate::article::doi::JOURNAL_DOI_PREFIX.into(),
        }
    }
}

/// Outcome of the administrator's scope check on a fresh submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningVerdict {
    InScope,
    OutOfScope,
}

/// Form data for a new submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRequest {
    pub title: String,
    pub repository_url: String,
    pub software_version: String,
    pub author: PersonRef,
    #[serde(default)]
    pub presubmission_inquiry: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    id: SubmissionId,
    sequence_number: u64,
    state: SubmissionState,
    title: String,
    repository_url: String,
    software_version: String,
    submitting_author: PersonRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    presubmission_inquiry: Option<String>,
    editor: Option<PersonRef>,
    reviewers: Vec<PersonRef>,
    checklists: Vec<ReviewerChecklist>,
    archive_doi: Option<ArchiveDoi>,
    pre_review_issue: Option<IssueRef>,
    review_issue: Option<IssueRef>,
    article_doi: Option<Doi>,
    fast_track: bool,
    submitted_at: DateTime<Utc>,
    accepted_at: Option<DateTime<Utc>>,
    published_at: Option<DateTime<Utc>>,
}

fn is_url(text: &str) -> bool {
    let Some((scheme, rest)) = text.split_once("://") else {
        return false;
    };
    let host = rest.split(['/', '?', '#']).next().unwrap_or("");
    matches!(scheme, "http" | "https")
        && !host.is_empty()
        && !text.chars().any(char::is_whitespace)
        && host
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | ':' | '_'))
}

pub fn create_submission(
    counter: &SequenceCounter,
    request: SubmissionRequest,
    now: DateTime<Utc>,
) -> Result<Submission, WorkflowError> {
    if request.title.trim().is_empty() {
        return Err(WorkflowError::InvalidField("title must not be empty".into()));
    }
    if request.repository_url.trim().is_empty() {
        return Err(WorkflowError::InvalidField("repository_url must not be empty".into()));
    }
    if !is_url(request.repository_url.trim()) {
        return Err(WorkflowError::InvalidField(format!(
            "repository_url {:?} is not an http(s) URL",
            request.repository_url
        )));
    }
    let sequence_number = counter.next();
    Ok(Submission {
        id: SubmissionId::from_sequence(sequence_number),
        sequence_number,
        state: SubmissionState::Submitted,
        title: request.title.trim().to_owned(),
        repository_url: request.repository_url.trim().to_owned(),
        software_version: request.software_version.trim().to_owned(),
        submitting_author: request.author,
        presubmission_inquiry: request.presubmission_inquiry.filter(|s| !s.trim().is_empty()),
        editor: None,
        reviewers: Vec::new(),
        checklists: Vec::new(),
        archive_doi: None,
        pre_review_issue: None,
        review_issue: None,
        article_doi: None,
        fast_track: false,
        submitted_at: now,
        accepted_at: None,
        published_at: None,
    })
}

impl Submission {
    pub fn id(&self) -> SubmissionId {
        self.id
    }
    pub fn sequence_number(&self) -> u64 {
        self.sequence_number
    }
    pub fn state(&self) -> SubmissionState {
        self.state
    }
    pub fn title(&self) -> &str {
        &self.title
    }
    pub fn repository_url(&self) -> &str {
        &self.repository_url
    }
    pub fn software_version(&self) -> &str {
        &self.software_version
    }
    pub fn submitting_author(&self) -> &PersonRef {
        &self.submitting_author
    }
    pub fn presubmission_inquiry(&self) -> Option<&str> {
        self.presubmission_inquiry.as_deref()
    }
    pub fn editor(&self) -> Option<&PersonRef> {
        self.editor.as_ref()
    }
    pub fn reviewers(&self) -> &[PersonRef] {
        &self.reviewers
    }
    pub fn checklists(&self) -> &[ReviewerChecklist] {
        &self.checklists
    }
    pub fn checklist_for(&self, handle: &str) -> Option<&ReviewerChecklist> {
        self.checklists.iter().find(|c| c.reviewer.same_handle(handle))
    }
    pub fn archive_doi(&self) -> Option<&ArchiveDoi> {
        self.archive_doi.as_ref()
    }
    pub fn pre_review_issue(&self) -> Option<&IssueRef> {
        self.pre_review_issue.as_ref()
    }
    pub fn review_issue(&self) -> Option<&IssueRef> {
        self.review_issue.as_ref()
    }
    pub fn article_doi(&self) -> Option<&Doi> {
        self.article_doi.as_ref()
    }
    pub fn fast_track(&self) -> bool {
        self.fast_track
    }
    pub fn submitted_at(&self) -> DateTime<Utc> {
        self.submitted_at
    }
    pub fn accepted_at(&self) -> Option<DateTime<Utc>> {
        self.accepted_at
    }
    pub fn published_at(&self) -> Option<DateTime<Utc>> {
        self.published_at
    }

    /// True when `handle` names one of this submission's reviewers.
    pub fn is_reviewer(&self, handle: &str) -> bool {
        self.reviewers.iter().any(|r| r.same_handle(handle))
    }

    /// Acceptance gate on reviews: fast-tracked, or every reviewer's checklist complete.
    pub fn reviews_complete(&self) -> bool {
        self.fast_track
            || self.reviewers.iter().all(|r| {
                self.checklist_for(&r.handle)
                    .is_some_and(ReviewerChecklist::is_complete)
            })
    }

    /// Checks the record-level invariants, describing the first one broken.
    pub fn check_invariants(&self) -> Result<(), String> {
        use SubmissionState::*;
        for (i, r) in self.reviewers.iter().enumerate() {
            if self.reviewers[..i].iter().any(|o| o.same_handle(&r.handle)) {
                return Err(format!("duplicate reviewer @{}", r.handle));
            }
            if self.editor.as_ref().is_some_and(|e| e.same_handle(&r.handle)) {
                return Err(format!("editor @{} is also a reviewer", r.handle));
            }
        }
        for c in &self.checklists {
            if !self.is_reviewer(&c.reviewer.handle) {
                return Err(format!("checklist for non-reviewer @{}", c.reviewer.handle));
            }
            if c.completed_at().is_some() != c.is_complete() {
                return Err(format!("completion stamp out of sync for @{}", c.reviewer.handle));
            }
        }
        if self.state == UnderReview {
            if self.editor.is_none() || self.reviewers.is_empty() || self.review_issue.is_none() {
                return Err("under review without editor, reviewer or review issue".into());
            }
            if !self.fast_track
                && self
                    .reviewers
                    .iter()
                    .any(|r| self.checklist_for(&r.handle).is_none())
            {
                return Err("reviewer without checklist".into());
            }
        }
        if matches!(self.state, Accepted | Published) {
            if self.archive_doi.is_none() {
                return Err("accepted without archive DOI".into());
            }
            if !self.reviews_complete() {
                return Err("accepted with incomplete checklists".into());
            }
        }
        if self.state == Published {
            match (&self.article_doi, self.published_at) {
                (Some(_), Some(at)) if at >= self.submitted_at => {}
                _ => return Err("published without DOI or with bad timestamps".into()),
            }
        }
        Ok(())
    }

    fn ensure_live(&self, operation: &'static str) -> Result<(), WorkflowError> {
        if self.state.is_terminal() {
            return Err(self.illegal(operation));
        }
        Ok(())
    }

    fn illegal(&self, operation: &'static str) -> WorkflowError {
        WorkflowError::IllegalTransition {
            operation,
            state: self.state,
        }
    }

    fn require_editorial(actor: &PersonRef, operation: &'static str) -> Result<(), WorkflowError> {
        if actor.role.is_editorial() {
            Ok(())
        } else {
            Err(WorkflowError::Unauthorized {
                actor: actor.handle.clone(),
                role: actor.role,
                operation,
            })
        }
    }

    fn require_state(&self, allowed: &[SubmissionState], operation: &'static str) -> Result<(), WorkflowError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(self.illegal(operation))
        }
    }

    pub fn open_pre_review(
        &mut self,
        forge: &mut dyn Forge,
        settings: &WorkflowSettings,
    ) -> Result<IssueRef, WorkflowError> {
        const OP: &str = "open pre-review for";
        self.require_state(&[SubmissionState::Submitted], OP)?;
        let issue = forge.open_issue(
            &settings.reviews_repository,
            &format!("[PRE REVIEW]: {}", self.title),
            &self.pre_review_body(),
        )?;
        self.pre_review_issue = Some(issue.clone());
        self.state = SubmissionState::PreReview;
        Ok(issue)
    }

    /// Administrator scope check: in-scope work moves to pre-review, the rest is desk-rejected.
    pub fn screen(
        &mut self,
        verdict: ScreeningVerdict,
        actor: &PersonRef,
        forge: &mut dyn Forge,
        settings: &WorkflowSettings,
    ) -> Result<(), WorkflowError> {
        const OP: &str = "screen";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::Submitted], OP)?;
        match verdict {
            ScreeningVerdict::InScope => self.open_pre_review(forge, settings).map(|_| ()),
            ScreeningVerdict::OutOfScope => {
                self.state = SubmissionState::Rejected;
                Ok(())
            }
        }
    }

    /// Scope rejection. Work under review is never rejected, only withdrawn.
    pub fn reject(&mut self, actor: &PersonRef) -> Result<(), WorkflowError> {
        const OP: &str = "reject";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::Submitted, SubmissionState::PreReview], OP)?;
        self.state = SubmissionState::Rejected;
        Ok(())
    }

    pub fn withdraw(&mut self, actor: &PersonRef) -> Result<(), WorkflowError> {
        const OP: &str = "withdraw";
        self.ensure_live(OP)?;
        if !actor.same_handle(&self.submitting_author.handle) {
            return Err(WorkflowError::Unauthorized {
                actor: actor.handle.clone(),
                role: actor.role,
                operation: OP,
            });
        }
        self.state = SubmissionState::Withdrawn;
        Ok(())
    }

    pub fn assign_editor(&mut self, editor: PersonRef, actor: &PersonRef) -> Result<(), WorkflowError> {
        const OP: &str = "assign an editor to";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::PreReview, SubmissionState::UnderReview], OP)?;
        if !editor.role.is_editorial() {
            return Err(WorkflowError::NotAnEditor(editor.handle));
        }
        if self.is_reviewer(&editor.handle) {
            return Err(WorkflowError::EditorReviewerConflict(editor.handle));
        }
        self.editor = Some(editor);
        Ok(())
    }

    pub fn assign_reviewer(
        &mut self,
        reviewer: PersonRef,
        actor: &PersonRef,
        template: &ChecklistTemplate,
    ) -> Result<(), WorkflowError> {
        const OP: &str = "assign a reviewer to";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::PreReview, SubmissionState::UnderReview], OP)?;
        if self.editor.as_ref().is_some_and(|e| e.same_handle(&reviewer.handle)) {
            return Err(WorkflowError::EditorReviewerConflict(reviewer.handle));
        }
        if self.is_reviewer(&reviewer.handle) {
            return Err(WorkflowError::DuplicateReviewer(reviewer.handle));
        }
        if self.state == SubmissionState::UnderReview && !self.fast_track {
            self.checklists
                .push(template.instantiate(reviewer.clone(), self.id));
        }
        self.reviewers.push(reviewer);
        Ok(())
    }

    pub fn unassign_reviewer(&mut self, handle: &str, actor: &PersonRef) -> Result<(), WorkflowError> {
        const OP: &str = "unassign a reviewer from";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::PreReview, SubmissionState::UnderReview], OP)?;
        if !self.is_reviewer(handle) {
            return Err(WorkflowError::UnknownReviewer(handle.to_owned()));
        }
        if self.state == SubmissionState::UnderReview && self.reviewers.len() == 1 {
            return Err(WorkflowError::LastReviewer);
        }
        self.reviewers.retain(|r| !r.same_handle(handle));
        self.checklists.retain(|c| !c.reviewer.same_handle(handle));
        Ok(())
    }

    pub fn start_review(
        &mut self,
        magic_word: &str,
        actor: &PersonRef,
        forge: &mut dyn Forge,
        settings: &WorkflowSettings,
        template: &ChecklistTemplate,
    ) -> Result<IssueRef, WorkflowError> {
        const OP: &str = "start the review of";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::PreReview], OP)?;
        if self.editor.is_none() {
            return Err(WorkflowError::MissingEditor);
        }
        if self.reviewers.is_empty() {
            return Err(WorkflowError::MissingReviewer);
        }
        if magic_word != settings.magic_word {
            return Err(WorkflowError::WrongMagicWord);
        }
        let mut next = self.clone();
        if !next.fast_track {
            next.checklists = next
                .reviewers
                .iter()
                .map(|r| template.instantiate(r.clone(), next.id))
                .collect();
        }
        next.state = SubmissionState::UnderReview;
        let issue = forge.open_issue(
            &settings.reviews_repository,
            &format!("[REVIEW]: {}", self.title),
            &next.review_body(template),
        )?;
        next.review_issue = Some(issue.clone());
        *self = next;
        Ok(issue)
    }

    pub fn set_archive(&mut self, doi_text: &str, actor: &PersonRef) -> Result<ArchiveDoi, WorkflowError> {
        const OP: &str = "set the archive of";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(&[SubmissionState::UnderReview], OP)?;
        let doi = validate_archive_doi(doi_text)?;
        self.archive_doi = Some(doi.clone());
        Ok(doi)
    }

    pub fn set_fast_track(
        &mut self,
        fast_track: bool,
        actor: &PersonRef,
        template: &ChecklistTemplate,
    ) -> Result<(), WorkflowError> {
        const OP: &str = "change the fast-track flag of";
        self.ensure_live(OP)?;
        Self::require_editorial(actor, OP)?;
        self.require_state(
            &[
                SubmissionState::Submitted,
                SubmissionState::PreReview,
                SubmissionState::UnderReview,
            ],
            OP,
        )?;
        self.fast_track = fast_track;
        if !fast_track && self.state == SubmissionState::UnderReview {
            for r in &self.reviewers {
                if !self.checklists.iter().any(|c| c.reviewer.same_handle(&r.handle)) {
                    self.checklists.push(template.instantiate(r.clone(), self.id));
                }
            }
        }
        Ok(())
    }

    /// Sets the fast-track flag when the note carries the rOpenSci acceptance sentence.
    pub fn apply_fast_track_note(
        &mut self,
        note: &str,
        actor: &PersonRef,
        template: &ChecklistTemplate,
    ) -> Result<bool, WorkflowError> {
        if !detect_fast_track(note) {
            return Ok(false);
        }
        self.set_fast_track(true, actor, template)?;
        Ok(true)
    }

    pub fn set_checklist_item(
        &mut self,
        reviewer_handle: &str,
        item_id: &str,
        value: ItemState,
        actor: &PersonRef,
        now: DateTime<Utc>,
    ) -> Result<(), WorkflowError> {
        const OP: &str = "edit a checklist of";
        self.ensure_live(OP)?;
        self.require_state(&[SubmissionState::UnderReview], OP)?;
        let checklist = self
            .checklists
            .iter_mut()
            .find(|c| c.reviewer.same_handle(reviewer_handle))
            .ok_or_else(|| WorkflowError::UnknownReviewer(reviewer_handle.to_owned()))?;
        checklist.set_item(item_id, value, actor, now)?;
        Ok(())
    }

    /// Accepts the submission, publishes it through `pipeline`, and closes the
    /// review issue. Also resumes a publication interrupted after acceptance.
    pub fn accept_and_publish(
        &mut self,
        actor: &PersonRef,
        pipeline: &dyn PipelineHandle,
        forge: &mut dyn Forge,
        settings: &WorkflowSettings,
        now: DateTime<Utc>,
    ) -> Result<Publication, WorkflowError> {
        const OP: &str = "accept";
        self.ensure_live(OP)?;
        if !actor.role.can_publish() {
            return Err(WorkflowError::Unauthorized {
                actor: actor.handle.clone(),
                role: actor.role,
                operation: OP,
            });
        }
        self.require_state(&[SubmissionState::UnderReview, SubmissionState::Accepted], OP)?;
        if self.state == SubmissionState::UnderReview {
            self.accept(settings, now)?;
        }
        self.publish(pipeline, forge, now)
    }

    fn accept(&mut self, settings: &WorkflowSettings, now: DateTime<Utc>) -> Result<(), WorkflowError> {
        if self.archive_doi.is_none() {
            return Err(WorkflowError::MissingArchive);
        }
        if !self.fast_track {
            for r in &self.reviewers {
                let (checked, total) = self
                    .checklist_for(&r.handle)
                    .map(|c| (c.checked_count(), c.states().len()))
                    .unwrap_or((0, 0));
                if total == 0 || checked < total {
                    return Err(WorkflowError::ChecklistIncomplete {
                        reviewer: r.handle.clone(),
                        checked,
                        total,
                    });
                }
            }
        }
        let doi = mint_article_doi_with_prefix(&settings.doi_prefix, self.sequence_number)?;
        self.article_doi = Some(doi);
        self.accepted_at = Some(now.max(self.submitted_at));
        self.state = SubmissionState::Accepted;
        Ok(())
    }

    fn publish(
        &mut self,
        pipeline: &dyn PipelineHandle,
        forge: &mut dyn Forge,
        now: DateTime<Utc>,
    ) -> Result<Publication, WorkflowError> {
        let doi = self.article_doi.clone().expect("accepted submissions carry a DOI");
        let archive = self.archive_doi.clone().expect("accepted submissions carry an archive");
        let published_at = now.max(self.submitted_at);
        let publication = pipeline.publish(self, &doi, &archive, published_at.date_naive())?;
        if let Some(issue) = self.review_issue.clone() {
            let note = format!(
                "Congratulations! This submission is published as {} ({}).",
                doi,
                doi.url()
            );
            match forge.post_comment(&issue, &note).and_then(|_| forge.close_issue(&issue)) {
                Ok(_) | Err(ForgeError::IssueClosed(_)) => {}
                Err(err) => return Err(err.into()),
            }
        }
        self.published_at = Some(published_at);
        self.state = SubmissionState::Published;
        Ok(publication)
    }

    fn pre_review_body(&self) -> String {
        let mut body = format!(
            "**Submitting author:** @{}\n**Repository:** {}\n**Version:** {}\n",
            self.submitting_author.handle, self.repository_url, self.software_version
        );
        if let Some(q) = &self.presubmission_inquiry {
            body.push_str(&format!("\n**Pre-submission inquiry:**\n\n{q}\n"));
        }
        body.push_str("\nAn editor will be assigned shortly. Reviewers are assigned in this issue before the review starts.\n");
        body
    }

    /// Review issue body: header plus one rendered checklist per reviewer.
    pub fn review_body(&self, template: &ChecklistTemplate) -> String {
        let mut body = format!(
            "**Submitting author:** @{}\n**Repository:** {}\n**Version:** {}\n**Editor:** {}\n**Reviewers:** {}\n**Archive:** {}\n",
            self.submitting_author.handle,
            self.repository_url,
            self.software_version,
            self.editor
                .as_ref()
                .map(|e| format!("@{}", e.handle))
                .unwrap_or_else(|| "Pending".into()),
            self.reviewers
                .iter()
                .map(|r| format!("@{}", r.handle))
                .collect::<Vec<_>>()
                .join(", "),
            self.archive_doi
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_else(|| "Pending".into()),
        );
        if self.fast_track {
            body.push_str("\nThis submission is fast-tracked: it was already reviewed by rOpenSci.\n");
        }
        for checklist in &self.checklists {
            body.push_str(&format!(
                "\n{}{}\n\n",
                REVIEWER_SECTION_PREFIX, checklist.reviewer.handle
            ));
            body.push_str(&template.render_markdown(checklist));
        }
        body
    }
}

pub const REVIEWER_SECTION_PREFIX: &str = "## Review checklist for @";

/// Splits a review issue body into per-reviewer checklist sections, keyed by handle.
pub fn split_review_body(body: &str) -> Vec<(String, String)> {
    let mut sections: Vec<(String, String)> = Vec::new();
    for line in body.lines() {
        if let Some(handle) = line.trim_end().strip_prefix(REVIEWER_SECTION_PREFIX) {
            sections.push((handle.trim().to_owned(), String::new()));
        } else if let Some((_, text)) = sections.last_mut() {
            text.push_str(line);
            text.push('\n');
        }
    }
    sections
}
