//! Scripted runs against the simulated forge, as used by `journal simulate`.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "first_sequence_number": 205,
//!   "people": [{"handle": "arfon", "role": "editor_in_chief"}],
//!   "steps": [
//!     {"submit": {"title": "hdbscan", "repository_url": "https://github.com/o/r",
//!                 "software_version": "0.8.12", "author": "lmcinnes"}},
//!     {"comment": {"issue": "pre_review", "actor": "arfon",
//!                  "body": "@whedon assign @danielskatz as editor"}},
//!     {"check_items": {"reviewer": "zhaozhang"}},
//!     {"act": {"actor": "arfon", "action": {"action": "accept"}}},
//!     {"expect": {"state": "published", "article_doi": "10.21105/joss.00205"}}
//!   ]
//! }
//! ```
//!
//! Comments and checklist edits go through the forge and come back to the
//! journal as events, the same way webhook deliveries do.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::article::parse_manuscript;
use crate::checklist::ItemState;
use crate::clock::SteppingClock;
use crate::config::JournalConfig;
use crate::forge::{Forge, ForgeEvent, IssueRef, SimulatedForge};
use crate::journal::{Action, Journal, JournalError};
use crate::person::{PersonRef, Role};
use crate::workflow::{split_review_body, SubmissionId, SubmissionRequest, SubmissionState, REVIEWER_SECTION_PREFIX};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manuscript {path}: {message}")]
    Manuscript { path: PathBuf, message: String },
    #[error("step {step}: {message}")]
    Step { step: usize, message: String },
    #[error("step {step}: expectation failed: {message}")]
    Expectation { step: usize, message: String },
}

fn default_start() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2017-02-26T09:00:00Z")
        .expect("constant timestamp")
        .with_timezone(&Utc)
}

fn default_step_minutes() -> i64 {
    5
}

fn default_first() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManuscriptFile {
    pub repository_url: String,
    /// Relative paths resolve against the scenario file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_first")]
    pub first_sequence_number: u64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    /// Simulated time that passes at every clock reading.
    #[serde(default = "default_step_minutes")]
    pub step_minutes: i64,
    #[serde(default)]
    pub magic_word: Option<String>,
    #[serde(default)]
    pub people: Vec<PersonRef>,
    #[serde(default)]
    pub manuscripts: Vec<ManuscriptFile>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    PreReview,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Submit {
        title: String,
        repository_url: String,
        software_version: String,
        author: String,
        #[serde(default)]
        idempotency_key: Option<String>,
        #[serde(default)]
        presubmission_inquiry: Option<String>,
    },
    Comment {
        /// Index of the submission in submit order.
        #[serde(default)]
        submission: usize,
        issue: IssueKind,
        actor: String,
        body: String,
    },
    /// Ticks checklist items by editing the review issue. All items when `items` is absent.
    CheckItems {
        #[serde(default)]
        submission: usize,
        reviewer: String,
        #[serde(default)]
        actor: Option<String>,
        #[serde(default)]
        items: Option<Vec<String>>,
    },
    Act {
        #[serde(default)]
        submission: usize,
        actor: String,
        action: Action,
    },
    Advance {
        days: i64,
    },
    Expect {
        #[serde(default)]
        submission: usize,
        state: SubmissionState,
        #[serde(default)]
        article_doi: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub description: String,
    pub result: String,
}

pub struct ScenarioRun {
    pub journal: Journal<SimulatedForge>,
    pub clock: Arc<SteppingClock>,
    pub submissions: Vec<SubmissionId>,
    pub log: Vec<StepLog>,
    /// Events delivered to the journal that did not come from the bot.
    pub inbound: Vec<ForgeEvent>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    pub fn config(&self) -> JournalConfig {
        let mut config = JournalConfig {
            first_sequence_number: self.first_sequence_number.max(1),
            people: self.people.clone(),
            ..JournalConfig::default()
        };
        if let Some(word) = &self.magic_word {
            config.magic_word = word.clone();
        }
        config
    }

    /// Runs every step on a fresh in-memory journal.
    pub fn run(&self, base_dir: &Path) -> Result<ScenarioRun, ScenarioError> {
        let config = self.config();
        let clock = Arc::new(SteppingClock::new(self.start, Duration::minutes(self.step_minutes)));
        let mut forge = SimulatedForge::new(config.bot(), clock.clone());
        forge.add_repository(&config.reviews_repository);
        let mut journal = Journal::in_memory(config, forge, clock.clone());
        for m in &self.manuscripts {
            let path = base_dir.join(&m.path);
            let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                path: path.clone(),
                source,
            })?;
            let manuscript = parse_manuscript(&text).map_err(|e| ScenarioError::Manuscript {
                path: path.clone(),
                message: e.to_string(),
            })?;
            journal
                .pipeline_mut()
                .register_manuscript(m.repository_url.clone(), manuscript);
        }
        let mut run = ScenarioRun {
            journal,
            clock,
            submissions: Vec::new(),
            log: Vec::new(),
            inbound: Vec::new(),
        };
        let mut delivered = 0usize;
        for (i, step) in self.steps.iter().enumerate() {
            let step_no = i + 1;
            let (description, result) = run.step(step_no, step)?;
            delivered = run.deliver(delivered).map_err(|e| ScenarioError::Step {
                step: step_no,
                message: e.to_string(),
            })?;
            run.log.push(StepLog {
                step: step_no,
                description,
                result,
            });
        }
        Ok(run)
    }
}

fn all_checked(body: &str, reviewer: &str, items: Option<&[String]>, journal: &Journal<SimulatedForge>) -> String {
    let template = journal.template();
    let mut out = String::new();
    let mut in_section = false;
    for line in body.lines() {
        if let Some(handle) = line.strip_prefix(REVIEWER_SECTION_PREFIX) {
            in_section = handle.trim().eq_ignore_ascii_case(reviewer);
        }
        let mut line = line.to_owned();
        if in_section && line.starts_with("- [ ] ") {
            let wanted = match items {
                None => true,
                Some(ids) => template.items().any(|def| {
                    ids.contains(&def.id) && line == format!("- [ ] **{}**: {}", def.label, def.prompt)
                }),
            };
            if wanted {
                line = line.replacen("- [ ] ", "- [x] ", 1);
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

impl ScenarioRun {
    fn submission_id(&self, step: usize, index: usize) -> Result<SubmissionId, ScenarioError> {
        self.submissions.get(index).copied().ok_or(ScenarioError::Step {
            step,
            message: format!("no submission #{index} has been made yet"),
        })
    }

    fn issue(&self, step: usize, index: usize, kind: IssueKind) -> Result<IssueRef, ScenarioError> {
        let id = self.submission_id(step, index)?;
        let s = self.journal.submission(id).expect("ids come from the journal");
        let issue = match kind {
            IssueKind::PreReview => s.pre_review_issue(),
            IssueKind::Review => s.review_issue(),
        };
        issue.cloned().ok_or(ScenarioError::Step {
            step,
            message: format!("submission #{index} has no {kind:?} issue"),
        })
    }

    fn step(&mut self, step_no: usize, step: &Step) -> Result<(String, String), ScenarioError> {
        let fail = |message: String| ScenarioError::Step { step: step_no, message };
        match step {
            Step::Submit {
                title,
                repository_url,
                software_version,
                author,
                idempotency_key,
                presubmission_inquiry,
            } => {
                let author = self
                    .journal
                    .registry()
                    .get(author)
                    .cloned()
                    .map(Ok)
                    .unwrap_or_else(|| PersonRef::new(author.as_str(), Role::Author))
                    .map_err(|e| fail(e.to_string()))?;
                let request = SubmissionRequest {
                    title: title.clone(),
                    repository_url: repository_url.clone(),
                    software_version: software_version.clone(),
                    author,
                    presubmission_inquiry: presubmission_inquiry.clone(),
                };
                let description = format!("submit {title:?}");
                match self.journal.submit(request, idempotency_key.as_deref()) {
                    Ok(s) => {
                        let (id, n, state) = (s.id(), s.sequence_number(), s.state());
                        if !self.submissions.contains(&id) {
                            self.submissions.push(id);
                        }
                        Ok((description, format!("#{n} {state}")))
                    }
                    Err(err) => Ok((description, format!("error: {err}"))),
                }
            }
            Step::Comment {
                submission,
                issue,
                actor,
                body,
            } => {
                let issue = self.issue(step_no, *submission, *issue)?;
                self.journal
                    .forge_mut()
                    .comment_as(&issue, actor, body)
                    .map_err(|e| fail(e.to_string()))?;
                Ok((format!("@{actor} on {issue}: {body}"), "posted".into()))
            }
            Step::CheckItems {
                submission,
                reviewer,
                actor,
                items,
            } => {
                let issue = self.issue(step_no, *submission, IssueKind::Review)?;
                let body = self.journal.forge().issue_body(&issue).unwrap_or_default();
                let edited = all_checked(&body, reviewer, items.as_deref(), &self.journal);
                let actor = actor.as_deref().unwrap_or(reviewer);
                self.journal
                    .forge_mut()
                    .edit_as(&issue, actor, &edited)
                    .map_err(|e| fail(e.to_string()))?;
                Ok((format!("@{actor} ticks checklist of @{reviewer}"), "edited".into()))
            }
            Step::Act {
                submission,
                actor,
                action,
            } => {
                let id = self.submission_id(step_no, *submission)?;
                let description = format!("@{actor} {action:?}");
                Ok(match self.journal.apply(id, action.clone(), actor) {
                    Ok(s) => (description, s.state().to_string()),
                    Err(err) => (description, format!("error: {err}")),
                })
            }
            Step::Advance { days } => {
                self.clock.advance(Duration::days(*days));
                Ok((format!("advance {days} days"), "ok".into()))
            }
            Step::Expect {
                submission,
                state,
                article_doi,
            } => {
                let id = self.submission_id(step_no, *submission)?;
                let s = self.journal.submission(id).expect("ids come from the journal");
                let expectation = |message: String| ScenarioError::Expectation { step: step_no, message };
                if s.state() != *state {
                    return Err(expectation(format!("state is {}, expected {state}", s.state())));
                }
                if let Some(doi) = article_doi {
                    let actual = s.article_doi().map(ToString::to_string);
                    if actual.as_deref() != Some(doi.as_str()) {
                        return Err(expectation(format!("article DOI is {actual:?}, expected {doi}")));
                    }
                }
                Ok((format!("expect {state}"), "ok".into()))
            }
        }
    }

    /// Delivers forge events emitted since `from` to the journal and processes them.
    fn deliver(&mut self, mut from: usize) -> Result<usize, JournalError> {
        loop {
            let events: Vec<ForgeEvent> = self.journal.forge().events()[from..].to_vec();
            if events.is_empty() {
                return Ok(from);
            }
            from += events.len();
            let bot = self.journal.config().bot().to_owned();
            for event in events {
                if !event.actor_handle.eq_ignore_ascii_case(&bot) {
                    self.inbound.push(event.clone());
                }
                self.journal.ingest_event(event);
            }
            self.journal.process_pending()?;
        }
    }

    pub fn reviewer_sections(&self, index: usize) -> Vec<String> {
        self.submissions
            .get(index)
            .and_then(|id| self.journal.submission(*id))
            .and_then(|s| s.review_issue())
            .and_then(|issue| self.journal.forge().issue_body(issue))
            .map(|body| split_review_body(&body).into_iter().map(|(h, _)| h).collect())
            .unwrap_or_default()
    }

    /// Final state of every submission, one line each.
    pub fn summary(&self) -> Vec<String> {
        self.submissions
            .iter()
            .filter_map(|id| self.journal.submission(*id))
            .map(|s| {
                let checked: usize = s
                    .checklists()
                    .iter()
                    .map(|c| c.states().values().filter(|v| **v == ItemState::Checked).count())
                    .sum();
                format!(
                    "#{} {} state={} doi={} checked={}",
                    s.sequence_number(),
                    s.title(),
                    s.state(),
                    s.article_doi().map(ToString::to_string).unwrap_or_else(|| "-".into()),
                    checked
                )
            })
            .collect()
    }
}
