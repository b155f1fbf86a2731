//! Reviewer checklists: the review template, per-reviewer completion state,
//! and the task-list projection stored in the review issue body.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::person::PersonRef;
use crate::workflow::SubmissionId;

/// Note an editor-in-chief receives for software already reviewed by rOpenSci.
pub const FAST_TRACK_SENTENCE: &str = "This submission has been accepted to rOpenSci.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChecklistError {
    #[error("duplicate checklist item id {0:?}")]
    DuplicateItem(String),
    #[error("checklist item {0:?} has an empty prompt")]
    EmptyPrompt(String),
    #[error("unknown checklist item {0:?}")]
    UnknownItem(String),
    #[error("@{actor} may not edit the checklist of @{owner}")]
    Unauthorized { actor: String, owner: String },
    #[error("checklist item {0:?} is missing from the issue body")]
    MissingItem(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItemDef {
    pub id: String,
    pub label: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistCategory {
    pub name: String,
    pub items: Vec<ChecklistItemDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistTemplate {
    version: String,
    categories: Vec<ChecklistCategory>,
}

impl ChecklistTemplate {
    pub fn new(
        version: impl Into<String>,
        categories: Vec<ChecklistCategory>,
    ) -> Result<Self, ChecklistError> {
        let mut seen = HashSet::new();
        for item in categories.iter().flat_map(|c| &c.items) {
            if !seen.insert(item.id.as_str()) {
                return Err(ChecklistError::DuplicateItem(item.id.clone()));
            }
            if item.prompt.trim().is_empty() {
                return Err(ChecklistError::EmptyPrompt(item.id.clone()));
            }
        }
        Ok(Self {
            version: version.into(),
            categories,
        })
    }

    /// The journal's standard reviewer checklist.
    pub fn standard() -> &'static ChecklistTemplate {
        static TEMPLATE: OnceLock<ChecklistTemplate> = OnceLock::new();
        TEMPLATE.get_or_init(|| {
            let category = |name: &str, items: &[(&str, &str, &str)]| ChecklistCategory {
                name: name.to_owned(),
                items: items
                    .iter()
                    .map(|(id, label, prompt)| ChecklistItemDef {
                        id: (*id).to_owned(),
                        label: (*label).to_owned(),
                        prompt: (*prompt).to_owned(),
                    })
                    .collect(),
            };
            let categories = vec![
                category(
                    "Conflict of interest",
                    &[(
                        "conflict-of-interest",
                        "Conflict of interest",
                        "As the reviewer I confirm that I have read the JOSS conflict of interest policy and that there are no conflicts of interest for me to review this work.",
                    )],
                ),
                category(
                    "Code of Conduct",
                    &[(
                        "code-of-conduct",
                        "Code of Conduct",
                        "I confirm that I read and will adhere to the JOSS code of conduct.",
                    )],
                ),
                category(
                    "General checks",
                    &[
                        ("repository", "Repository", "Is the source code for this software available at the repository URL?"),
                        ("license", "License", "Does the repository contain a plain-text LICENSE file with the contents of an OSI-approved software license?"),
                        ("version", "Version", "Does the release version given match the GitHub release?"),
                        ("authorship", "Authorship", "Has the submitting author made major contributions to the software?"),
                    ],
                ),
                category(
                    "Functionality",
                    &[
                        ("installation", "Installation", "Does installation proceed as outlined in the documentation?"),
                        ("functionality", "Functionality", "Have the functional claims of the software been confirmed?"),
                        ("performance", "Performance", "Have any performance claims of the software been confirmed?"),
                    ],
                ),
                category(
                    "Documentation",
                    &[
                        ("statement-of-need", "A statement of need", "Do the authors clearly state what problems the software is designed to solve and who the target audience is?"),
                        ("installation-instructions", "Installation instructions", "Is there a clearly-stated list of dependencies? Ideally these should be handled with an automated package management solution."),
                        ("example-usage", "Example usage", "Do the authors include examples of how to use the software (ideally to solve real-world analysis problems)?"),
                        ("functionality-documentation", "Functionality documentation", "Is the core functionality of the software documented to a satisfactory level (e.g., API method documentation)?"),
                        ("automated-tests", "Automated tests", "Are there automated tests or manual steps described so that the function of the software can be verified?"),
                        ("community-guidelines", "Community guidelines", "Are there clear guidelines for third parties wishing to 1) contribute to the software, 2) report issues or problems with the software, and 3) seek support?"),
                    ],
                ),
                category(
                    "Software paper",
                    &[
                        ("paper-authors", "Authors", "Does the paper.md file include a list of authors with their affiliations?"),
                        ("paper-statement-of-need", "A statement of need", "Do the authors clearly state what problems the software is designed to solve and who the target audience is?"),
                        ("references", "References", "Do all archival references that should have a DOI list one (e.g., papers, datasets, software)?"),
                    ],
                ),
            ];
            ChecklistTemplate::new("1", categories).expect("standard template is valid")
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn categories(&self) -> &[ChecklistCategory] {
        &self.categories
    }

    pub fn items(&self) -> impl Iterator<Item = &ChecklistItemDef> {
        self.categories.iter().flat_map(|c| &c.items)
    }

    pub fn item_count(&self) -> usize {
        self.items().count()
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.items().any(|i| i.id == item_id)
    }

    pub fn instantiate(&self, reviewer: PersonRef, submission_id: SubmissionId) -> ReviewerChecklist {
        ReviewerChecklist {
            reviewer,
            submission_id,
            states: self
                .items()
                .map(|i| (i.id.clone(), ItemState::Unchecked))
                .collect(),
            completed_at: None,
        }
    }

    /// Renders the checklist as a GitHub-style task list, one line per item.
    pub fn render_markdown(&self, checklist: &ReviewerChecklist) -> String {
        let mut out = String::new();
        for (idx, category) in self.categories.iter().enumerate() {
            if idx > 0 {
                out.push('\n');
            }
            out.push_str("### ");
            out.push_str(&category.name);
            out.push_str("\n\n");
            for item in &category.items {
                let mark = match checklist.state(&item.id) {
                    Some(ItemState::Checked) => "x",
                    _ => " ",
                };
                out.push_str(&format!("- [{mark}] **{}**: {}\n", item.label, item.prompt));
            }
        }
        out
    }

    /// Reads checkbox states back from rendered task-list text.
    ///
    /// Items are located by their line text within their category heading, so
    /// identically worded items in different categories stay distinct.
    /// Lines that do not belong to the template are ignored.
    pub fn parse_markdown(&self, text: &str) -> Result<BTreeMap<String, ItemState>, ChecklistError> {
        let mut found: BTreeMap<String, ItemState> = BTreeMap::new();
        let mut category: Option<&ChecklistCategory> = None;
        for line in text.lines() {
            let line = line.trim_end();
            if let Some(heading) = line.strip_prefix("### ") {
                category = self.categories.iter().find(|c| c.name == heading.trim());
                continue;
            }
            let Some(category) = category else { continue };
            let (state, rest) = if let Some(rest) = line.strip_prefix("- [ ] ") {
                (ItemState::Unchecked, rest)
            } else if let Some(rest) = line
                .strip_prefix("- [x] ")
                .or_else(|| line.strip_prefix("- [X] "))
            {
                (ItemState::Checked, rest)
            } else {
                continue;
            };
            if let Some(item) = category
                .items
                .iter()
                .find(|i| rest == format!("**{}**: {}", i.label, i.prompt))
            {
                found.entry(item.id.clone()).or_insert(state);
            }
        }
        for item in self.items() {
            if !found.contains_key(&item.id) {
                return Err(ChecklistError::MissingItem(item.id.clone()));
            }
        }
        Ok(found)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Unchecked,
    Checked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerChecklist {
    pub reviewer: PersonRef,
    pub submission_id: SubmissionId,
    states: BTreeMap<String, ItemState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completed_at: Option<DateTime<Utc>>,
}

impl ReviewerChecklist {
    pub fn state(&self, item_id: &str) -> Option<ItemState> {
        self.states.get(item_id).copied()
    }

    pub fn states(&self) -> &BTreeMap<String, ItemState> {
        &self.states
    }

    pub fn completed_at(&self) -> Option<DateTime<Utc>> {
        self.completed_at
    }

    pub fn is_complete(&self) -> bool {
        self.states.values().all(|s| *s == ItemState::Checked)
    }

    pub fn checked_count(&self) -> usize {
        self.states
            .values()
            .filter(|s| **s == ItemState::Checked)
            .count()
    }

    /// Fraction of items checked, in [0, 1].
    pub fn progress(&self) -> f64 {
        if self.states.is_empty() {
            return 1.0;
        }
        self.checked_count() as f64 / self.states.len() as f64
    }

    pub fn set_item(
        &mut self,
        item_id: &str,
        value: ItemState,
        actor: &PersonRef,
        now: DateTime<Utc>,
    ) -> Result<(), ChecklistError> {
        if !actor.same_handle(&self.reviewer.handle) && !actor.role.is_editorial() {
            return Err(ChecklistError::Unauthorized {
                actor: actor.handle.clone(),
                owner: self.reviewer.handle.clone(),
            });
        }
        let slot = self
            .states
            .get_mut(item_id)
            .ok_or_else(|| ChecklistError::UnknownItem(item_id.to_owned()))?;
        *slot = value;
        self.refresh_completion(now);
        Ok(())
    }

    fn refresh_completion(&mut self, now: DateTime<Utc>) {
        if self.is_complete() {
            self.completed_at.get_or_insert(now);
        } else {
            self.completed_at = None;
        }
    }
}

/// True when the note carries the rOpenSci acceptance sentence verbatim.
pub fn detect_fast_track(note: &str) -> bool {
    note.contains(FAST_TRACK_SENTENCE)
}
