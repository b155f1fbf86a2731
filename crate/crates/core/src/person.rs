use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Author,
    Reviewer,
    Editor,
    EditorInChief,
    Admin,
}

impl Role {
    /// Roles allowed to drive editorial actions (assignments, archive, review start).
    pub fn is_editorial(self) -> bool {
        matches!(self, Role::Editor | Role::EditorInChief | Role::Admin)
    }

    /// Roles allowed to accept and publish.
    pub fn can_publish(self) -> bool {
        matches!(self, Role::EditorInChief | Role::Admin)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Author => "author",
            Role::Reviewer => "reviewer",
            Role::Editor => "editor",
            Role::EditorInChief => "editor-in-chief",
            Role::Admin => "admin",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersonError {
    #[error("invalid handle {0:?}: must be non-empty and contain no whitespace")]
    InvalidHandle(String),
    #[error("handle @{0} is already registered")]
    DuplicateHandle(String),
}

/// A forge user together with the role they hold in the journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRef {
    pub handle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    pub role: Role,
}

impl PersonRef {
    pub fn new(handle: impl Into<String>, role: Role) -> Result<Self, PersonError> {
        let handle = handle.into();
        let handle = handle.strip_prefix('@').map(str::to_owned).unwrap_or(handle);
        if handle.is_empty() || handle.chars().any(char::is_whitespace) {
            return Err(PersonError::InvalidHandle(handle));
        }
        Ok(Self {
            handle,
            display_name: None,
            role,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = Some(name.into());
        self
    }

    /// Forge handles compare case-insensitively.
    pub fn same_handle(&self, handle: &str) -> bool {
        self.handle.eq_ignore_ascii_case(handle.trim_start_matches('@'))
    }

    pub fn name_or_handle(&self) -> &str {
        self.display_name.as_deref().unwrap_or(&self.handle)
    }
}

/// Deployment-wide directory of people keyed by case-folded handle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRegistry {
    people: BTreeMap<String, PersonRef>,
}

impl PersonRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, person: PersonRef) -> Result<(), PersonError> {
        let key = person.handle.to_ascii_lowercase();
        if self.people.contains_key(&key) {
            return Err(PersonError::DuplicateHandle(person.handle));
        }
        self.people.insert(key, person);
        Ok(())
    }

    /// Inserts or replaces the entry for the person's handle.
    pub fn upsert(&mut self, person: PersonRef) {
        self.people.insert(person.handle.to_ascii_lowercase(), person);
    }

    pub fn get(&self, handle: &str) -> Option<&PersonRef> {
        self.people
            .get(&handle.trim_start_matches('@').to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.people.len()
    }

    pub fn is_empty(&self) -> bool {
        self.people.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonRef> {
        self.people.values()
    }
}
