//! Deployment configuration: a TOML file plus `OJ_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::article::{is_valid_issn, DepositSettings, CC_BY_4_URL, JOURNAL_DOI_PREFIX};
use crate::person::PersonRef;
use crate::workflow::WorkflowSettings;

pub const ENV_PREFIX: &str = "OJ_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JournalConfig {
    pub journal_title: String,
    pub issn: String,
    pub doi_prefix: String,
    pub bot_handle: String,
    pub magic_word: String,
    pub reviews_repository: String,
    pub license_url: String,
    pub storage_path: PathBuf,
    pub listen_address: String,
    /// Landing page of a published article; `{doi}` is substituted.
    pub article_url_template: String,
    /// First sequence number handed out by a fresh store.
    pub first_sequence_number: u64,
    /// Number of log records between snapshots.
    pub snapshot_every: u32,
    pub people: Vec<PersonRef>,
}

impl Default for JournalConfig {
    fn default() -> Self {
        Self {
            journal_title: "Journal of Open Source Software".into(),
            issn: "2475-9066".into(),
            doi_prefix: JOURNAL_DOI_PREFIX.into(),
            bot_handle: "whedon".into(),
            magic_word: "bananas".into(),
            reviews_repository: "openjournals/joss-reviews".into(),
            license_url: CC_BY_4_URL.into(),
            storage_path: PathBuf::from("data"),
            listen_address: "127.0.0.1:8080".into(),
            article_url_template: "https://joss.theoj.org/papers/{doi}".into(),
            first_sequence_number: 1,
            snapshot_every: 100,
            people: Vec::new(),
        }
    }
}

fn is_doi_prefix(text: &str) -> bool {
    text.strip_prefix("10.")
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

impl JournalConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the file, applies process environment overrides, then validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text)?;
        config.apply_env(std::env::vars())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `OJ_<FIELD>` overrides for the scalar fields.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, value) in vars {
            let Some(field) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match field.to_ascii_lowercase().as_str() {
                "journal_title" => self.journal_title = value,
                "issn" => self.issn = value,
                "doi_prefix" => self.doi_prefix = value,
                "bot_handle" => self.bot_handle = value,
                "magic_word" => self.magic_word = value,
                "reviews_repository" => self.reviews_repository = value,
                "license_url" => self.license_url = value,
                "storage_path" => self.storage_path = PathBuf::from(value),
                "listen_address" => self.listen_address = value,
                "article_url_template" => self.article_url_template = value,
                "first_sequence_number" => {
                    self.first_sequence_number = value.parse().map_err(|_| ConfigError::Invalid {
                        field: "first_sequence_number",
                        message: format!("{value:?} is not a positive integer"),
                    })?
                }
                "snapshot_every" => {
                    self.snapshot_every = value.parse().map_err(|_| ConfigError::Invalid {
                        field: "snapshot_every",
                        message: format!("{value:?} is not a positive integer"),
                    })?
                }
                other => tracing::warn!(variable = %key, field = other, "ignoring unknown override"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: String| Err(ConfigError::Invalid { field, message });
        if !is_doi_prefix(&self.doi_prefix) {
            return invalid("doi_prefix", format!("{:?} does not match 10.<digits>", self.doi_prefix));
        }
        if !is_valid_issn(&self.issn) {
            return invalid("issn", format!("{:?} is not a valid ISSN", self.issn));
        }
        let bot = self.bot_handle.trim_start_matches('@');
        if bot.is_empty() || !bot.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return invalid("bot_handle", format!("{:?} is not a forge handle", self.bot_handle));
        }
        if self.magic_word.is_empty() || self.magic_word.chars().any(char::is_whitespace) {
            return invalid("magic_word", "must be a single non-empty word".into());
        }
        if self.reviews_repository.split('/').filter(|p| !p.is_empty()).count() != 2 {
            return invalid("reviews_repository", format!("{:?} is not owner/name", self.reviews_repository));
        }
        if !self.license_url.starts_with("http://") && !self.license_url.starts_with("https://") {
            return invalid("license_url", format!("{:?} is not a URL", self.license_url));
        }
        if self.first_sequence_number == 0 {
            return invalid("first_sequence_number", "must be at least 1".into());
        }
        if self.snapshot_every == 0 {
            return invalid("snapshot_every", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn bot(&self) -> &str {
        self.bot_handle.trim_start_matches('@')
    }

    pub fn workflow_settings(&self) -> WorkflowSettings {
        WorkflowSettings {
            magic_word: self.magic_word.clone(),
            reviews_repository: self.reviews_repository.clone(),
            doi_prefix: self.doi_prefix.clone(),
        }
    }

    pub fn deposit_settings(&self) -> DepositSettings {
        DepositSettings {
            journal_title: self.journal_title.clone(),
            issn: self.issn.clone(),
            license_url: self.license_url.clone(),
            resource_url_template: self.article_url_template.clone(),
        }
    }
}
