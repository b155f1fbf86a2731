use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Crossref prefix registered for journal articles.
pub const JOURNAL_DOI_PREFIX: &str = "10.21105";
const ARTICLE_SUFFIX_STEM: &str = "joss.";
pub const MAX_SEQUENCE: u64 = 99_999;

const RESOLVER_PREFIXES: [&str; 5] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DoiError {
    #[error("invalid DOI {0:?}")]
    InvalidDoi(String),
    #[error("sequence number {0} does not fit the five-digit article suffix")]
    SequenceOverflow(u64),
    #[error("sequence numbers start at 1")]
    ZeroSequence,
}

/// An article DOI split at the first slash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Doi {
    prefix: String,
    suffix: String,
}

impl Doi {
    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    /// Recovers the journal sequence number from a `joss.NNNNN` suffix.
    pub fn article_sequence(&self) -> Option<u64> {
        let digits = self.suffix.strip_prefix(ARTICLE_SUFFIX_STEM)?;
        if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok().filter(|n| *n >= 1)
    }

    pub fn url(&self) -> String {
        format!("https://doi.org/{self}")
    }
}

impl fmt::Display for Doi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.prefix, self.suffix)
    }
}

impl FromStr for Doi {
    type Err = DoiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bare = normalize(s).ok_or_else(|| DoiError::InvalidDoi(s.to_owned()))?;
        let (prefix, suffix) = bare.split_once('/').expect("normalize checked the slash");
        Ok(Doi {
            prefix: prefix.to_owned(),
            suffix: suffix.to_owned(),
        })
    }
}

impl Serialize for Doi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Doi {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub fn mint_article_doi(sequence_number: u64) -> Result<Doi, DoiError> {
    mint_article_doi_with_prefix(JOURNAL_DOI_PREFIX, sequence_number)
}

pub fn mint_article_doi_with_prefix(prefix: &str, sequence_number: u64) -> Result<Doi, DoiError> {
    if sequence_number == 0 {
        return Err(DoiError::ZeroSequence);
    }
    if sequence_number > MAX_SEQUENCE {
        return Err(DoiError::SequenceOverflow(sequence_number));
    }
    Ok(Doi {
        prefix: prefix.to_owned(),
        suffix: format!("{ARTICLE_SUFFIX_STEM}{sequence_number:05}"),
    })
}

/// DOI of a permanent software archive (Zenodo, Figshare, ...), stored in bare form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchiveDoi(String);

impl ArchiveDoi {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn url(&self) -> String {
        format!("https://doi.org/{}", self.0)
    }
}

impl fmt::Display for ArchiveDoi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for ArchiveDoi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ArchiveDoi {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        validate_archive_doi(&text).map_err(serde::de::Error::custom)
    }
}

/// Accepts bare DOIs and resolver URLs, normalizing to the bare form.
pub fn validate_archive_doi(text: &str) -> Result<ArchiveDoi, DoiError> {
    normalize(text)
        .map(ArchiveDoi)
        .ok_or_else(|| DoiError::InvalidDoi(text.to_owned()))
}

fn normalize(text: &str) -> Option<String> {
    let mut bare = text.trim();
    for prefix in RESOLVER_PREFIXES {
        if let Some(rest) = bare.strip_prefix(prefix) {
            bare = rest;
            break;
        }
    }
    let (registrant_part, suffix) = bare.split_once('/')?;
    let registrant = registrant_part.strip_prefix("10.")?;
    let registrant_ok = !registrant.is_empty()
        && registrant
            .split('.')
            .all(|g| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit()));
    let suffix_ok = !suffix.is_empty() && !suffix.chars().any(|c| c.is_whitespace() || c.is_control());
    (registrant_ok && suffix_ok).then(|| bare.to_owned())
}
