//! `paper.md` parsing: a `---`-delimited YAML metadata block followed by the
//! Markdown body.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManuscriptError {
    #[error("manuscript has no leading `---` metadata block")]
    NoMetadataBlock,
    #[error("metadata syntax error at line {line}, column {column}: {message}")]
    MetadataSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid manuscript: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorEntry {
    pub name: String,
    pub orcid: Option<String>,
    pub affiliation_indices: Vec<u32>,
    /// Explicit name parts; when absent the name is split on its last space.
    pub given_name: Option<String>,
    pub surname: Option<String>,
}

impl AuthorEntry {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            orcid: None,
            affiliation_indices: Vec::new(),
            given_name: None,
            surname: None,
        }
    }

    /// `(given, surname)`. Mononyms yield no given name.
    pub fn name_parts(&self) -> (Option<String>, String) {
        if let Some(surname) = &self.surname {
            return (self.given_name.clone(), surname.clone());
        }
        let name = self.name.trim();
        match name.rsplit_once(char::is_whitespace) {
            Some((given, surname)) => {
                let given = self.given_name.clone().unwrap_or_else(|| given.trim_end().to_owned());
                (Some(given), surname.to_owned())
            }
            None => (self.given_name.clone(), name.to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affiliation {
    pub index: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibliographyRef {
    pub key: String,
    pub title: Option<String>,
    pub doi: Option<String>,
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manuscript {
    pub title: String,
    pub authors: Vec<AuthorEntry>,
    pub affiliations: Vec<Affiliation>,
    pub date: Option<NaiveDate>,
    pub tags: Vec<String>,
    pub body_markdown: String,
    pub bibliography: Vec<BibliographyRef>,
    /// Sidecar bibliography file named in the metadata instead of inline entries.
    pub bibliography_file: Option<String>,
}

impl Manuscript {
    pub fn affiliation(&self, index: u32) -> Option<&Affiliation> {
        self.affiliations.iter().find(|a| a.index == index)
    }

    fn check_invariants(&self) -> Result<(), ManuscriptError> {
        let fail = |msg: String| Err(ManuscriptError::InvariantViolation(msg));
        if self.title.trim().is_empty() {
            return fail("title is empty".into());
        }
        if self.authors.is_empty() {
            return fail("at least one author is required".into());
        }
        let mut indices = BTreeSet::new();
        for aff in &self.affiliations {
            if aff.index == 0 {
                return fail(format!("affiliation {:?} has index 0", aff.name));
            }
            if !indices.insert(aff.index) {
                return fail(format!("affiliation index {} is used twice", aff.index));
            }
        }
        for author in &self.authors {
            if author.name.trim().is_empty() {
                return fail("author with empty name".into());
            }
            if let Some(orcid) = &author.orcid {
                if !is_orcid(orcid) {
                    return fail(format!("author {:?} has malformed ORCID {orcid:?}", author.name));
                }
            }
            for idx in &author.affiliation_indices {
                if !indices.contains(idx) {
                    return fail(format!(
                        "author {:?} references affiliation {idx}, but only {} affiliation(s) are listed",
                        author.name,
                        self.affiliations.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `NNNN-NNNN-NNNN-NNNC` where C is a digit or `X`.
pub fn is_orcid(text: &str) -> bool {
    let bytes = text.as_bytes();
    bytes.len() == 19
        && bytes.iter().enumerate().all(|(i, b)| match i {
            4 | 9 | 14 => *b == b'-',
            18 => b.is_ascii_digit() || *b == b'X',
            _ => b.is_ascii_digit(),
        })
}

// On-disk metadata schema.

#[derive(Debug, Serialize, Deserialize)]
struct RawMetadata {
    #[serde(default)]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tags: Vec<String>,
    #[serde(default)]
    authors: Vec<RawAuthor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    affiliations: Vec<RawAffiliation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bibliography: Option<RawBibliography>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAuthor {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orcid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affiliation: Option<RawAffiliationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    given_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surname: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawAffiliationRef {
    One(u32),
    Many(Vec<u32>),
    /// Comma-separated, e.g. `"1, 2"`.
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAffiliation {
    name: String,
    index: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawBibliography {
    File(String),
    Entries(Vec<RawReference>),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawReference {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url: Option<String>,
}

const DATE_FORMATS: [&str; 3] = ["%Y-%m-%d", "%d %B %Y", "%B %d, %Y"];

fn parse_date(text: &str) -> Option<NaiveDate> {
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(text.trim(), fmt).ok())
}

/// Splits the metadata block from the body. Returns `(yaml, first_yaml_line, body)`,
/// with `first_yaml_line` 1-based.
fn split_front_matter(text: &str) -> Result<(&str, usize, &str), ManuscriptError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut offset = 0;
    let mut line_no = 0;
    let mut opened_at = None;
    let mut yaml_start = 0;
    for line in text.split_inclusive('\n') {
        line_no += 1;
        let trimmed = line.trim_end();
        match opened_at {
            None => {
                if trimmed.is_empty() {
                    offset += line.len();
                    continue;
                }
                if trimmed != "---" {
                    return Err(ManuscriptError::NoMetadataBlock);
                }
                opened_at = Some(line_no);
                yaml_start = offset + line.len();
            }
            Some(open_line) => {
                if trimmed == "---" || trimmed == "..." {
                    let yaml = &text[yaml_start..offset];
                    let body = &text[offset + line.len()..];
                    return Ok((yaml, open_line + 1, body));
                }
            }
        }
        offset += line.len();
    }
    match opened_at {
        None => Err(ManuscriptError::NoMetadataBlock),
        Some(line) => Err(ManuscriptError::MetadataSyntax {
            line,
            column: 1,
            message: "metadata block is not closed by a `---` line".into(),
        }),
    }
}

pub fn parse_manuscript(text: &str) -> Result<Manuscript, ManuscriptError> {
    let (yaml, first_line, body) = split_front_matter(text)?;
    let raw: RawMetadata = if yaml.trim().is_empty() {
        return Err(ManuscriptError::InvariantViolation(
            "metadata block is empty".into(),
        ));
    } else {
        serde_yaml::from_str(yaml).map_err(|err| {
            let (line, column) = err
                .location()
                .map(|l| (l.line() + first_line - 1, l.column()))
                .unwrap_or((first_line, 1));
            ManuscriptError::MetadataSyntax {
                line,
                column,
                message: err.to_string(),
            }
        })?
    };

    let date = match raw.date {
        None => None,
        Some(text) => Some(parse_date(&text).ok_or_else(|| {
            ManuscriptError::InvariantViolation(format!("unrecognized date {text:?}"))
        })?),
    };

    let mut authors = Vec::with_capacity(raw.authors.len());
    for a in raw.authors {
        let affiliation_indices = match a.affiliation {
            None => Vec::new(),
            Some(RawAffiliationRef::One(i)) => vec![i],
            Some(RawAffiliationRef::Many(v)) => v,
            Some(RawAffiliationRef::Text(s)) => s
                .split(',')
                .map(|p| {
                    p.trim().parse::<u32>().map_err(|_| {
                        ManuscriptError::InvariantViolation(format!(
                            "author {:?} has non-numeric affiliation {s:?}",
                            a.name
                        ))
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        authors.push(AuthorEntry {
            name: a.name,
            orcid: a.orcid,
            affiliation_indices,
            given_name: a.given_name,
            surname: a.surname,
        });
    }

    let (bibliography, bibliography_file) = match raw.bibliography {
        None => (Vec::new(), None),
        Some(RawBibliography::File(f)) => (Vec::new(), Some(f)),
        Some(RawBibliography::Entries(entries)) => (
            entries
                .into_iter()
                .map(|r| BibliographyRef {
                    key: r.key,
                    title: r.title,
                    doi: r.doi,
                    url: r.url,
                })
                .collect(),
            None,
        ),
    };

    let manuscript = Manuscript {
        title: raw.title.unwrap_or_default(),
        authors,
        affiliations: raw
            .affiliations
            .into_iter()
            .map(|a| Affiliation {
                index: a.index,
                name: a.name,
            })
            .collect(),
        date,
        tags: raw.tags,
        body_markdown: body.to_owned(),
        bibliography,
        bibliography_file,
    };
    manuscript.check_invariants()?;
    Ok(manuscript)
}

/// Writes a manuscript back to `paper.md` form.
pub fn serialize_manuscript(m: &Manuscript) -> String {
    let bibliography = if let Some(file) = &m.bibliography_file {
        Some(RawBibliography::File(file.clone()))
    } else if m.bibliography.is_empty() {
        None
    } else {
        Some(RawBibliography::Entries(
            m.bibliography
                .iter()
                .map(|r| RawReference {
                    key: r.key.clone(),
                    title: r.title.clone(),
                    doi: r.doi.clone(),
                    url: r.url.clone(),
                })
                .collect(),
        ))
    };
    let raw = RawMetadata {
        title: Some(m.title.clone()),
        tags: m.tags.clone(),
        authors: m
            .authors
            .iter()
            .map(|a| RawAuthor {
                name: a.name.clone(),
                orcid: a.orcid.clone(),
                affiliation: match a.affiliation_indices.as_slice() {
                    [] => None,
                    [one] => Some(RawAffiliationRef::One(*one)),
                    many => Some(RawAffiliationRef::Many(many.to_vec())),
                },
                given_name: a.given_name.clone(),
                surname: a.surname.clone(),
            })
            .collect(),
        affiliations: m
            .affiliations
            .iter()
            .map(|a| RawAffiliation {
                name: a.name.clone(),
                index: a.index,
            })
            .collect(),
        date: m.date.map(|d| d.format("%Y-%m-%d").to_string()),
        bibliography,
    };
    let yaml = serde_yaml::to_string(&raw).expect("metadata serializes");
    format!("---\n{yaml}---\n{}", m.body_markdown)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Blocking,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingTitle,
    MissingAuthors,
    MissingDate,
    EmptyBody,
    MissingTags,
    ReferenceMissingDoi { key: String },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::MissingTitle
            | Violation::MissingAuthors
            | Violation::MissingDate
            | Violation::EmptyBody => Severity::Blocking,
            Violation::MissingTags | Violation::ReferenceMissingDoi { .. } => Severity::Warning,
        }
    }

    pub fn is_blocking(&self) -> bool {
        self.severity() == Severity::Blocking
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::MissingTitle => f.write_str("title is missing"),
            Violation::MissingAuthors => f.write_str("no authors are listed"),
            Violation::MissingDate => f.write_str("date is missing"),
            Violation::EmptyBody => f.write_str("article body is empty"),
            Violation::MissingTags => f.write_str("no tags are listed"),
            Violation::ReferenceMissingDoi { key } => write!(f, "reference {key:?} has no DOI"),
        }
    }
}

/// Machine-checkable submission criteria. Judgement calls (quality of the
/// statement of need, completeness) are left to the reviewer checklist.
pub fn validate_manuscript(m: &Manuscript) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.title.trim().is_empty() {
        out.push(Violation::MissingTitle);
    }
    if m.authors.is_empty() {
        out.push(Violation::MissingAuthors);
    }
    if m.date.is_none() {
        out.push(Violation::MissingDate);
    }
    if m.body_markdown.trim().is_empty() {
        out.push(Violation::EmptyBody);
    }
    if m.tags.is_empty() {
        out.push(Violation::MissingTags);
    }
    for r in &m.bibliography {
        if r.doi.as_deref().is_none_or(|d| d.trim().is_empty()) {
            out.push(Violation::ReferenceMissingDoi { key: r.key.clone() });
        }
    }
    out
}
