//! Manuscript handling from `paper.md` to the published article: parsing,
//! criteria checks, DOI minting, Crossref deposit and HTML rendering.

pub mod crossref;
pub mod doi;
pub mod manuscript;
pub mod render;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crossref::{build_crossref_deposit, is_valid_issn, CC_BY_4_URL, CrossrefDeposit, DepositError, DepositSettings};
pub use doi::{JOURNAL_DOI_PREFIX, mint_article_doi, mint_article_doi_with_prefix, validate_archive_doi, ArchiveDoi, Doi, DoiError};
pub use manuscript::{
    parse_manuscript, serialize_manuscript, validate_manuscript, Affiliation, AuthorEntry,
    BibliographyRef, Manuscript, ManuscriptError, Severity, Violation,
};
pub use render::render_article;

use crate::workflow::Submission;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Manuscript(#[from] ManuscriptError),
    #[error(transparent)]
    Deposit(#[from] DepositError),
    #[error("article pipeline unavailable: {0}")]
    Unavailable(String),
}

/// Everything produced when an article is published.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub doi: Doi,
    pub title: String,
    pub authors: Vec<String>,
    pub archive_doi: ArchiveDoi,
    pub published_on: NaiveDate,
    pub deposit_xml: String,
    pub article_html: String,
}

/// Compiles a parsed manuscript into its deposit record and article document.
pub fn compile(
    manuscript: &Manuscript,
    doi: &Doi,
    archive: &ArchiveDoi,
    published: NaiveDate,
    settings: &DepositSettings,
) -> Result<Publication, PipelineError> {
    let deposit = build_crossref_deposit(manuscript, doi, archive, published, settings)?;
    Ok(Publication {
        doi: doi.clone(),
        title: manuscript.title.clone(),
        authors: manuscript.authors.iter().map(|a| a.name.clone()).collect(),
        archive_doi: archive.clone(),
        published_on: published,
        deposit_xml: deposit.to_xml(),
        article_html: render_article(manuscript, doi, archive),
    })
}

/// The publishing step invoked on acceptance.
pub trait PipelineHandle {
    fn publish(
        &self,
        submission: &Submission,
        doi: &Doi,
        archive: &ArchiveDoi,
        published: NaiveDate,
    ) -> Result<Publication, PipelineError>;

    /// Checks the manuscript behind a submission without publishing anything.
    fn preview(&self, _submission: &Submission) -> Result<Vec<Violation>, PipelineError> {
        Ok(Vec::new())
    }
}

/// Default pipeline. Manuscripts are registered by repository URL; a
/// submission without one is published from a stub built from its form data.
#[derive(Debug, Clone, Default)]
pub struct ArticlePipeline {
    settings: DepositSettings,
    manuscripts: BTreeMap<String, Manuscript>,
}

impl ArticlePipeline {
    pub fn new(settings: DepositSettings) -> Self {
        Self {
            settings,
            manuscripts: BTreeMap::new(),
        }
    }

    pub fn settings(&self) -> &DepositSettings {
        &self.settings
    }

    pub fn register_manuscript(&mut self, repository_url: impl Into<String>, manuscript: Manuscript) {
        self.manuscripts.insert(repository_url.into(), manuscript);
    }

    pub fn manuscript_for(&self, submission: &Submission) -> Manuscript {
        self.manuscripts
            .get(submission.repository_url())
            .cloned()
            .unwrap_or_else(|| stub_manuscript(submission))
    }
}

fn stub_manuscript(s: &Submission) -> Manuscript {
    Manuscript {
        title: s.title().to_owned(),
        authors: vec![AuthorEntry::new(s.submitting_author().name_or_handle())],
        affiliations: Vec::new(),
        date: Some(s.submitted_at().date_naive()),
        tags: Vec::new(),
        body_markdown: format!(
            "Source code: <{}> (version {}).\n",
            s.repository_url(),
            s.software_version()
        ),
        bibliography: Vec::new(),
        bibliography_file: None,
    }
}

impl PipelineHandle for ArticlePipeline {
    fn publish(
        &self,
        submission: &Submission,
        doi: &Doi,
        archive: &ArchiveDoi,
        published: NaiveDate,
    ) -> Result<Publication, PipelineError> {
        compile(&self.manuscript_for(submission), doi, archive, published, &self.settings)
    }

    fn preview(&self, submission: &Submission) -> Result<Vec<Violation>, PipelineError> {
        Ok(validate_manuscript(&self.manuscript_for(submission)))
    }
}
