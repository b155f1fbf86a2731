//! Crossref deposit record and its XML serialization.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::doi::{ArchiveDoi, Doi};
use super::manuscript::{validate_manuscript, AuthorEntry, Manuscript, Violation};

pub const CC_BY_4_URL: &str = "https://creativecommons.org/licenses/by/4.0/";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepositError {
    #[error("manuscript has blocking violations: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    BlockingViolation(Vec<Violation>),
    #[error("invalid ISSN {0:?}")]
    InvalidIssn(String),
}

/// `NNNN-NNNC` with a valid mod-11 check character.
pub fn is_valid_issn(issn: &str) -> bool {
    let bytes = issn.as_bytes();
    if bytes.len() != 9 || bytes[4] != b'-' {
        return false;
    }
    let digits: Vec<u8> = bytes[..4].iter().chain(&bytes[5..8]).copied().collect();
    if !digits.iter().all(u8::is_ascii_digit) {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .zip((2..=8).rev())
        .map(|(d, w)| u32::from(d - b'0') * w)
        .sum();
    let check = (11 - sum % 11) % 11;
    let expected = if check == 10 { b'X' } else { b'0' + check as u8 };
    bytes[8] == expected
}

/// Journal-level values every deposit carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositSettings {
    pub journal_title: String,
    pub issn: String,
    pub license_url: String,
    /// `{doi}` is replaced with the article DOI.
    pub resource_url_template: String,
}

impl Default for DepositSettings {
    fn default() -> Self {
        Self {
            journal_title: "Journal of Open Source Software".into(),
            issn: "2475-9066".into(),
            license_url: CC_BY_4_URL.into(),
            resource_url_template: "https://joss.theoj.org/papers/{doi}".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossrefDeposit {
    pub doi: Doi,
    pub journal_title: String,
    pub issn: String,
    pub article_title: String,
    pub contributors: Vec<AuthorEntry>,
    pub publication_date: NaiveDate,
    pub resource_url: String,
    pub archive_doi: ArchiveDoi,
    pub license_url: String,
}

pub fn build_crossref_deposit(
    manuscript: &Manuscript,
    doi: &Doi,
    archive: &ArchiveDoi,
    published: NaiveDate,
    settings: &DepositSettings,
) -> Result<CrossrefDeposit, DepositError> {
    let blocking: Vec<Violation> = validate_manuscript(manuscript)
        .into_iter()
        .filter(Violation::is_blocking)
        .collect();
    if !blocking.is_empty() {
        return Err(DepositError::BlockingViolation(blocking));
    }
    if !is_valid_issn(&settings.issn) {
        return Err(DepositError::InvalidIssn(settings.issn.clone()));
    }
    Ok(CrossrefDeposit {
        doi: doi.clone(),
        journal_title: settings.journal_title.clone(),
        issn: settings.issn.clone(),
        article_title: manuscript.title.clone(),
        contributors: manuscript.authors.clone(),
        publication_date: published,
        resource_url: settings
            .resource_url_template
            .replace("{doi}", &doi.to_string()),
        archive_doi: archive.clone(),
        license_url: settings.license_url.clone(),
    })
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // not representable in XML 1.0
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {}
            c => out.push(c),
        }
    }
    out
}

impl CrossrefDeposit {
    pub fn to_xml(&self) -> String {
        let d = self.publication_date;
        let mut x = String::new();
        x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        x.push_str("<doi_batch version=\"4.4.2\" xmlns=\"http://www.crossref.org/schema/4.4.2\">\n");
        x.push_str("  <head>\n");
        x.push_str(&format!(
            "    <doi_batch_id>{}</doi_batch_id>\n",
            escape(self.doi.suffix())
        ));
        x.push_str(&format!(
            "    <timestamp>{}</timestamp>\n",
            d.format("%Y%m%d000000")
        ));
        x.push_str("  </head>\n");
        x.push_str("  <body>\n    <journal>\n      <journal_metadata>\n");
        x.push_str(&format!(
            "        <journal_title>{}</journal_title>\n",
            escape(&self.journal_title)
        ));
        x.push_str(&format!(
            "        <issn media_type=\"electronic\">{}</issn>\n",
            escape(&self.issn)
        ));
        x.push_str("      </journal_metadata>\n");
        x.push_str("      <journal_article publication_type=\"full_text\">\n");
        x.push_str(&format!(
            "        <article_title>{}</article_title>\n",
            escape(&self.article_title)
        ));
        x.push_str("        <contributors>\n");
        for (i, author) in self.contributors.iter().enumerate() {
            let sequence = if i == 0 { "first" } else { "additional" };
            let (given, surname) = author.name_parts();
            x.push_str(&format!(
                "          <person_name sequence=\"{sequence}\" contributor_role=\"author\">\n"
            ));
            if let Some(given) = given {
                x.push_str(&format!(
                    "            <given_name>{}</given_name>\n",
                    escape(&given)
                ));
            }
            x.push_str(&format!("            <surname>{}</surname>\n", escape(&surname)));
            if let Some(orcid) = &author.orcid {
                x.push_str(&format!(
                    "            <ORCID>https://orcid.org/{}</ORCID>\n",
                    escape(orcid)
                ));
            }
            x.push_str("          </person_name>\n");
        }
        x.push_str("        </contributors>\n");
        x.push_str("        <publication_date media_type=\"online\">\n");
        x.push_str(&format!("          <month>{:02}</month>\n", d.month()));
        x.push_str(&format!("          <day>{:02}</day>\n", d.day()));
        x.push_str(&format!("          <year>{}</year>\n", d.year()));
        x.push_str("        </publication_date>\n");
        x.push_str(&format!(
            "        <license_ref>{}</license_ref>\n",
            escape(&self.license_url)
        ));
        x.push_str(&format!(
            "        <archive_doi>{}</archive_doi>\n",
            escape(self.archive_doi.as_str())
        ));
        x.push_str("        <doi_data>\n");
        x.push_str(&format!("          <doi>{}</doi>\n", escape(&self.doi.to_string())));
        x.push_str(&format!(
            "          <resource>{}</resource>\n",
            escape(&self.resource_url)
        ));
        x.push_str("        </doi_data>\n");
        x.push_str("      </journal_article>\n    </journal>\n  </body>\n</doi_batch>\n");
        x
    }
}
