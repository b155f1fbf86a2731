//! Operating-cost model and editorial statistics over review records.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use chrono::{DateTime, NaiveDate};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("empty input: no records to summarize")]
    EmptyInput,
    #[error("articles per year must be at least 1")]
    ZeroArticles,
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Fees in cents so that the model stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParameters {
    pub membership_fee_cents: u64,
    pub per_article_doi_fee_cents: u64,
    pub hosting_monthly_cents: u64,
}

impl CostParameters {
    pub fn from_dollars(membership: u64, per_article_doi: u64, hosting_monthly: u64) -> Self {
        Self {
            membership_fee_cents: membership * 100,
            per_article_doi_fee_cents: per_article_doi * 100,
            hosting_monthly_cents: hosting_monthly * 100,
        }
    }
}

impl Default for CostParameters {
    /// Crossref membership, Crossref article DOI and web hosting fees.
    fn default() -> Self {
        Self::from_dollars(275, 1, 19)
    }
}

/// Per-article cost: an exact number of cents, displayed truncated to whole cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cost(Ratio<u64>);

impl Cost {
    pub fn exact_cents(&self) -> Ratio<u64> {
        self.0
    }

    /// Whole cents, dropping any fraction of a cent.
    pub fn cents(&self) -> u64 {
        self.0.to_integer()
    }

    pub fn dollars(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64 / 100.0
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        write!(f, "{}.{:02}", c / 100, c % 100)
    }
}

impl Serialize for Cost {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let (whole, frac) = text
            .split_once('.')
            .ok_or_else(|| serde::de::Error::custom("expected dollars.cents"))?;
        if frac.len() != 2 {
            return Err(serde::de::Error::custom("expected two decimal places"));
        }
        let whole: u64 = whole.parse().map_err(serde::de::Error::custom)?;
        let frac: u64 = frac.parse().map_err(serde::de::Error::custom)?;
        Ok(Cost(Ratio::from_integer(whole * 100 + frac)))
    }
}

pub fn per_article_cost(p: &CostParameters, articles_per_year: u64) -> Result<Cost, AnalyticsError> {
    if articles_per_year == 0 {
        return Err(AnalyticsError::ZeroArticles);
    }
    let total = p.membership_fee_cents
        + p.per_article_doi_fee_cents * articles_per_year
        + p.hosting_monthly_cents * 12;
    Ok(Cost(Ratio::new(total, articles_per_year)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub submission_id: String,
    pub submitted_at: NaiveDate,
    pub published_at: NaiveDate,
    pub reviewer_count: u32,
    pub reviewers_contacted: u32,
    pub editor_handle: String,
    pub languages: Vec<String>,
    pub author_countries: Vec<String>,
}

impl ReviewRecord {
    /// Whole calendar days from submission to publication.
    pub fn days_to_publication(&self) -> i64 {
        (self.published_at - self.submitted_at).num_days()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.published_at < self.submitted_at {
            return Err(format!("{}: published before it was submitted", self.submission_id));
        }
        if self.reviewer_count == 0 {
            return Err(format!("{}: published without a reviewer", self.submission_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub interquartile_range: f64,
    pub std_dev: f64,
    pub minimum: f64,
    pub maximum: f64,
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<StatsSummary, AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let variance = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(StatsSummary {
        count: n,
        mean,
        median,
        interquartile_range: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        std_dev: variance.sqrt(),
        minimum: sorted[0],
        maximum: sorted[n - 1],
    })
}

pub fn time_to_publication_stats(records: &[ReviewRecord]) -> Result<StatsSummary, AnalyticsError> {
    let days: Vec<f64> = records.iter().map(|r| r.days_to_publication() as f64).collect();
    summarize(&days)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewerStats {
    pub mean_reviewers: f64,
    pub sd_reviewers: f64,
    pub mean_contacted: f64,
    pub sd_contacted: f64,
    /// Ratio of the two means.
    pub contacts_per_review: f64,
}

pub fn reviewer_stats(records: &[ReviewRecord]) -> Result<ReviewerStats, AnalyticsError> {
    let reviewers: Vec<f64> = records.iter().map(|r| f64::from(r.reviewer_count)).collect();
    let contacted: Vec<f64> = records.iter().map(|r| f64::from(r.reviewers_contacted)).collect();
    let r = summarize(&reviewers)?;
    let c = summarize(&contacted)?;
    Ok(ReviewerStats {
        mean_reviewers: r.mean,
        sd_reviewers: r.std_dev,
        mean_contacted: c.mean,
        sd_contacted: c.std_dev,
        contacts_per_review: if r.mean > 0.0 { c.mean / r.mean } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Languages,
    AuthorCountries,
    EditorHandle,
}

pub const UNKNOWN: &str = "unknown";

/// Occurrence counts, largest first, ties in lexicographic order. Records with
/// no country or editor are counted under `unknown`.
pub fn frequency_counts(records: &[ReviewRecord], field: Field) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let values: Vec<&str> = match field {
            Field::Languages => r.languages.iter().map(String::as_str).collect(),
            Field::AuthorCountries if r.author_countries.is_empty() => vec![UNKNOWN],
            Field::AuthorCountries => r.author_countries.iter().map(String::as_str).collect(),
            Field::EditorHandle if r.editor_handle.trim().is_empty() => vec![UNKNOWN],
            Field::EditorHandle => vec![r.editor_handle.as_str()],
        };
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    // BTreeMap order is lexicographic and the sort is stable
    out.sort_by_key(|e| std::cmp::Reverse(e.1));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub articles_per_year: u64,
    pub per_article: Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub record_count: usize,
    pub cost_parameters: CostParameters,
    pub cost: Vec<CostRow>,
    pub time_to_publication: StatsSummary,
    pub reviewers: ReviewerStats,
    pub languages: Vec<(String, usize)>,
    pub author_countries: Vec<(String, usize)>,
    pub editors: Vec<(String, usize)>,
    /// Publications per `YYYY-MM`.
    pub monthly_publications: BTreeMap<String, usize>,
}

/// Publication volumes the cost table is always evaluated at.
pub const COST_SCENARIOS: [u64; 3] = [50, 100, 200];

pub fn export_report(records: &[ReviewRecord], params: &CostParameters) -> Report {
    let mut volumes: Vec<u64> = COST_SCENARIOS.to_vec();
    if !records.is_empty() && !volumes.contains(&(records.len() as u64)) {
        volumes.push(records.len() as u64);
        volumes.sort_unstable();
    }
    let cost = volumes
        .into_iter()
        .filter_map(|n| {
            per_article_cost(params, n).ok().map(|per_article| CostRow {
                articles_per_year: n,
                per_article,
            })
        })
        .collect();
    let mut monthly: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *monthly.entry(r.published_at.format("%Y-%m").to_string()).or_default() += 1;
    }
    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        record_count: records.len(),
        cost_parameters: *params,
        cost,
        time_to_publication: time_to_publication_stats(records).unwrap_or_default(),
        reviewers: reviewer_stats(records).unwrap_or_default(),
        languages: frequency_counts(records, Field::Languages),
        author_countries: frequency_counts(records, Field::AuthorCountries),
        editors: frequency_counts(records, Field::EditorHandle),
        monthly_publications: monthly,
    }
}

pub const CSV_HEADER: &str =
    "submission_id,submitted_at,published_at,reviewer_count,reviewers_contacted,editor_handle,languages,author_countries";

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    submission_id: String,
    submitted_at: String,
    published_at: String,
    reviewer_count: u32,
    reviewers_contacted: u32,
    editor_handle: String,
    languages: String,
    author_countries: String,
}

fn parse_date(text: &str) -> Result<NaiveDate, String> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .or_else(|_| DateTime::parse_from_rfc3339(text).map(|d| d.date_naive()))
        .map_err(|_| format!("{text:?} is not an ISO-8601 date"))
}

fn split_multi(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ReviewRecord>, AnalyticsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| AnalyticsError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let fail = |message: String| AnalyticsError::Csv { line, message };
        let record = ReviewRecord {
            submitted_at: parse_date(&row.submitted_at).map_err(fail)?,
            published_at: parse_date(&row.published_at).map_err(fail)?,
            submission_id: row.submission_id,
            reviewer_count: row.reviewer_count,
            reviewers_contacted: row.reviewers_contacted,
            editor_handle: row.editor_handle.trim_start_matches('@').to_owned(),
            languages: split_multi(&row.languages),
            author_countries: split_multi(&row.author_countries),
        };
        record.check().map_err(fail)?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records_csv(records: &[ReviewRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer
            .serialize(CsvRow {
                submission_id: r.submission_id.clone(),
                submitted_at: r.submitted_at.to_string(),
                published_at: r.published_at.to_string(),
                reviewer_count: r.reviewer_count,
                reviewers_contacted: r.reviewers_contacted,
                editor_handle: r.editor_handle.clone(),
                languages: r.languages.join(";"),
                author_countries: r.author_countries.join(";"),
            })
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}
