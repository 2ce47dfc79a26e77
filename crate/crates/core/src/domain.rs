//! Companies, reviews and their classifications.
//!
//! Everything here is validated at construction and immutable afterwards.
//! Parsing functions are the only place where the platform's Portuguese
//! labels ("Elogio", "Reclamação") and date conventions are accepted; the
//! rest of the system speaks [`ReviewClassification::Praise`] and
//! [`ReviewClassification::Complaint`].

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown classification label {0:?}")]
    UnknownLabel(String),
    #[error("invalid review date {0:?}")]
    InvalidDate(String),
    #[error("invalid company slug {0:?}: expected [a-z0-9-]+")]
    InvalidSlug(String),
    #[error("invalid review: {0}")]
    InvalidReview(String),
}

/// URL-safe company identifier, `[a-z0-9-]+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompanySlug(String);

impl CompanySlug {
    pub fn parse(raw: &str) -> Result<Self, DomainError> {
        let ok = !raw.is_empty()
            && raw
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if ok {
            Ok(CompanySlug(raw.to_owned()))
        } else {
            Err(DomainError::InvalidSlug(raw.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompanySlug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CompanySlug {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CompanySlug::parse(s)
    }
}

impl TryFrom<String> for CompanySlug {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CompanySlug::parse(&value)
    }
}

impl From<CompanySlug> for String {
    fn from(slug: CompanySlug) -> String {
        slug.0
    }
}

impl AsRef<str> for CompanySlug {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Company {
    pub slug: CompanySlug,
    pub name: String,
    #[serde(default)]
    pub sector: String,
}

impl Company {
    /// A company known only by its slug; the slug doubles as display name.
    pub fn from_slug(slug: CompanySlug) -> Self {
        Company {
            name: slug.as_str().to_owned(),
            slug,
            sector: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReviewClassification {
    Praise,
    Complaint,
}

impl ReviewClassification {
    pub const ALL: [ReviewClassification; 2] = [
        ReviewClassification::Praise,
        ReviewClassification::Complaint,
    ];

    /// Canonical name used in files and APIs.
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewClassification::Praise => "Praise",
            ReviewClassification::Complaint => "Complaint",
        }
    }

    /// Label as printed by the review platform.
    pub fn platform_label(self) -> &'static str {
        match self {
            ReviewClassification::Praise => "Elogio",
            ReviewClassification::Complaint => "Reclamação",
        }
    }
}

impl fmt::Display for ReviewClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewClassification {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_classification(s)
    }
}

/// Lowercases and strips combining accents ("Reclamação" -> "reclamacao").
pub(crate) fn fold_accents_lower(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Parses a classification label.
///
/// Accepts the platform labels ("Elogio", "Reclamação", also with accents
/// stripped) and the canonical names ("Praise", "Complaint"), ignoring
/// surrounding whitespace and case.
pub fn parse_classification(label: &str) -> Result<ReviewClassification, DomainError> {
    match fold_accents_lower(label.trim()).as_str() {
        "elogio" | "praise" => Ok(ReviewClassification::Praise),
        "reclamacao" | "complaint" => Ok(ReviewClassification::Complaint),
        _ => Err(DomainError::UnknownLabel(label.to_owned())),
    }
}

fn fixed_digits(s: &str) -> Option<u32> {
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

/// Parses `dd/mm/yyyy`, falling back to `yyyy-mm-dd`.
pub fn parse_review_date(text: &str) -> Result<NaiveDate, DomainError> {
    let invalid = || DomainError::InvalidDate(text.to_owned());
    let t = text.trim();
    let (day, month, year) = match t.len() {
        10 if t.as_bytes()[2] == b'/' && t.as_bytes()[5] == b'/' => (&t[0..2], &t[3..5], &t[6..10]),
        10 if t.as_bytes()[4] == b'-' && t.as_bytes()[7] == b'-' => (&t[8..10], &t[5..7], &t[0..4]),
        _ => return Err(invalid()),
    };
    let (Some(d), Some(m), Some(y)) = (fixed_digits(day), fixed_digits(month), fixed_digits(year))
    else {
        return Err(invalid());
    };
    NaiveDate::from_ymd_opt(y as i32, m, d).ok_or_else(invalid)
}

/// Renders a date in the platform's `dd/mm/yyyy` convention.
pub fn format_review_date(date: NaiveDate) -> String {
    date.format("%d/%m/%Y").to_string()
}

/// One consumer comment about a company.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "UncheckedReview")]
pub struct Review {
    company_slug: CompanySlug,
    description: String,
    classification: ReviewClassification,
    posted_date: NaiveDate,
    source_url: String,
    fetched_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct UncheckedReview {
    company_slug: CompanySlug,
    description: String,
    classification: ReviewClassification,
    posted_date: NaiveDate,
    source_url: String,
    fetched_at: DateTime<Utc>,
}

impl TryFrom<UncheckedReview> for Review {
    type Error = DomainError;

    fn try_from(r: UncheckedReview) -> Result<Self, Self::Error> {
        Review::new(
            r.company_slug,
            r.description,
            r.classification,
            r.posted_date,
            r.source_url,
            r.fetched_at,
        )
    }
}

impl Review {
    pub fn new(
        company_slug: CompanySlug,
        description: impl Into<String>,
        classification: ReviewClassification,
        posted_date: NaiveDate,
        source_url: impl Into<String>,
        fetched_at: DateTime<Utc>,
    ) -> Result<Self, DomainError> {
        let description = description.into();
        let source_url = source_url.into();
        if description.trim().is_empty() {
            return Err(DomainError::InvalidReview("empty description".into()));
        }
        if posted_date > fetched_at.date_naive() {
            return Err(DomainError::InvalidReview(format!(
                "posted_date {posted_date} is after fetch date {}",
                fetched_at.date_naive()
            )));
        }
        match Url::parse(&source_url) {
            Ok(u) if u.has_host() => {}
            _ => {
                return Err(DomainError::InvalidReview(format!(
                    "source_url {source_url:?} is not absolute"
                )))
            }
        }
        Ok(Review {
            company_slug,
            description,
            classification,
            posted_date,
            source_url,
            fetched_at,
        })
    }

    pub fn company_slug(&self) -> &CompanySlug {
        &self.company_slug
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn classification(&self) -> ReviewClassification {
        self.classification
    }

    pub fn posted_date(&self) -> NaiveDate {
        self.posted_date
    }

    pub fn source_url(&self) -> &str {
        &self.source_url
    }

    pub fn fetched_at(&self) -> DateTime<Utc> {
        self.fetched_at
    }
}

/// Deduplication identity of a review within its company.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReviewKey {
    pub company_slug: CompanySlug,
    /// Lowercase hex SHA-256 of the normalized triple.
    pub content_digest: String,
}

/// Trim, collapse whitespace runs to a single space, case-fold.
pub fn normalize_description(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn review_key(review: &Review) -> ReviewKey {
    let mut hasher = Sha256::new();
    hasher.update(normalize_description(review.description()).as_bytes());
    hasher.update([0x1f]);
    hasher.update(
        review
            .posted_date()
            .format("%Y-%m-%d")
            .to_string()
            .as_bytes(),
    );
    hasher.update([0x1f]);
    hasher.update(review.classification().as_str().as_bytes());
    ReviewKey {
        company_slug: review.company_slug().clone(),
        content_digest: hex::encode(hasher.finalize()),
    }
}
