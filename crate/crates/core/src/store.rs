//! Append-only review persistence with content-hash deduplication.
//!
//! Layout under the store root:
//!
//! ```text
//! <root>/<slug>/company.json
//! <root>/<slug>/reviews.log              one JSON record per line
//! <root>/<slug>/reports/<timestamp>.report
//! ```
//!
//! The key index lives in memory and is rebuilt from `reviews.log` on open.
//! Every record is written with a single `write` call ending in `\n`; a
//! trailing line without its newline is an interrupted write and is cut off
//! when the log is reopened.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{review_key, Company, CompanySlug, DomainError, Review, ReviewClassification};
use crate::topics::TopicReport;

pub const MAX_PAGE_LIMIT: usize = 1000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt record at {path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown company {0:?}")]
    UnknownCompany(String),
    #[error("no report stored for company {0:?}")]
    NoReport(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid paging: {0}")]
    InvalidPaging(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A review as written to `reviews.log` and structured exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub description: String,
    pub classification: ReviewClassification,
    pub posted_date: NaiveDate,
    pub source_url: String,
    pub fetched_at: DateTime<Utc>,
}

impl From<&Review> for ReviewRecord {
    fn from(r: &Review) -> Self {
        ReviewRecord {
            description: r.description().to_owned(),
            classification: r.classification(),
            posted_date: r.posted_date(),
            source_url: r.source_url().to_owned(),
            fetched_at: r.fetched_at(),
        }
    }
}

impl ReviewRecord {
    pub fn into_review(self, slug: CompanySlug) -> Result<Review, DomainError> {
        Review::new(
            slug,
            self.description,
            self.classification,
            self.posted_date,
            self.source_url,
            self.fetched_at,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AppendResult {
    pub inserted: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassificationCounts {
    pub praise: usize,
    pub complaint: usize,
}

impl ClassificationCounts {
    pub fn total(&self) -> usize {
        self.praise + self.complaint
    }
}

/// Optional restrictions for [`ReviewStore::list_reviews`]; date bounds are
/// inclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReviewFilter {
    pub classification: Option<ReviewClassification>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl ReviewFilter {
    fn accepts(&self, r: &Review) -> bool {
        self.classification.is_none_or(|c| c == r.classification())
            && self.from.is_none_or(|d| r.posted_date() >= d)
            && self.to.is_none_or(|d| r.posted_date() <= d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewPage {
    pub items: Vec<Review>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub topics: usize,
    pub words_per_topic: usize,
    pub min_prob: f64,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub min_count: u64,
    pub min_token_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub company_slug: CompanySlug,
    pub created_at: DateTime<Utc>,
    pub parameters: ReportParameters,
    pub report: TopicReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// CSV with header `description,classification,posted_date`.
    DelimitedTable,
    /// One [`ReviewRecord`] JSON object per line.
    StructuredRecords,
}

struct StoredReview {
    review: Review,
    digest: String,
}

struct CompanyData {
    company: Company,
    reviews: Vec<StoredReview>,
    keys: HashSet<String>,
    log: File,
}

struct CompanyLog {
    dir: PathBuf,
    data: RwLock<CompanyData>,
}

/// Per-company review logs plus their in-memory key indexes.
///
/// Writers to one company serialize on that company's lock; readers share
/// it. Different companies never contend.
pub struct ReviewStore {
    root: PathBuf,
    companies: RwLock<HashMap<CompanySlug, Arc<CompanyLog>>>,
}

impl std::fmt::Debug for ReviewStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewStore")
            .field("root", &self.root)
            .finish()
    }
}

impl ReviewStore {
    /// Opens (creating if needed) the store at `root` and replays every log.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut companies = HashMap::new();
        for entry in fs::read_dir(&root).map_err(io_err(&root))? {
            let entry = entry.map_err(io_err(&root))?;
            if !entry.file_type().map_err(io_err(&root))?.is_dir() {
                continue;
            }
            let Some(slug) = entry
                .file_name()
                .to_str()
                .and_then(|s| CompanySlug::parse(s).ok())
            else {
                continue;
            };
            let log = CompanyLog::load(entry.path(), slug.clone())?;
            companies.insert(slug, Arc::new(log));
        }
        Ok(ReviewStore {
            root,
            companies: RwLock::new(companies),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn company(&self, slug: &CompanySlug) -> Result<Arc<CompanyLog>, StoreError> {
        self.companies
            .read()
            .unwrap()
            .get(slug)
            .cloned()
            .ok_or_else(|| StoreError::UnknownCompany(slug.to_string()))
    }

    /// Registers a company; an existing registration keeps its metadata.
    pub fn ensure_company(&self, company: &Company) -> Result<(), StoreError> {
        let mut map = self.companies.write().unwrap();
        if map.contains_key(&company.slug) {
            return Ok(());
        }
        let dir = self.root.join(company.slug.as_str());
        fs::create_dir_all(dir.join("reports")).map_err(io_err(&dir))?;
        let meta = dir.join("company.json");
        let json = serde_json::to_string_pretty(company).expect("company serializes");
        fs::write(&meta, json).map_err(io_err(&meta))?;
        let log = CompanyLog::load(dir, company.slug.clone())?;
        map.insert(company.slug.clone(), Arc::new(log));
        Ok(())
    }

    pub fn has_company(&self, slug: &CompanySlug) -> bool {
        self.companies.read().unwrap().contains_key(slug)
    }

    /// Registered companies ordered by slug.
    pub fn companies(&self) -> Vec<Company> {
        let logs: Vec<Arc<CompanyLog>> = self.companies.read().unwrap().values().cloned().collect();
        let mut out: Vec<Company> = logs
            .iter()
            .map(|l| l.data.read().unwrap().company.clone())
            .collect();
        out.sort_by(|a, b| a.slug.cmp(&b.slug));
        out
    }

    /// Appends a batch, skipping reviews whose key is already stored.
    /// Registers the company on first use.
    pub fn append_reviews(
        &self,
        slug: &CompanySlug,
        batch: &[Review],
    ) -> Result<AppendResult, StoreError> {
        if let Some(r) = batch.iter().find(|r| r.company_slug() != slug) {
            return Err(StoreError::InvalidRecord(format!(
                "review for {:?} appended to {:?}",
                r.company_slug().as_str(),
                slug.as_str()
            )));
        }
        if !self.has_company(slug) {
            self.ensure_company(&Company::from_slug(slug.clone()))?;
        }
        let log = self.company(slug)?;
        let mut data = log.data.write().unwrap();
        let path = log.dir.join("reviews.log");
        let mut result = AppendResult::default();
        for review in batch {
            let digest = review_key(review).content_digest;
            if data.keys.contains(&digest) {
                result.duplicates += 1;
                continue;
            }
            let mut line = serde_json::to_string(&ReviewRecord::from(review))
                .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
            line.push('\n');
            data.log.write_all(line.as_bytes()).map_err(io_err(&path))?;
            data.keys.insert(digest.clone());
            data.reviews.push(StoredReview {
                review: review.clone(),
                digest,
            });
            result.inserted += 1;
        }
        data.log.flush().map_err(io_err(&path))?;
        Ok(result)
    }

    /// Reviews matching `filter`, newest first (content digest breaks ties).
    pub fn list_reviews(
        &self,
        slug: &CompanySlug,
        filter: &ReviewFilter,
        offset: usize,
        limit: usize,
    ) -> Result<ReviewPage, StoreError> {
        if !(1..=MAX_PAGE_LIMIT).contains(&limit) {
            return Err(StoreError::InvalidPaging(format!(
                "limit must be in [1, {MAX_PAGE_LIMIT}], got {limit}"
            )));
        }
        let log = self.company(slug)?;
        let data = log.data.read().unwrap();
        let matching = sorted_refs(&data.reviews, filter);
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip(offset)
            .take(limit)
            .map(|s| s.review.clone())
            .collect();
        Ok(ReviewPage {
            items,
            total,
            offset,
            limit,
        })
    }

    /// Every stored review of the company, in listing order.
    pub fn all_reviews(&self, slug: &CompanySlug) -> Result<Vec<Review>, StoreError> {
        let log = self.company(slug)?;
        let data = log.data.read().unwrap();
        Ok(sorted_refs(&data.reviews, &ReviewFilter::default())
            .into_iter()
            .map(|s| s.review.clone())
            .collect())
    }

    pub fn classification_counts(
        &self,
        slug: &CompanySlug,
    ) -> Result<ClassificationCounts, StoreError> {
        let log = self.company(slug)?;
        let data = log.data.read().unwrap();
        let mut counts = ClassificationCounts::default();
        for s in &data.reviews {
            match s.review.classification() {
                ReviewClassification::Praise => counts.praise += 1,
                ReviewClassification::Complaint => counts.complaint += 1,
            }
        }
        Ok(counts)
    }

    /// Persists a report under a new timestamped file and returns its id.
    pub fn save_report(&self, report: &StoredReport) -> Result<String, StoreError> {
        let log = self.company(&report.company_slug)?;
        // Hold the company's write lock so ids stay ordered.
        let _guard = log.data.write().unwrap();
        let dir = log.dir.join("reports");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let stamp = report.created_at.format("%Y%m%dT%H%M%S%.9fZ").to_string();
        let latest = report_ids(&dir)?.pop();
        let mut id = stamp.clone();
        let mut n = 1;
        while latest.as_ref().is_some_and(|l| &id <= l) {
            // Clock did not advance past the newest report.
            id = format!("{}-{n}", latest.as_ref().unwrap());
            n += 1;
        }
        let path = dir.join(format!("{id}.report"));
        let tmp = dir.join(format!("{id}.report.tmp"));
        let json = serde_json::to_vec_pretty(report).expect("report serializes");
        fs::write(&tmp, json).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(id)
    }

    pub fn load_latest_report(&self, slug: &CompanySlug) -> Result<StoredReport, StoreError> {
        let log = self.company(slug)?;
        let _guard = log.data.read().unwrap();
        let dir = log.dir.join("reports");
        let id = report_ids(&dir)?
            .pop()
            .ok_or_else(|| StoreError::NoReport(slug.to_string()))?;
        let path = dir.join(format!("{id}.report"));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Writes every review of the company to `out`; returns bytes written.
    pub fn export_reviews(
        &self,
        slug: &CompanySlug,
        format: ExportFormat,
        out: impl Write,
    ) -> Result<u64, StoreError> {
        let reviews = self.all_reviews(slug)?;
        let mut out = CountingWriter {
            inner: out,
            bytes: 0,
        };
        let dest = PathBuf::from("<export>");
        match format {
            ExportFormat::DelimitedTable => {
                let mut w = csv::Writer::from_writer(&mut out);
                let csv_err = |e: csv::Error| StoreError::Io {
                    path: dest.clone(),
                    source: io::Error::other(e),
                };
                w.write_record(["description", "classification", "posted_date"])
                    .map_err(csv_err)?;
                for r in &reviews {
                    w.write_record([
                        r.description(),
                        r.classification().as_str(),
                        &r.posted_date().format("%Y-%m-%d").to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                w.flush().map_err(io_err(&dest))?;
            }
            ExportFormat::StructuredRecords => {
                for r in &reviews {
                    let mut line =
                        serde_json::to_string(&ReviewRecord::from(r)).expect("record serializes");
                    line.push('\n');
                    out.write_all(line.as_bytes()).map_err(io_err(&dest))?;
                }
                out.flush().map_err(io_err(&dest))?;
            }
        }
        Ok(out.bytes)
    }

    pub fn export_to_path(
        &self,
        slug: &CompanySlug,
        format: ExportFormat,
        path: &Path,
    ) -> Result<u64, StoreError> {
        // Fail on unknown companies before touching the destination.
        self.company(slug)?;
        let file = File::create(path).map_err(io_err(path))?;
        self.export_reviews(slug, format, io::BufWriter::new(file))
    }
}

fn sorted_refs<'a>(reviews: &'a [StoredReview], filter: &ReviewFilter) -> Vec<&'a StoredReview> {
    let mut v: Vec<&StoredReview> = reviews
        .iter()
        .filter(|s| filter.accepts(&s.review))
        .collect();
    v.sort_by(|a, b| {
        b.review
            .posted_date()
            .cmp(&a.review.posted_date())
            .then_with(|| a.digest.cmp(&b.digest))
    });
    v
}

fn report_ids(dir: &Path) -> Result<Vec<String>, StoreError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry.map_err(io_err(dir))?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".report")) {
            ids.push(id.to_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

impl CompanyLog {
    fn load(dir: PathBuf, slug: CompanySlug) -> Result<Self, StoreError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let meta = dir.join("company.json");
        let company = match fs::read(&meta) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: meta.clone(),
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Company::from_slug(slug.clone()),
            Err(e) => return Err(io_err(&meta)(e)),
        };

        let path = dir.join("reviews.log");
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut raw = Vec::new();
        log.read_to_end(&mut raw).map_err(io_err(&path))?;
        let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        if complete < raw.len() {
            log.set_len(complete as u64).map_err(io_err(&path))?;
        }

        let mut reviews = Vec::new();
        let mut keys = HashSet::new();
        for (n, line) in BufReader::new(&raw[..complete]).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                line: n + 1,
                message,
            };
            let record: ReviewRecord =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            let review = record
                .into_review(slug.clone())
                .map_err(|e| corrupt(e.to_string()))?;
            let digest = review_key(&review).content_digest;
            if keys.insert(digest.clone()) {
                reviews.push(StoredReview { review, digest });
            }
        }
        Ok(CompanyLog {
            dir,
            data: RwLock::new(CompanyData {
                company,
                reviews,
                keys,
                log,
            }),
        })
    }
}

struct CountingWriter<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Reads a delimited-table export back into `(description, classification,
/// posted_date)` rows.
pub fn read_delimited_table(
    input: impl Read,
) -> Result<Vec<(String, ReviewClassification, NaiveDate)>, StoreError> {
    let mut rdr = csv::Reader::from_reader(input);
    let bad = |m: String| StoreError::InvalidRecord(m);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let class = rec[1]
            .parse()
            .map_err(|e: DomainError| bad(e.to_string()))?;
        let date = crate::domain::parse_review_date(&rec[2]).map_err(|e| bad(e.to_string()))?;
        rows.push((rec[0].to_owned(), class, date));
    }
    Ok(rows)
}

/// Reads a structured-records export.
pub fn read_structured_records(input: impl Read) -> Result<Vec<ReviewRecord>, StoreError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(io_err(Path::new("<import>")))?;
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: PathBuf::from("<import>"),
                line: n + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn slug() -> CompanySlug {
        CompanySlug::parse("empresa-a").unwrap()
    }

    fn review(i: usize, class: ReviewClassification) -> Review {
        let date = NaiveDate::from_ymd_opt(2018, 6, 30).unwrap() - chrono::Days::new(i as u64 / 2);
        Review::new(
            slug(),
            format!("comentário número {i} sobre a entrega"),
            class,
            date,
            "http://fixture.local/company/empresa-a/reviews?page=1",
            Utc.with_ymd_and_hms(2018, 7, 1, 0, 0, 0).unwrap(),
        )
        .unwrap()
    }

    fn batch(n: usize) -> Vec<Review> {
        (0..n)
            .map(|i| {
                let c = if i % 3 == 0 {
                    ReviewClassification::Complaint
                } else {
                    ReviewClassification::Praise
                };
                review(i, c)
            })
            .collect()
    }

    #[test]
    fn append_and_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let b = batch(25);
        assert_eq!(
            store.append_reviews(&slug(), &b).unwrap(),
            AppendResult {
                inserted: 25,
                duplicates: 0
            }
        );
        assert_eq!(
            store.append_reviews(&slug(), &b).unwrap(),
            AppendResult {
                inserted: 0,
                duplicates: 25
            }
        );
    }

    #[test]
    fn whitespace_variants_dedup_within_batch() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let a = review(1, ReviewClassification::Praise);
        let b = Review::new(
            slug(),
            format!("  {}  ", a.description().replace(' ', "   ")),
            a.classification(),
            a.posted_date(),
            "http://fixture.local/other",
            a.fetched_at(),
        )
        .unwrap();
        let r = store.append_reviews(&slug(), &[a, b]).unwrap();
        assert_eq!(
            r,
            AppendResult {
                inserted: 1,
                duplicates: 1
            }
        );
    }

    #[test]
    fn wrong_company_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let other = CompanySlug::parse("outra").unwrap();
        assert!(matches!(
            store.append_reviews(&other, &batch(1)),
            Err(StoreError::InvalidRecord(_))
        ));
    }

    #[test]
    fn paging_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.append_reviews(&slug(), &batch(120)).unwrap();
        let page = store
            .list_reviews(&slug(), &ReviewFilter::default(), 0, 50)
            .unwrap();
        assert_eq!((page.items.len(), page.total), (50, 120));
        let last = store
            .list_reviews(&slug(), &ReviewFilter::default(), 100, 50)
            .unwrap();
        assert_eq!(last.items.len(), 20);
        let beyond = store
            .list_reviews(&slug(), &ReviewFilter::default(), 500, 50)
            .unwrap();
        assert!(beyond.items.is_empty());

        let complaints = ReviewFilter {
            classification: Some(ReviewClassification::Complaint),
            ..Default::default()
        };
        let page = store.list_reviews(&slug(), &complaints, 0, 1000).unwrap();
        assert_eq!(page.total, 40);
        assert!(page
            .items
            .iter()
            .all(|r| r.classification() == ReviewClassification::Complaint));

        let day = NaiveDate::from_ymd_opt(2018, 6, 30).unwrap();
        let newest = ReviewFilter {
            from: Some(day),
            to: Some(day),
            ..Default::default()
        };
        assert_eq!(
            store.list_reviews(&slug(), &newest, 0, 10).unwrap().total,
            2
        );

        assert!(matches!(
            store.list_reviews(&slug(), &ReviewFilter::default(), 0, 0),
            Err(StoreError::InvalidPaging(_))
        ));
        assert!(matches!(
            store.list_reviews(&slug(), &ReviewFilter::default(), 0, 1001),
            Err(StoreError::InvalidPaging(_))
        ));
        let unknown = CompanySlug::parse("nope").unwrap();
        assert!(matches!(
            store.list_reviews(&unknown, &ReviewFilter::default(), 0, 10),
            Err(StoreError::UnknownCompany(_))
        ));
    }

    #[test]
    fn ordering_is_date_desc_then_digest() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.append_reviews(&slug(), &batch(30)).unwrap();
        let items = store.all_reviews(&slug()).unwrap();
        for pair in items.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(a.posted_date() >= b.posted_date());
            if a.posted_date() == b.posted_date() {
                assert!(review_key(a).content_digest < review_key(b).content_digest);
            }
        }
    }

    #[test]
    fn counts() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.ensure_company(&Company::from_slug(slug())).unwrap();
        assert_eq!(
            store.classification_counts(&slug()).unwrap(),
            ClassificationCounts {
                praise: 0,
                complaint: 0
            }
        );
        store.append_reviews(&slug(), &batch(9)).unwrap();
        let before = store.classification_counts(&slug()).unwrap();
        assert_eq!(before.total(), 9);
        store
            .append_reviews(&slug(), &[review(1000, ReviewClassification::Complaint)])
            .unwrap();
        let after = store.classification_counts(&slug()).unwrap();
        assert_eq!(after.complaint, before.complaint + 1);
        assert_eq!(after.praise, before.praise);
    }

    #[test]
    fn torn_tail_is_discarded_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = ReviewStore::open(dir.path()).unwrap();
            store.append_reviews(&slug(), &batch(5)).unwrap();
        }
        let log = dir.path().join("empresa-a/reviews.log");
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"description\":\"meio escr").unwrap();
        drop(f);

        let store = ReviewStore::open(dir.path()).unwrap();
        assert_eq!(store.all_reviews(&slug()).unwrap().len(), 5);
        store
            .append_reviews(&slug(), &[review(99, ReviewClassification::Praise)])
            .unwrap();
        drop(store);
        let store = ReviewStore::open(dir.path()).unwrap();
        assert_eq!(store.all_reviews(&slug()).unwrap().len(), 6);
    }

    #[test]
    fn log_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.append_reviews(&slug(), &batch(1)).unwrap();
        let text = fs::read_to_string(dir.path().join("empresa-a/reviews.log")).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "classification",
                "description",
                "fetched_at",
                "posted_date",
                "source_url"
            ]
        );
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    fn stored_report(seed: u64) -> StoredReport {
        use crate::topics::{TermProbability, TopicTerms};
        StoredReport {
            company_slug: slug(),
            created_at: Utc.with_ymd_and_hms(2018, 7, 1, 0, 0, 0).unwrap(),
            parameters: ReportParameters {
                topics: 1,
                words_per_topic: 6,
                min_prob: 0.02,
                alpha: 50.0,
                beta: 0.01,
                iterations: 10,
                seed,
                min_count: 1,
                min_token_length: 2,
            },
            report: TopicReport {
                topics: vec![TopicTerms {
                    terms: vec![
                        TermProbability {
                            term: "frete".into(),
                            probability: 0.1 + 0.2,
                        },
                        // needs exact float parsing to come back unchanged
                        TermProbability {
                            term: "prazo".into(),
                            probability: 0.952_830_188_679_245_3,
                        },
                    ],
                }],
            },
        }
    }

    #[test]
    fn reports_round_trip_and_recency() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.ensure_company(&Company::from_slug(slug())).unwrap();
        assert!(matches!(
            store.load_latest_report(&slug()),
            Err(StoreError::NoReport(_))
        ));
        let first = stored_report(1);
        let id1 = store.save_report(&first).unwrap();
        assert_eq!(store.load_latest_report(&slug()).unwrap(), first);
        // Same timestamp: the id still sorts after the first one.
        let second = stored_report(2);
        let id2 = store.save_report(&second).unwrap();
        assert!(id2 > id1);
        assert_eq!(store.load_latest_report(&slug()).unwrap(), second);
        assert_eq!(
            fs::read_dir(dir.path().join("empresa-a/reports"))
                .unwrap()
                .count(),
            2
        );
    }

    #[test]
    fn csv_export_quotes_and_counts_lines() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let mut b = batch(2);
        b.push(
            Review::new(
                slug(),
                "Boa, mas \"cara\"",
                ReviewClassification::Praise,
                NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
                "http://h/x",
                Utc.with_ymd_and_hms(2018, 7, 1, 0, 0, 0).unwrap(),
            )
            .unwrap(),
        );
        store.append_reviews(&slug(), &b).unwrap();
        let mut buf = Vec::new();
        let n = store
            .export_reviews(&slug(), ExportFormat::DelimitedTable, &mut buf)
            .unwrap();
        assert_eq!(n as usize, buf.len());
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(
            text.lines().next().unwrap(),
            "description,classification,posted_date"
        );
        assert!(text.contains("\"Boa, mas \"\"cara\"\"\",Praise,2017-01-01"));

        let rows = read_delimited_table(&buf[..]).unwrap();
        let expected: Vec<_> = store
            .all_reviews(&slug())
            .unwrap()
            .iter()
            .map(|r| {
                (
                    r.description().to_owned(),
                    r.classification(),
                    r.posted_date(),
                )
            })
            .collect();
        assert_eq!(rows, expected);
    }

    #[test]
    fn structured_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        store.append_reviews(&slug(), &batch(7)).unwrap();
        let mut buf = Vec::new();
        store
            .export_reviews(&slug(), ExportFormat::StructuredRecords, &mut buf)
            .unwrap();
        let back: Vec<Review> = read_structured_records(&buf[..])
            .unwrap()
            .into_iter()
            .map(|r| r.into_review(slug()).unwrap())
            .collect();
        assert_eq!(back, store.all_reviews(&slug()).unwrap());
    }
}
