//! Sequential, polite crawler for paginated review listings.
//!
//! Roles: [`run_crawl`] is the engine loop, its URL frontier the scheduler,
//! [`Downloader`] fetches pages, [`parse_review_listing`] is the spider and
//! a [`ReviewSink`] is the item pipeline. Request shaping (user agent,
//! timeouts, retries, politeness) lives in [`FetchPolicy`].

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use reputex_core::domain::{parse_classification, parse_review_date};
use reputex_core::store::{AppendResult, ReviewStore};
use reputex_core::{Company, CompanySlug, Review};
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub const DEFAULT_MAX_REVIEWS: usize = 6000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrawlError {
    #[error("invalid base URL {0:?}")]
    InvalidBaseUrl(String),
    #[error("invalid crawl plan: {0}")]
    InvalidPlan(String),
    #[error("invalid fetch policy: {0}")]
    InvalidPolicy(String),
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("HTTP status {status} fetching {url}")]
    Http { url: String, status: u16 },
    #[error("timed out fetching {0}")]
    Timeout(String),
    #[error("unrecognized page {0}: no review list container")]
    UnrecognizedPage(String),
    #[error("review sink failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchPolicy {
    /// Minimum spacing between request starts to one host.
    pub min_delay: Duration,
    pub max_retries: u32,
    pub timeout: Duration,
    pub user_agent: String,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            min_delay: Duration::from_millis(1000),
            max_retries: 2,
            timeout: Duration::from_secs(10),
            user_agent: concat!("reputex/", env!("CARGO_PKG_VERSION")).to_owned(),
        }
    }
}

impl FetchPolicy {
    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.timeout.is_zero() {
            return Err(CrawlError::InvalidPolicy("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlPlan {
    pub company_slug: CompanySlug,
    pub seed_url: Url,
    pub max_reviews: usize,
}

/// Seed URL `<base>/company/<slug>/reviews?page=1`.
pub fn plan_crawl(
    company: &Company,
    base_url: &str,
    max_reviews: Option<usize>,
) -> Result<CrawlPlan, CrawlError> {
    let max_reviews = max_reviews.unwrap_or(DEFAULT_MAX_REVIEWS);
    if max_reviews == 0 {
        return Err(CrawlError::InvalidPlan(
            "max_reviews must be positive".into(),
        ));
    }
    let invalid = || CrawlError::InvalidBaseUrl(base_url.to_owned());
    let base = Url::parse(base_url).map_err(|_| invalid())?;
    if !base.has_host() || !matches!(base.scheme(), "http" | "https") {
        return Err(invalid());
    }
    let seed = format!(
        "{}/company/{}/reviews?page=1",
        base.as_str().trim_end_matches('/'),
        company.slug
    );
    Ok(CrawlPlan {
        company_slug: company.slug.clone(),
        seed_url: Url::parse(&seed).map_err(|_| invalid())?,
        max_reviews,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageResult {
    pub url: Url,
    pub http_status: u16,
    pub body: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchLogEntry {
    pub url: String,
    pub started_at: DateTime<Utc>,
    /// `None` when the attempt failed before a response arrived.
    pub http_status: Option<u16>,
    pub attempt: u32,
}

type HostSlot = Arc<tokio::sync::Mutex<Option<DateTime<Utc>>>>;

/// Start time of the last request per host. Shared by every downloader in
/// the process unless a private clock is supplied.
#[derive(Debug, Default)]
pub struct PolitenessClock {
    hosts: Mutex<HashMap<String, HostSlot>>,
}

impl PolitenessClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> Arc<PolitenessClock> {
        static GLOBAL: OnceLock<Arc<PolitenessClock>> = OnceLock::new();
        GLOBAL
            .get_or_init(|| Arc::new(PolitenessClock::new()))
            .clone()
    }

    /// Waits until `min_delay` has passed since the last request start to
    /// `host`, then claims the slot and returns the claimed start time.
    pub async fn wait_turn(&self, host: &str, min_delay: Duration) -> DateTime<Utc> {
        let slot = self
            .hosts
            .lock()
            .unwrap()
            .entry(host.to_owned())
            .or_default()
            .clone();
        let mut last = slot.lock().await;
        let delay = chrono::Duration::from_std(min_delay).unwrap_or(chrono::Duration::MAX);
        loop {
            let now = Utc::now();
            match *last {
                Some(prev) if now - prev < delay => {
                    let remaining = (prev + delay - now).to_std().unwrap_or_default();
                    tokio::time::sleep(remaining).await;
                }
                _ => {
                    *last = Some(now);
                    return now;
                }
            }
        }
    }
}

/// Page fetcher with retries, per-host politeness and an attempt log.
#[derive(Debug)]
pub struct Downloader {
    client: reqwest::Client,
    policy: FetchPolicy,
    clock: Arc<PolitenessClock>,
    log: Mutex<Vec<FetchLogEntry>>,
}

enum Attempt {
    Done(PageResult),
    Retry(CrawlError),
    Fail(CrawlError),
}

impl Downloader {
    pub fn new(policy: FetchPolicy) -> Result<Self, CrawlError> {
        Self::with_clock(policy, PolitenessClock::global())
    }

    pub fn with_clock(
        policy: FetchPolicy,
        clock: Arc<PolitenessClock>,
    ) -> Result<Self, CrawlError> {
        policy.validate()?;
        let client = reqwest::Client::builder()
            .user_agent(policy.user_agent.clone())
            .timeout(policy.timeout)
            .build()
            .map_err(|e| CrawlError::InvalidPolicy(e.to_string()))?;
        Ok(Downloader {
            client,
            policy,
            clock,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    /// Every attempt made so far, in order.
    pub fn fetch_log(&self) -> Vec<FetchLogEntry> {
        self.log.lock().unwrap().clone()
    }

    /// Fetches `url`, retrying transport failures and 5xx responses up to
    /// `max_retries` times with a fixed `min_delay` backoff. 4xx responses
    /// are not retried.
    pub async fn fetch_page(&self, url: &Url) -> Result<PageResult, CrawlError> {
        let host = url
            .host_str()
            .ok_or_else(|| CrawlError::InvalidBaseUrl(url.to_string()))?
            .to_owned();
        let host_key = match url.port_or_known_default() {
            Some(p) => format!("{host}:{p}"),
            None => host,
        };
        let mut attempt = 1;
        loop {
            match self.attempt(url, &host_key, attempt).await {
                Attempt::Done(page) => return Ok(page),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt > self.policy.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    tracing::debug!(%url, attempt, error = %e, "retrying");
                    tokio::time::sleep(self.policy.min_delay).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn attempt(&self, url: &Url, host_key: &str, attempt: u32) -> Attempt {
        let started_at = self.clock.wait_turn(host_key, self.policy.min_delay).await;
        let record = |status: Option<u16>| {
            self.log.lock().unwrap().push(FetchLogEntry {
                url: url.to_string(),
                started_at,
                http_status: status,
                attempt,
            })
        };
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                CrawlError::Timeout(url.to_string())
            } else {
                CrawlError::Network {
                    url: url.to_string(),
                    message: e.to_string(),
                }
            }
        };
        let resp = match self.client.get(url.clone()).send().await {
            Ok(r) => r,
            Err(e) => {
                record(None);
                return Attempt::Retry(transport(e));
            }
        };
        let status = resp.status();
        record(Some(status.as_u16()));
        let http = CrawlError::Http {
            url: url.to_string(),
            status: status.as_u16(),
        };
        if status.is_server_error() {
            return Attempt::Retry(http);
        }
        if !status.is_success() {
            return Attempt::Fail(http);
        }
        match resp.text().await {
            Ok(body) => Attempt::Done(PageResult {
                url: url.clone(),
                http_status: status.as_u16(),
                body,
                fetched_at: Utc::now(),
            }),
            Err(e) => Attempt::Retry(transport(e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingParse {
    pub reviews: Vec<Review>,
    pub next_page: Option<Url>,
    /// Items skipped because a field failed to parse.
    pub warnings: Vec<String>,
}

struct ListingSelectors {
    list: Selector,
    item: Selector,
    text: Selector,
    kind: Selector,
    date: Selector,
    next: Selector,
}

fn selectors() -> &'static ListingSelectors {
    static SEL: OnceLock<ListingSelectors> = OnceLock::new();
    SEL.get_or_init(|| {
        let s = |q: &str| Selector::parse(q).expect("static selector");
        ListingSelectors {
            list: s(".review-list"),
            item: s(".review-item"),
            text: s(".review-text"),
            kind: s(".review-kind"),
            date: s(".review-date"),
            next: s("a[rel~=\"next\"]"),
        }
    })
}

fn child_text(item: ElementRef<'_>, sel: &Selector, field: &str) -> Result<String, String> {
    item.select(sel)
        .next()
        .map(|e| e.text().collect::<String>().trim().to_owned())
        .ok_or_else(|| format!("missing {field}"))
}

/// Extracts the reviews and the `rel="next"` link of one listing page.
pub fn parse_review_listing(
    company: &CompanySlug,
    body: &str,
    page_url: &Url,
    fetched_at: DateTime<Utc>,
) -> Result<ListingParse, CrawlError> {
    let doc = Html::parse_document(body);
    let sel = selectors();
    let Some(list) = doc.select(&sel.list).next() else {
        return Err(CrawlError::UnrecognizedPage(page_url.to_string()));
    };

    let mut reviews = Vec::new();
    let mut warnings = Vec::new();
    for (n, item) in list.select(&sel.item).enumerate() {
        let parsed = (|| {
            let text = child_text(item, &sel.text, "review-text")?;
            let kind = child_text(item, &sel.kind, "review-kind")?;
            let date = child_text(item, &sel.date, "review-date")?;
            let classification = parse_classification(&kind).map_err(|e| e.to_string())?;
            let posted = parse_review_date(&date).map_err(|e| e.to_string())?;
            Review::new(
                company.clone(),
                text,
                classification,
                posted,
                page_url.as_str(),
                fetched_at,
            )
            .map_err(|e| e.to_string())
        })();
        match parsed {
            Ok(r) => reviews.push(r),
            Err(e) => warnings.push(format!("{page_url} item {}: {e}", n + 1)),
        }
    }

    let mut next_page = None;
    if let Some(href) = doc.select(&sel.next).find_map(|a| a.value().attr("href")) {
        match page_url.join(href) {
            Ok(u) if &u != page_url => next_page = Some(u),
            Ok(_) => warnings.push(format!("{page_url}: next link points to itself")),
            Err(e) => warnings.push(format!("{page_url}: bad next link {href:?}: {e}")),
        }
    }
    Ok(ListingParse {
        reviews,
        next_page,
        warnings,
    })
}

/// Receives reviews as the crawler extracts them.
pub trait ReviewSink {
    fn consume(&mut self, reviews: Vec<Review>) -> Result<(), CrawlError>;
}

impl ReviewSink for Vec<Review> {
    fn consume(&mut self, reviews: Vec<Review>) -> Result<(), CrawlError> {
        self.extend(reviews);
        Ok(())
    }
}

/// Appends each extracted batch to a [`ReviewStore`].
pub struct StoreSink<'a> {
    store: &'a ReviewStore,
    slug: CompanySlug,
    pub appended: AppendResult,
}

impl<'a> StoreSink<'a> {
    pub fn new(store: &'a ReviewStore, slug: CompanySlug) -> Self {
        StoreSink {
            store,
            slug,
            appended: AppendResult::default(),
        }
    }
}

impl ReviewSink for StoreSink<'_> {
    fn consume(&mut self, reviews: Vec<Review>) -> Result<(), CrawlError> {
        let r = self
            .store
            .append_reviews(&self.slug, &reviews)
            .map_err(|e| CrawlError::Sink(e.to_string()))?;
        self.appended.inserted += r.inserted;
        self.appended.duplicates += r.duplicates;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlSummary {
    pub pages_fetched: usize,
    pub reviews_extracted: usize,
    pub warnings: Vec<String>,
}

/// A crawl that stopped on an error, with what it achieved before that.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{error} (after {} pages, {} reviews)", summary.pages_fetched, summary.reviews_extracted)]
pub struct CrawlFailure {
    pub error: CrawlError,
    pub summary: CrawlSummary,
}

/// Follows `next` links from the seed until the listing ends, the review
/// cap is reached or a page fails. No URL is requested twice.
pub async fn run_crawl(
    plan: &CrawlPlan,
    downloader: &Downloader,
    sink: &mut (dyn ReviewSink + Send),
) -> Result<CrawlSummary, CrawlFailure> {
    let mut summary = CrawlSummary::default();
    let mut frontier = VecDeque::from([plan.seed_url.clone()]);
    let mut seen: HashSet<Url> = HashSet::from([plan.seed_url.clone()]);

    while let Some(url) = frontier.pop_front() {
        if summary.reviews_extracted >= plan.max_reviews {
            break;
        }
        let fail = |error, summary: &CrawlSummary| CrawlFailure {
            error,
            summary: summary.clone(),
        };
        let page = downloader
            .fetch_page(&url)
            .await
            .map_err(|e| fail(e, &summary))?;
        summary.pages_fetched += 1;
        let listing = parse_review_listing(&plan.company_slug, &page.body, &url, page.fetched_at)
            .map_err(|e| fail(e, &summary))?;
        summary.warnings.extend(listing.warnings);

        let room = plan.max_reviews - summary.reviews_extracted;
        let mut reviews = listing.reviews;
        reviews.truncate(room);
        summary.reviews_extracted += reviews.len();
        sink.consume(reviews).map_err(|e| fail(e, &summary))?;

        if let Some(next) = listing.next_page {
            if seen.insert(next.clone()) {
                frontier.push_back(next);
            } else {
                summary
                    .warnings
                    .push(format!("{url}: next link {next} was already visited"));
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn company() -> Company {
        Company::from_slug(CompanySlug::parse("empresa-a").unwrap())
    }

    #[test]
    fn plan_template() {
        let p = plan_crawl(&company(), "http://host", Some(6000)).unwrap();
        assert_eq!(
            p.seed_url.as_str(),
            "http://host/company/empresa-a/reviews?page=1"
        );
        let p = plan_crawl(&company(), "http://host:8080/base/", None).unwrap();
        assert_eq!(
            p.seed_url.as_str(),
            "http://host:8080/base/company/empresa-a/reviews?page=1"
        );
        assert_eq!(p.max_reviews, 6000);
        assert!(matches!(
            plan_crawl(&company(), "http://host", Some(0)),
            Err(CrawlError::InvalidPlan(_))
        ));
        assert!(matches!(
            plan_crawl(&company(), "not a url", None),
            Err(CrawlError::InvalidBaseUrl(_))
        ));
        assert!(matches!(
            plan_crawl(&company(), "ftp://host", None),
            Err(CrawlError::InvalidBaseUrl(_))
        ));
    }

    #[test]
    fn policy_defaults() {
        let p = FetchPolicy::default();
        assert_eq!(p.min_delay, Duration::from_millis(1000));
        assert_eq!(p.max_retries, 2);
        assert_eq!(p.timeout, Duration::from_secs(10));
        let zero = FetchPolicy {
            timeout: Duration::ZERO,
            ..p
        };
        assert!(zero.validate().is_err());
    }

    fn page_url() -> Url {
        Url::parse("http://host/company/empresa-a/reviews?page=2").unwrap()
    }

    #[test]
    fn parse_minimal_listing() {
        let body = r#"<html><body>
            <ul class="review-list">
              <li class="review-item">
                <p class="review-text">Frete grátis &amp; entrega rápida</p>
                <span class="review-kind">Elogio</span>
                <span class="review-date">05/03/2018</span>
              </li>
              <li class="review-item">
                <p class="review-text">Atrasou</p>
                <span class="review-kind">Neutro</span>
                <span class="review-date">05/03/2018</span>
              </li>
              <li class="review-item">
                <p class="review-text">Produto com defeito</p>
                <span class="review-kind">Reclamação</span>
                <span class="review-date">2018-03-04</span>
              </li>
            </ul>
            <a rel="next" href="/company/empresa-a/reviews?page=3">Próxima</a>
        </body></html>"#;
        let slug = company().slug;
        let parsed = parse_review_listing(&slug, body, &page_url(), Utc::now()).unwrap();
        assert_eq!(parsed.reviews.len(), 2);
        assert_eq!(
            parsed.reviews[0].description(),
            "Frete grátis & entrega rápida"
        );
        assert_eq!(parsed.reviews[0].source_url(), page_url().as_str());
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("item 2"));
        assert_eq!(
            parsed.next_page.unwrap().as_str(),
            "http://host/company/empresa-a/reviews?page=3"
        );
    }

    #[test]
    fn parse_last_page_and_unrecognized() {
        let slug = company().slug;
        let last = r#"<ul class="review-list"></ul>"#;
        let parsed = parse_review_listing(&slug, last, &page_url(), Utc::now()).unwrap();
        assert!(parsed.reviews.is_empty() && parsed.next_page.is_none());

        assert_eq!(
            parse_review_listing(&slug, "<html></html>", &page_url(), Utc::now()),
            Err(CrawlError::UnrecognizedPage(page_url().to_string()))
        );
    }

    #[test]
    fn self_link_is_not_a_next_page() {
        let slug = company().slug;
        let body = r#"<ul class="review-list"></ul><a rel="next" href="?page=2">x</a>"#;
        let parsed = parse_review_listing(&slug, body, &page_url(), Utc::now()).unwrap();
        assert!(parsed.next_page.is_none());
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[tokio::test]
    async fn clock_spaces_same_host_only() {
        let clock = PolitenessClock::new();
        let d = Duration::from_millis(40);
        let a = clock.wait_turn("h:1", d).await;
        let b = clock.wait_turn("h:1", d).await;
        assert!(b - a >= chrono::Duration::milliseconds(40));
        let other = clock.wait_turn("h:2", d).await;
        assert!(other - b < chrono::Duration::milliseconds(40));
    }
}
