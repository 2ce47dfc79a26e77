//! Deterministic stand-in for the review platform.
//!
//! [`generate_site`] builds per-company ground-truth reviews and renders them
//! as paginated listing pages; [`serve_fixture`] serves those pages at
//! `GET /company/<slug>/reviews?page=N`.
//!
//! Listing pages have this shape:
//!
//! ```html
//! <ul class="review-list">
//!   <li class="review-item">
//!     <p class="review-text">Entrega antes do prazo.</p>
//!     <span class="review-kind">Elogio</span>
//!     <span class="review-date">30/06/2018</span>
//!   </li>
//!   ...
//! </ul>
//! <a rel="next" href="/company/empresa-a/reviews?page=2">Próxima página</a>
//! ```
//!
//! The `rel="next"` anchor is present on every page but the last.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reputex_core::domain::format_review_date;
use reputex_core::{Company, CompanySlug, ReviewClassification};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

const BUNDLED_PHRASES: &str = include_str!("../data/phrase_bank.json");

pub const DEFAULT_PAGE_SIZE: usize = 25;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
    #[error("cannot bind fixture server to {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseBank {
    pub praise: Vec<String>,
    pub complaint: Vec<String>,
}

impl Default for PhraseBank {
    fn default() -> Self {
        serde_json::from_str(BUNDLED_PHRASES).expect("bundled phrase bank is valid JSON")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCompany {
    pub slug: CompanySlug,
    pub name: String,
    #[serde(default)]
    pub sector: String,
    pub review_count: usize,
    pub praise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub companies: Vec<FixtureCompany>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phrase_bank: PhraseBank,
}

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<(), FixtureError> {
        let bad = |m: String| Err(FixtureError::InvalidSpec(m));
        if self.page_size == 0 {
            return bad("page_size must be at least 1".into());
        }
        if self.phrase_bank.praise.is_empty() || self.phrase_bank.complaint.is_empty() {
            return bad("phrase bank needs praise and complaint phrases".into());
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.companies {
            if !seen.insert(&c.slug) {
                return bad(format!("duplicate company {}", c.slug));
            }
            if !(0.0..=1.0).contains(&c.praise_fraction) {
                return bad(format!("praise_fraction of {} not in [0, 1]", c.slug));
            }
        }
        Ok(())
    }
}

/// A generated review before it is rendered or crawled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureReview {
    pub description: String,
    pub classification: ReviewClassification,
    pub posted_date: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct FixtureCompanySite {
    pub company: Company,
    /// Ground truth, in listing order.
    pub reviews: Vec<FixtureReview>,
    /// Rendered HTML; `pages[0]` is page 1.
    pub pages: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FixtureSite {
    pub page_size: usize,
    pub companies: Vec<FixtureCompanySite>,
}

impl FixtureSite {
    pub fn company(&self, slug: &str) -> Option<&FixtureCompanySite> {
        self.companies
            .iter()
            .find(|c| c.company.slug.as_str() == slug)
    }

    /// Page `n` (1-based) of a company's listing.
    pub fn page(&self, slug: &str, n: usize) -> Option<&str> {
        let c = self.company(slug)?;
        n.checked_sub(1)
            .and_then(|i| c.pages.get(i))
            .map(String::as_str)
    }
}

/// Most recent posting date; review `i` of a company is posted `i` days
/// earlier.
pub fn fixture_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 6, 30).unwrap()
}

/// Number of praise reviews: `review_count · praise_fraction`, rounded.
pub fn praise_count(review_count: usize, praise_fraction: f64) -> usize {
    ((review_count as f64 * praise_fraction).round() as usize).min(review_count)
}

pub fn generate_site(spec: &FixtureSpec) -> Result<FixtureSite, FixtureError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let companies = spec
        .companies
        .iter()
        .map(|fc| {
            let reviews = generate_reviews(fc, &spec.phrase_bank, &mut rng);
            let pages = render_pages(fc, &reviews, spec.page_size);
            FixtureCompanySite {
                company: Company {
                    slug: fc.slug.clone(),
                    name: fc.name.clone(),
                    sector: fc.sector.clone(),
                },
                reviews,
                pages,
            }
        })
        .collect();
    Ok(FixtureSite {
        page_size: spec.page_size,
        companies,
    })
}

fn generate_reviews(
    fc: &FixtureCompany,
    bank: &PhraseBank,
    rng: &mut ChaCha8Rng,
) -> Vec<FixtureReview> {
    let n = fc.review_count;
    let mut praise = vec![false; n];
    praise[..praise_count(n, fc.praise_fraction)].fill(true);
    // Fisher-Yates with 32-bit draws keeps the stream platform independent.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u32) as usize;
        praise.swap(i, j);
    }

    praise
        .into_iter()
        .enumerate()
        .map(|(i, is_praise)| {
            let (class, phrases) = if is_praise {
                (ReviewClassification::Praise, &bank.praise)
            } else {
                (ReviewClassification::Complaint, &bank.complaint)
            };
            let parts = rng.random_range(1..=3u32);
            let mut picked: Vec<&str> = Vec::new();
            for _ in 0..parts {
                let p = phrases[rng.random_range(0..phrases.len() as u32) as usize].as_str();
                if !picked.contains(&p) {
                    picked.push(p);
                }
            }
            FixtureReview {
                description: format!("{}.", picked.join(". ")),
                classification: class,
                posted_date: fixture_epoch() - chrono::Days::new(i as u64),
            }
        })
        .collect()
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Path of listing page `n` for `slug`.
pub fn listing_path(slug: &CompanySlug, page: usize) -> String {
    format!("/company/{slug}/reviews?page={page}")
}

fn render_pages(fc: &FixtureCompany, reviews: &[FixtureReview], page_size: usize) -> Vec<String> {
    let chunks: Vec<&[FixtureReview]> = if reviews.is_empty() {
        vec![&[]]
    } else {
        reviews.chunks(page_size).collect()
    };
    let last = chunks.len();
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, items)| {
            let page = i + 1;
            let mut html = String::new();
            html.push_str(
                "<!DOCTYPE html>\n<html lang=\"pt-BR\">\n<head>\n<meta charset=\"utf-8\">\n",
            );
            html.push_str(&format!(
                "<title>{} - avaliações (página {page})</title>\n</head>\n<body>\n",
                escape_html(&fc.name)
            ));
            html.push_str(&format!("<h1>{}</h1>\n", escape_html(&fc.name)));
            html.push_str("<ul class=\"review-list\">\n");
            for r in items {
                html.push_str("<li class=\"review-item\">\n");
                html.push_str(&format!(
                    "<p class=\"review-text\">{}</p>\n",
                    escape_html(&r.description)
                ));
                html.push_str(&format!(
                    "<span class=\"review-kind\">{}</span>\n",
                    r.classification.platform_label()
                ));
                html.push_str(&format!(
                    "<span class=\"review-date\">{}</span>\n",
                    format_review_date(r.posted_date)
                ));
                html.push_str("</li>\n");
            }
            html.push_str("</ul>\n");
            if page < last {
                html.push_str(&format!(
                    "<a rel=\"next\" href=\"{}\">Próxima página</a>\n",
                    escape_html(&listing_path(&fc.slug, page + 1))
                ));
            }
            html.push_str("</body>\n</html>\n");
            html
        })
        .collect()
}

/// Makes matching requests answer with a fixed status instead of content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub slug: String,
    /// `None` faults every page of the company.
    pub page: Option<usize>,
    pub status: u16,
}

#[derive(Clone)]
struct ServerState {
    site: Arc<FixtureSite>,
    faults: Arc<Vec<Fault>>,
    requests: Arc<Mutex<Vec<String>>>,
}

/// A running fixture server. Dropping the handle leaves the server running
/// until the runtime ends; call [`FixtureServer::shutdown`] to stop it.
pub struct FixtureServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<String>>>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl FixtureServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Request paths (with query) in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }

    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Runs until the task ends (it only ends after `shutdown`).
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

#[derive(Deserialize)]
struct PageQuery {
    page: Option<String>,
}

async fn listing(
    State(state): State<ServerState>,
    Path(slug): Path<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    let page_raw = q.page.clone().unwrap_or_else(|| "1".into());
    state
        .requests
        .lock()
        .unwrap()
        .push(format!("/company/{slug}/reviews?page={page_raw}"));
    let Ok(page) = page_raw.parse::<usize>() else {
        return (StatusCode::BAD_REQUEST, "bad page number").into_response();
    };
    if let Some(f) = state
        .faults
        .iter()
        .find(|f| f.slug == slug && f.page.is_none_or(|p| p == page))
    {
        let status = StatusCode::from_u16(f.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return (status, "fault injected").into_response();
    }
    match state.site.page(&slug, page) {
        Some(html) => (
            [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
            html.to_owned(),
        )
            .into_response(),
        None => (StatusCode::NOT_FOUND, "no such page").into_response(),
    }
}

pub fn fixture_router(
    site: Arc<FixtureSite>,
    faults: Vec<Fault>,
) -> (Router, Arc<Mutex<Vec<String>>>) {
    let requests = Arc::new(Mutex::new(Vec::new()));
    let state = ServerState {
        site,
        faults: Arc::new(faults),
        requests: requests.clone(),
    };
    let router = Router::new()
        .route("/company/{slug}/reviews", get(listing))
        .with_state(state);
    (router, requests)
}

/// Binds `addr` (port 0 picks a free port) and serves the site in the
/// background.
pub async fn serve_fixture(
    site: Arc<FixtureSite>,
    addr: SocketAddr,
    faults: Vec<Fault>,
) -> Result<FixtureServer, FixtureError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| FixtureError::Bind { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| FixtureError::Bind { addr, source })?;
    let (router, requests) = fixture_router(site, faults);
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await;
    });
    Ok(FixtureServer {
        addr,
        requests,
        stop: Some(stop),
        task,
    })
}

/// Counts pages per company for a spec without rendering.
pub fn page_count(review_count: usize, page_size: usize) -> usize {
    review_count.div_ceil(page_size).max(1)
}

/// Ground truth keyed by company slug.
pub fn ground_truth(site: &FixtureSite) -> HashMap<String, Vec<FixtureReview>> {
    site.companies
        .iter()
        .map(|c| (c.company.slug.to_string(), c.reviews.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, fraction: f64) -> FixtureSpec {
        FixtureSpec {
            companies: vec![FixtureCompany {
                slug: CompanySlug::parse("empresa-a").unwrap(),
                name: "Empresa A".into(),
                sector: "Bens de Consumo".into(),
                review_count: n,
                praise_fraction: fraction,
            }],
            page_size: DEFAULT_PAGE_SIZE,
            seed: 1,
            phrase_bank: PhraseBank::default(),
        }
    }

    #[test]
    fn pagination_shape() {
        let site = generate_site(&spec(120, 0.5)).unwrap();
        let c = &site.companies[0];
        assert_eq!(c.pages.len(), 5);
        assert_eq!(c.pages[4].matches("class=\"review-item\"").count(), 20);
        assert_eq!(c.pages[0].matches("class=\"review-item\"").count(), 25);
        for (i, page) in c.pages.iter().enumerate() {
            let next = format!("href=\"/company/empresa-a/reviews?page={}\"", i + 2);
            assert_eq!(page.contains(&next), i < 4, "page {}", i + 1);
            assert_eq!(page.contains("rel=\"next\""), i < 4);
        }
        assert_eq!(page_count(120, 25), 5);
        assert_eq!(page_count(0, 25), 1);
    }

    #[test]
    fn exact_praise_split() {
        let site = generate_site(&spec(120, 70.0 / 120.0)).unwrap();
        let praise = site.companies[0]
            .reviews
            .iter()
            .filter(|r| r.classification == ReviewClassification::Praise)
            .count();
        assert_eq!(praise, 70);
        assert_eq!(praise_count(120, 0.5833), 70);
        assert_eq!(praise_count(3, 1.0), 3);
        assert_eq!(praise_count(3, 0.0), 0);
    }

    #[test]
    fn deterministic_pages() {
        let a = generate_site(&spec(60, 0.4)).unwrap();
        let b = generate_site(&spec(60, 0.4)).unwrap();
        assert_eq!(a.companies[0].pages, b.companies[0].pages);
        let mut other = spec(60, 0.4);
        other.seed = 2;
        let c = generate_site(&other).unwrap();
        assert_ne!(a.companies[0].pages, c.companies[0].pages);
    }

    #[test]
    fn dates_descend_from_epoch() {
        let site = generate_site(&spec(30, 0.5)).unwrap();
        let r = &site.companies[0].reviews;
        assert_eq!(r[0].posted_date, fixture_epoch());
        assert!(r.windows(2).all(|w| w[0].posted_date > w[1].posted_date));
    }

    #[test]
    fn empty_company_has_one_empty_page() {
        let site = generate_site(&spec(0, 0.5)).unwrap();
        assert_eq!(site.companies[0].pages.len(), 1);
        assert!(site.page("empresa-a", 1).unwrap().contains("review-list"));
        assert!(site.page("empresa-a", 2).is_none());
        assert!(site.page("empresa-a", 0).is_none());
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(10, 0.5);
        s.page_size = 0;
        assert!(generate_site(&s).is_err());
        assert!(generate_site(&spec(10, 1.5)).is_err());
        let mut dup = spec(10, 0.5);
        dup.companies.push(dup.companies[0].clone());
        assert!(generate_site(&dup).is_err());
    }

    #[test]
    fn spec_file_defaults() {
        let json =
            r#"{"companies":[{"slug":"b","name":"B","review_count":3,"praise_fraction":1.0}]}"#;
        let s: FixtureSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.page_size, 25);
        assert_eq!(s.phrase_bank, PhraseBank::default());
    }

    #[test]
    fn html_escaping() {
        assert_eq!(
            escape_html("a & \"b\" <c>"),
            "a &amp; &quot;b&quot; &lt;c&gt;"
        );
    }
}
