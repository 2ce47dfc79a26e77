//! HTTP front end for the review pipeline.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/companies/{slug}/crawl` | start (or return) the company's crawl job |
//! | GET | `/jobs/{id}` | job snapshot |
//! | GET | `/companies` | companies with classification counts |
//! | GET | `/companies/{slug}/reviews` | one page of stored reviews |
//! | POST | `/companies/{slug}/topics` | train and save a topic report |
//! | GET | `/companies/{slug}/topics/latest` | latest saved report |
//! | GET | `/companies/{slug}/export` | every stored review as a download |
//!
//! Crawls run on background tasks and write to the store page by page;
//! topic modeling runs on the blocking pool and the request waits for it.

mod error;
mod jobs;

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use reputex_core::store::{
    ClassificationCounts, ExportFormat, ReportParameters, ReviewFilter, MAX_PAGE_LIMIT,
};
use reputex_core::textprep::bundled_stopwords;
use reputex_core::{
    model_company, parse_classification, parse_review_date, Company, CompanySlug, Review,
    ReviewClassification, ReviewStore, StoredReport,
};
use reputex_crawl::{plan_crawl, run_crawl, Downloader, FetchPolicy, PolitenessClock, StoreSink};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorCode};
pub use jobs::{CrawlJobRecord, JobRegistry, JobState};

pub const DEFAULT_PAGE_LIMIT: usize = 50;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Review site crawled when a request does not name one.
    pub base_url: String,
    pub fetch_policy: FetchPolicy,
    /// Directory served at `/`, if any.
    pub static_dir: Option<PathBuf>,
    pub stopwords: HashSet<String>,
}

impl ServiceConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        ServiceConfig {
            base_url: base_url.into(),
            fetch_policy: FetchPolicy::default(),
            static_dir: None,
            stopwords: bundled_stopwords(),
        }
    }
}

pub struct AppState {
    pub store: Arc<ReviewStore>,
    pub jobs: JobRegistry,
    pub config: ServiceConfig,
    clock: Arc<PolitenessClock>,
}

impl AppState {
    pub fn new(store: Arc<ReviewStore>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            store,
            jobs: JobRegistry::default(),
            config,
            clock: PolitenessClock::global(),
        })
    }
}

type Shared = Arc<AppState>;

fn parse_slug(raw: &str) -> Result<CompanySlug, ApiError> {
    CompanySlug::parse(raw).map_err(|e| ApiError::new(ErrorCode::BadSlug, e.to_string()))
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice::<Option<T>>(body)
        .map(Option::unwrap_or_default)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrawlRequest {
    base_url: Option<String>,
    max_reviews: Option<usize>,
}

async fn start_crawl(
    State(state): State<Shared>,
    Path(slug): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<CrawlJobRecord>), ApiError> {
    let slug = parse_slug(&slug)?;
    let req: CrawlRequest = parse_body(&body)?;
    let base_url = req
        .base_url
        .unwrap_or_else(|| state.config.base_url.clone());
    let plan = plan_crawl(
        &Company::from_slug(slug.clone()),
        &base_url,
        req.max_reviews,
    )
    .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()))?;

    let (record, fresh) = state.jobs.start_or_existing(&slug);
    if fresh {
        let state = state.clone();
        let id = record.job_id.clone();
        tokio::spawn(async move {
            state.jobs.mark_running(&id);
            let downloader = match Downloader::with_clock(
                state.config.fetch_policy.clone(),
                state.clock.clone(),
            ) {
                Ok(d) => d,
                Err(e) => {
                    state
                        .jobs
                        .finish(&id, Default::default(), Some(e.to_string()));
                    return;
                }
            };
            if let Err(e) = state
                .store
                .ensure_company(&Company::from_slug(slug.clone()))
            {
                state
                    .jobs
                    .finish(&id, Default::default(), Some(e.to_string()));
                return;
            }
            let mut sink = StoreSink::new(&state.store, slug);
            match run_crawl(&plan, &downloader, &mut sink).await {
                Ok(summary) => state.jobs.finish(&id, summary, None),
                Err(f) => {
                    tracing::warn!("crawl job {id} failed: {}", f.error);
                    state.jobs.finish(&id, f.summary, Some(f.error.to_string()))
                }
            }
        });
    }
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_job(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<CrawlJobRecord>, ApiError> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::UnknownJob, format!("unknown job {id:?}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyListing {
    #[serde(flatten)]
    pub company: Company,
    pub counts: ClassificationCounts,
}

async fn list_companies(
    State(state): State<Shared>,
) -> Result<Json<Vec<CompanyListing>>, ApiError> {
    let mut out = Vec::new();
    for company in state.store.companies() {
        let counts = state.store.classification_counts(&company.slug)?;
        out.push(CompanyListing { company, counts });
    }
    Ok(Json(out))
}

/// A review as shown in the review table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub description: String,
    pub classification: ReviewClassification,
    pub posted_date: NaiveDate,
    pub source_url: String,
}

impl From<&Review> for ReviewRow {
    fn from(r: &Review) -> Self {
        ReviewRow {
            description: r.description().to_owned(),
            classification: r.classification(),
            posted_date: r.posted_date(),
            source_url: r.source_url().to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPageBody {
    pub items: Vec<ReviewRow>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
}

fn parse_paging(q: &HashMap<String, String>) -> Result<(ReviewFilter, usize, usize), ApiError> {
    let bad = |m: String| ApiError::new(ErrorCode::BadPaging, m);
    let number = |key: &str, default: usize| match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| bad(format!("{key} must be a non-negative integer, got {v:?}"))),
    };
    let offset = number("offset", 0)?;
    let limit = number("limit", DEFAULT_PAGE_LIMIT)?;
    if !(1..=MAX_PAGE_LIMIT).contains(&limit) {
        return Err(bad(format!("limit must be in 1..={MAX_PAGE_LIMIT}")));
    }
    let bad_req =
        |e: reputex_core::DomainError| ApiError::new(ErrorCode::BadRequest, e.to_string());
    let classification = match q.get("classification").map(String::as_str) {
        None | Some("") => None,
        Some(c) => Some(parse_classification(c).map_err(bad_req)?),
    };
    let date = |key: &str| match q.get(key).map(String::as_str) {
        None | Some("") => Ok(None),
        Some(d) => parse_review_date(d).map(Some).map_err(bad_req),
    };
    let filter = ReviewFilter {
        classification,
        from: date("from")?,
        to: date("to")?,
    };
    Ok((filter, offset, limit))
}

async fn list_reviews(
    State(state): State<Shared>,
    Path(slug): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<ReviewPageBody>, ApiError> {
    let slug = parse_slug(&slug)?;
    let (filter, offset, limit) = parse_paging(&q)?;
    let page = state.store.list_reviews(&slug, &filter, offset, limit)?;
    Ok(Json(ReviewPageBody {
        items: page.items.iter().map(ReviewRow::from).collect(),
        total: page.total,
        offset: page.offset,
        limit: page.limit,
    }))
}

/// Optional overrides of the report defaults.
#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsRequest {
    #[serde(rename = "K", alias = "topics")]
    pub topics: Option<usize>,
    pub words: Option<usize>,
    pub min_prob: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
}

impl TopicsRequest {
    pub fn parameters(&self) -> ReportParameters {
        let mut p = ReportParameters::with_topics(self.topics.unwrap_or(5));
        if let Some(w) = self.words {
            p.words_per_topic = w;
        }
        if let Some(m) = self.min_prob {
            p.min_prob = m;
        }
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(b) = self.beta {
            p.beta = b;
        }
        if let Some(i) = self.iterations {
            p.iterations = i;
        }
        if let Some(s) = self.seed {
            p.seed = s;
        }
        p
    }
}

async fn run_topics(
    State(state): State<Shared>,
    Path(slug): Path<String>,
    body: Bytes,
) -> Result<Json<StoredReport>, ApiError> {
    let slug = parse_slug(&slug)?;
    let req: TopicsRequest = parse_body(&body)?;
    let params = req.parameters();
    let job_state = state.clone();
    tokio::task::spawn_blocking(move || {
        let report = model_company(
            &job_state.store,
            &slug,
            &params,
            &job_state.config.stopwords,
        )?;
        job_state.store.save_report(&report)?;
        Ok(Json(report))
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

async fn latest_topics(
    State(state): State<Shared>,
    Path(slug): Path<String>,
) -> Result<Json<StoredReport>, ApiError> {
    let slug = parse_slug(&slug)?;
    Ok(Json(state.store.load_latest_report(&slug)?))
}

async fn export(
    State(state): State<Shared>,
    Path(slug): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let slug = parse_slug(&slug)?;
    let (format, mime, ext) = match q.get("format").map(String::as_str) {
        None | Some("delimited") | Some("csv") => (
            ExportFormat::DelimitedTable,
            "text/csv; charset=utf-8",
            "csv",
        ),
        Some("structured") | Some("jsonl") => (
            ExportFormat::StructuredRecords,
            "application/x-ndjson; charset=utf-8",
            "jsonl",
        ),
        Some(other) => {
            return Err(ApiError::new(
                ErrorCode::BadRequest,
                format!("unknown export format {other:?}"),
            ))
        }
    };
    let mut buf = Vec::new();
    state.store.export_reviews(&slug, format, &mut buf)?;
    let disposition = format!("attachment; filename=\"{slug}-reviews.{ext}\"");
    Ok((
        [
            (header::CONTENT_TYPE, mime.to_owned()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        buf,
    )
        .into_response())
}

pub fn router(state: Shared) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/companies", get(list_companies))
        .route("/companies/{slug}/crawl", post(start_crawl))
        .route("/companies/{slug}/reviews", get(list_reviews))
        .route("/companies/{slug}/topics", post(run_topics))
        .route("/companies/{slug}/topics/latest", get(latest_topics))
        .route("/companies/{slug}/export", get(export))
        .route("/jobs/{id}", get(get_job))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
}

/// A service running on a background task.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.task).await;
    }
}

pub async fn start(state: Shared, addr: SocketAddr) -> Result<ServiceHandle, ServiceError> {
    let bind = |source| ServiceError::Bind { addr, source };
    let listener = TcpListener::bind(addr).await.map_err(bind)?;
    let addr = listener.local_addr().map_err(bind)?;
    let app = router(state);
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await;
    });
    Ok(ServiceHandle {
        addr,
        stop: Some(stop),
        task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn paging_defaults_and_errors() {
        let (f, off, lim) = parse_paging(&q(&[])).unwrap();
        assert_eq!(
            (f, off, lim),
            (ReviewFilter::default(), 0, DEFAULT_PAGE_LIMIT)
        );
        for bad in [
            ("limit", "0"),
            ("limit", "1001"),
            ("offset", "-1"),
            ("limit", "x"),
        ] {
            assert_eq!(
                parse_paging(&q(&[bad])).unwrap_err().code,
                ErrorCode::BadPaging
            );
        }
        let (f, _, _) = parse_paging(&q(&[("classification", "Reclamação")])).unwrap();
        assert_eq!(f.classification, Some(ReviewClassification::Complaint));
        let err = parse_paging(&q(&[("classification", "neutro")])).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadRequest);
    }

    #[test]
    fn topics_request_overrides() {
        let r: TopicsRequest = serde_json::from_str(r#"{"K": 3, "seed": 7}"#).unwrap();
        let p = r.parameters();
        assert_eq!((p.topics, p.seed, p.words_per_topic), (3, 7, 6));
        assert!((p.alpha - 50.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            TopicsRequest::default().parameters(),
            ReportParameters::default()
        );
        assert!(serde_json::from_str::<TopicsRequest>(r#"{"k": 3}"#).is_err());
    }

    #[test]
    fn error_statuses() {
        assert_eq!(ApiError::new(ErrorCode::EmptyCorpus, "x").status, 422);
        assert_eq!(ApiError::new(ErrorCode::NoReport, "x").status, 404);
        let json = serde_json::to_value(ApiError::new(ErrorCode::BadSlug, "m")).unwrap();
        assert_eq!(json["code"], "bad_slug");
    }
}
