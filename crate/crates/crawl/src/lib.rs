//! Review listing crawler and the fixture site it is tested against.

pub mod crawler;
pub mod fixture;

pub use crawler::{
    parse_review_listing, plan_crawl, run_crawl, CrawlError, CrawlFailure, CrawlPlan, CrawlSummary,
    Downloader, FetchLogEntry, FetchPolicy, PolitenessClock, ReviewSink, StoreSink,
};
pub use fixture::{generate_site, serve_fixture, FixtureSite, FixtureSpec};
