//! The `reputex` command line.
//!
//! Every subcommand is a thin wrapper over library calls so that its output
//! can be compared against the same calls made in process. Exit codes are
//! `0` on success, `1` on an operational failure and `2` on a usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reputex_core::store::{ExportFormat, ReportParameters};
use reputex_core::textprep::{bundled_stopwords, load_stopwords};
use reputex_core::{
    model_company, Company, CompanySlug, ModelError, ReviewStore, StoredReport, TopicReport,
};
use reputex_crawl::fixture::FixtureSpec;
use reputex_crawl::{
    generate_site, plan_crawl, run_crawl, serve_fixture, Downloader, FetchPolicy, StoreSink,
};
use reputex_service::{AppState, ServiceConfig};
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8081";

#[derive(Debug, Parser)]
#[command(
    name = "reputex",
    version,
    about = "Crawl, store and topic-model company reviews"
)]
pub struct Cli {
    /// Store directory.
    #[arg(
        long,
        global = true,
        env = "REPUTEX_STORE",
        default_value = "reputex-store"
    )]
    pub store: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Tables for reading; a delimited table for `export`.
    #[value(alias = "table", alias = "delimited")]
    Human,
    /// One JSON record per line.
    #[value(alias = "records")]
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl a company's review listing into the store.
    Crawl {
        slug: String,
        #[command(flatten)]
        fetch: FetchArgs,
        /// Stop after this many reviews.
        #[arg(long)]
        max_reviews: Option<usize>,
    },
    /// Train a topic model on a company's stored reviews and save the report.
    Model {
        slug: String,
        #[command(flatten)]
        topics: TopicArgs,
    },
    /// Print the latest saved report.
    Report { slug: String },
    /// Write every stored review of a company.
    Export {
        slug: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[command(flatten)]
        fetch: FetchArgs,
        /// Directory of static files served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Serve a generated fixture review site.
    FixtureServe {
        #[arg(long, default_value_t = 8081)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// JSON fixture spec with a `companies` list.
        #[arg(long)]
        companies: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct FetchArgs {
    #[arg(long, env = "REPUTEX_BASE_URL", default_value = DEFAULT_BASE_URL)]
    pub base_url: String,
    #[arg(long, default_value_t = 1000)]
    pub min_delay_ms: u64,
    #[arg(long)]
    pub user_agent: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout_ms: u64,
}

impl FetchArgs {
    pub fn policy(&self) -> FetchPolicy {
        let mut p = FetchPolicy {
            min_delay: Duration::from_millis(self.min_delay_ms),
            max_retries: self.max_retries,
            timeout: Duration::from_millis(self.timeout_ms),
            ..FetchPolicy::default()
        };
        if let Some(ua) = &self.user_agent {
            p.user_agent = ua.clone();
        }
        p
    }
}

#[derive(Debug, Clone, Args)]
pub struct TopicArgs {
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub topics: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub words: u64,
    #[arg(long, default_value_t = 0.02)]
    pub min_prob: f64,
    /// Defaults to 50 / topics.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Stopword file, one term per line; the bundled list when absent.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_count: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_token_length: u64,
}

impl TopicArgs {
    pub fn parameters(&self) -> ReportParameters {
        let mut p = ReportParameters::with_topics(self.topics as usize);
        p.words_per_topic = self.words as usize;
        p.min_prob = self.min_prob;
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        p.beta = self.beta;
        p.iterations = self.iterations;
        p.seed = self.seed;
        p.min_count = self.min_count;
        p.min_token_length = self.min_token_length as usize;
        p
    }
}

/// A report without its creation time: what `model --format structured`
/// prints, so equal inputs print equal bytes.
#[derive(Debug, Serialize)]
pub struct ReportPayload<'a> {
    pub company_slug: &'a CompanySlug,
    pub parameters: &'a ReportParameters,
    pub report: &'a TopicReport,
}

impl<'a> From<&'a StoredReport> for ReportPayload<'a> {
    fn from(r: &'a StoredReport) -> Self {
        ReportPayload {
            company_slug: &r.company_slug,
            parameters: &r.parameters,
            report: &r.report,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Operational(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Operational(_) => EXIT_FAILURE,
        }
    }
}

fn op(e: impl ToString) -> Failure {
    Failure::Operational(e.to_string())
}

fn slug(raw: &str) -> Result<CompanySlug, Failure> {
    CompanySlug::parse(raw).map_err(|e| Failure::Usage(e.to_string()))
}

fn open_store(cli: &Cli) -> Result<ReviewStore, Failure> {
    ReviewStore::open(&cli.store).map_err(op)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return EXIT_USAGE;
            }
            // --help and --version
            let _ = write!(out, "{text}");
            return EXIT_OK;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Operational(m)) = &f;
            let _ = writeln!(err, "error: {m}");
            f.code()
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(op)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Crawl {
            slug: raw,
            fetch,
            max_reviews,
        } => cmd_crawl(cli, &slug(raw)?, fetch, *max_reviews, out),
        Command::Model { slug: raw, topics } => cmd_model(cli, &slug(raw)?, topics, out),
        Command::Report { slug: raw } => cmd_report(cli, &slug(raw)?, out),
        Command::Export {
            slug: raw,
            out: path,
        } => cmd_export(cli, &slug(raw)?, path.as_ref(), out),
        Command::Serve {
            port,
            host,
            fetch,
            static_dir,
            stopwords,
        } => cmd_serve(
            cli,
            SocketAddr::new(*host, *port),
            fetch,
            static_dir.clone(),
            stopwords.as_ref(),
            out,
        ),
        Command::FixtureServe {
            port,
            host,
            companies,
            seed,
        } => cmd_fixture_serve(SocketAddr::new(*host, *port), companies, *seed, out),
    }
}

#[derive(Debug, Serialize)]
struct CrawlLine {
    pages: usize,
    reviews: usize,
    inserted: usize,
    duplicates: usize,
    warnings: Vec<String>,
    error: Option<String>,
}

fn cmd_crawl(
    cli: &Cli,
    slug: &CompanySlug,
    fetch: &FetchArgs,
    max_reviews: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let company = Company::from_slug(slug.clone());
    let plan = plan_crawl(&company, &fetch.base_url, max_reviews)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let downloader = Downloader::new(fetch.policy()).map_err(|e| Failure::Usage(e.to_string()))?;
    let store = open_store(cli)?;
    store.ensure_company(&company).map_err(op)?;
    let mut sink = StoreSink::new(&store, slug.clone());
    let result = runtime()?.block_on(run_crawl(&plan, &downloader, &mut sink));
    let (summary, error) = match result {
        Ok(s) => (s, None),
        Err(f) => (f.summary, Some(f.error)),
    };
    let line = CrawlLine {
        pages: summary.pages_fetched,
        reviews: summary.reviews_extracted,
        inserted: sink.appended.inserted,
        duplicates: sink.appended.duplicates,
        warnings: summary.warnings,
        error: error.as_ref().map(ToString::to_string),
    };
    match cli.format {
        OutputFormat::Human => {
            writeln!(
                out,
                "pages={} reviews={} duplicates={}",
                line.pages, line.reviews, line.duplicates
            )
            .map_err(op)?;
        }
        OutputFormat::Structured => {
            writeln!(out, "{}", serde_json::to_string(&line).expect("serializes")).map_err(op)?;
        }
    }
    match error {
        None => Ok(()),
        Some(e) => Err(op(e)),
    }
}

fn stopwords(path: Option<&PathBuf>) -> Result<std::collections::HashSet<String>, Failure> {
    match path {
        Some(p) => load_stopwords(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(bundled_stopwords()),
    }
}

fn print_report(
    format: OutputFormat,
    report: &StoredReport,
    structured: impl FnOnce(&StoredReport) -> String,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    match format {
        OutputFormat::Human => {
            let p = &report.parameters;
            writeln!(
                out,
                "company={} topics={} words={} min_prob={} seed={}",
                report.company_slug, p.topics, p.words_per_topic, p.min_prob, p.seed
            )
            .map_err(op)?;
            write!(out, "{}", report.report.to_table()).map_err(op)
        }
        OutputFormat::Structured => writeln!(out, "{}", structured(report)).map_err(op),
    }
}

fn cmd_model(
    cli: &Cli,
    slug: &CompanySlug,
    args: &TopicArgs,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let params = args.parameters();
    params
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let stopwords = stopwords(args.stopwords.as_ref())?;
    let store = open_store(cli)?;
    let report = match model_company(&store, slug, &params, &stopwords) {
        Ok(r) => r,
        Err(ModelError::EmptyCorpus(_)) => return Err(op("empty corpus")),
        Err(e) => return Err(op(e)),
    };
    store.save_report(&report).map_err(op)?;
    print_report(
        cli.format,
        &report,
        |r| serde_json::to_string(&ReportPayload::from(r)).expect("serializes"),
        out,
    )
}

fn cmd_report(cli: &Cli, slug: &CompanySlug, out: &mut dyn Write) -> Result<(), Failure> {
    let store = open_store(cli)?;
    let report = store.load_latest_report(slug).map_err(op)?;
    print_report(
        cli.format,
        &report,
        |r| serde_json::to_string(r).expect("serializes"),
        out,
    )
}

fn cmd_export(
    cli: &Cli,
    slug: &CompanySlug,
    path: Option<&PathBuf>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let format = match cli.format {
        OutputFormat::Human => ExportFormat::DelimitedTable,
        OutputFormat::Structured => ExportFormat::StructuredRecords,
    };
    let store = open_store(cli)?;
    let counts = store.classification_counts(slug).map_err(op)?;
    if counts.total() == 0 {
        return Err(op(format!("no reviews stored for {slug}")));
    }
    match path {
        Some(p) => {
            store.export_to_path(slug, format, p).map_err(op)?;
        }
        None => {
            store.export_reviews(slug, format, &mut *out).map_err(op)?;
        }
    }
    Ok(())
}

async fn interrupted() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        if let Ok(mut term) = signal(SignalKind::terminate()) {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
            return;
        }
    }
    let _ = tokio::signal::ctrl_c().await;
}

fn cmd_serve(
    cli: &Cli,
    addr: SocketAddr,
    fetch: &FetchArgs,
    static_dir: Option<PathBuf>,
    stopwords_path: Option<&PathBuf>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let mut config = ServiceConfig::new(fetch.base_url.clone());
    config.fetch_policy = fetch.policy();
    config.static_dir = static_dir;
    config.stopwords = stopwords(stopwords_path)?;
    let store = Arc::new(open_store(cli)?);
    let rt = runtime()?;
    rt.block_on(async {
        let handle = reputex_service::start(AppState::new(store, config), addr)
            .await
            .map_err(op)?;
        writeln!(out, "listening on {}", handle.base_url()).map_err(op)?;
        out.flush().map_err(op)?;
        interrupted().await;
        handle.shutdown().await;
        Ok(())
    })
}

fn cmd_fixture_serve(
    addr: SocketAddr,
    spec_path: &PathBuf,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let file = File::open(spec_path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
    let mut spec: FixtureSpec = serde_json::from_reader(io::BufReader::new(file))
        .map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let site = generate_site(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let rt = runtime()?;
    rt.block_on(async {
        let server = serve_fixture(Arc::new(site), addr, Vec::new())
            .await
            .map_err(op)?;
        writeln!(out, "listening on {}", server.base_url()).map_err(op)?;
        out.flush().map_err(op)?;
        interrupted().await;
        server.shutdown().await;
        Ok(())
    })
}
