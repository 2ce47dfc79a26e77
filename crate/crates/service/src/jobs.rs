use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use reputex_core::CompanySlug;
use reputex_crawl::CrawlSummary;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlJobRecord {
    pub job_id: String,
    pub company_slug: CompanySlug,
    pub state: JobState,
    pub summary: Option<CrawlSummary>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Default)]
struct Table {
    next_id: u64,
    jobs: HashMap<String, CrawlJobRecord>,
    // company -> its non-terminal job
    active: HashMap<CompanySlug, String>,
}

/// Crawl jobs by id, with at most one unfinished job per company.
#[derive(Default)]
pub struct JobRegistry {
    table: Mutex<Table>,
}

impl JobRegistry {
    /// Returns the company's unfinished job if there is one (`false`), or a
    /// fresh `Queued` job (`true`).
    pub fn start_or_existing(&self, slug: &CompanySlug) -> (CrawlJobRecord, bool) {
        let mut t = self.table.lock().unwrap();
        if let Some(id) = t.active.get(slug) {
            return (t.jobs[id].clone(), false);
        }
        t.next_id += 1;
        let job_id = format!("job-{}", t.next_id);
        let record = CrawlJobRecord {
            job_id: job_id.clone(),
            company_slug: slug.clone(),
            state: JobState::Queued,
            summary: None,
            error: None,
            created_at: Utc::now(),
            finished_at: None,
        };
        t.jobs.insert(job_id.clone(), record.clone());
        t.active.insert(slug.clone(), job_id);
        (record, true)
    }

    pub fn get(&self, id: &str) -> Option<CrawlJobRecord> {
        self.table.lock().unwrap().jobs.get(id).cloned()
    }

    pub fn mark_running(&self, id: &str) {
        let mut t = self.table.lock().unwrap();
        if let Some(job) = t.jobs.get_mut(id) {
            debug_assert_eq!(job.state, JobState::Queued);
            job.state = JobState::Running;
        }
    }

    /// Moves a job to `Done` or `Failed` and releases its company.
    pub fn finish(&self, id: &str, summary: CrawlSummary, error: Option<String>) {
        let mut t = self.table.lock().unwrap();
        let Some(job) = t.jobs.get_mut(id) else {
            return;
        };
        debug_assert!(!job.state.is_terminal());
        job.state = if error.is_some() {
            JobState::Failed
        } else {
            JobState::Done
        };
        job.summary = Some(summary);
        job.error = error;
        job.finished_at = Some(Utc::now());
        let slug = job.company_slug.clone();
        t.active.remove(&slug);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_active_job_per_company() {
        let reg = JobRegistry::default();
        let a = CompanySlug::parse("a").unwrap();
        let b = CompanySlug::parse("b").unwrap();
        let (j1, fresh) = reg.start_or_existing(&a);
        assert!(fresh);
        assert_eq!(j1.state, JobState::Queued);
        let (j2, fresh) = reg.start_or_existing(&a);
        assert!(!fresh);
        assert_eq!(j1.job_id, j2.job_id);
        assert_ne!(reg.start_or_existing(&b).0.job_id, j1.job_id);

        reg.mark_running(&j1.job_id);
        assert_eq!(reg.get(&j1.job_id).unwrap().state, JobState::Running);
        reg.finish(&j1.job_id, CrawlSummary::default(), None);
        let done = reg.get(&j1.job_id).unwrap();
        assert_eq!(done.state, JobState::Done);
        assert!(done.finished_at.is_some());
        let (j3, fresh) = reg.start_or_existing(&a);
        assert!(fresh);
        assert_ne!(j3.job_id, j1.job_id);
    }

    #[test]
    fn failure_keeps_partial_summary() {
        let reg = JobRegistry::default();
        let (j, _) = reg.start_or_existing(&CompanySlug::parse("a").unwrap());
        reg.mark_running(&j.job_id);
        let partial = CrawlSummary {
            pages_fetched: 2,
            reviews_extracted: 50,
            warnings: vec![],
        };
        reg.finish(&j.job_id, partial.clone(), Some("HTTP status 500".into()));
        let f = reg.get(&j.job_id).unwrap();
        assert_eq!(f.state, JobState::Failed);
        assert_eq!(f.summary, Some(partial));
        assert!(reg.get("job-99").is_none());
    }
}
