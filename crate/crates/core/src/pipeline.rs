//! Stored reviews to stored topic report, shared by the service and the CLI.

use std::collections::HashSet;

use chrono::Utc;
use thiserror::Error;

use crate::domain::CompanySlug;
use crate::store::{ReportParameters, ReviewStore, StoreError, StoredReport};
use crate::textprep::{encode_corpus, TextPrepError, TokenizerConfig};
use crate::topics::{
    train, LdaHyperparams, TopicsError, DEFAULT_MIN_PROB, DEFAULT_TOPICS, DEFAULT_WORDS_PER_TOPIC,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("empty corpus for company {0:?}")]
    EmptyCorpus(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

impl Default for ReportParameters {
    fn default() -> Self {
        ReportParameters::with_topics(DEFAULT_TOPICS)
    }
}

impl ReportParameters {
    /// Defaults with `alpha` tied to the topic count.
    pub fn with_topics(topics: usize) -> Self {
        let hp = LdaHyperparams::with_topics(topics);
        ReportParameters {
            topics,
            words_per_topic: DEFAULT_WORDS_PER_TOPIC,
            min_prob: DEFAULT_MIN_PROB,
            alpha: hp.alpha,
            beta: hp.beta,
            iterations: hp.iterations,
            seed: hp.seed,
            min_count: 1,
            min_token_length: 2,
        }
    }

    pub fn hyperparams(&self) -> LdaHyperparams {
        LdaHyperparams {
            topics: self.topics,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParameters(m.to_owned()));
        if let Err(e) = self.hyperparams().validate() {
            return Err(ModelError::InvalidParameters(e.to_string()));
        }
        if self.words_per_topic == 0 {
            return bad("words per topic must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.min_prob) {
            return bad("min_prob must lie in [0, 1]");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if self.min_token_length == 0 {
            return bad("min_token_length must be at least 1");
        }
        Ok(())
    }
}

/// Encodes every stored review of `slug`, trains and builds the report.
/// The result is not saved.
pub fn model_company(
    store: &ReviewStore,
    slug: &CompanySlug,
    params: &ReportParameters,
    stopwords: &HashSet<String>,
) -> Result<StoredReport, ModelError> {
    params.validate()?;
    let reviews = store.all_reviews(slug)?;
    let config = TokenizerConfig {
        min_token_length: params.min_token_length,
        stopwords: stopwords.clone(),
        ..TokenizerConfig::default()
    };
    let empty = || ModelError::EmptyCorpus(slug.to_string());
    let corpus = match encode_corpus(&reviews, &config, params.min_count) {
        Ok(c) => c,
        Err(TextPrepError::EmptyVocabulary) => return Err(empty()),
        Err(e) => return Err(ModelError::InvalidParameters(e.to_string())),
    };
    let state = match train(&corpus, params.hyperparams()) {
        Ok(s) => s,
        Err(TopicsError::EmptyCorpus) => return Err(empty()),
        Err(e) => return Err(ModelError::InvalidParameters(e.to_string())),
    };
    Ok(StoredReport {
        company_slug: slug.clone(),
        created_at: Utc::now(),
        parameters: params.clone(),
        report: state.top_terms(params.words_per_topic, params.min_prob),
    })
}
