//! Review mining primitives: validated review records, bag-of-words text
//! preparation, LDA topic modeling by collapsed Gibbs sampling and an
//! append-only, deduplicating review store.
//!
//! The typical flow is
//!
//! ```
//! use reputex_core::textprep::{encode_texts, TokenizerConfig};
//! use reputex_core::topics::{train, LdaHyperparams};
//!
//! let texts = [
//!     "Entrega rápida, produto excelente",
//!     "Frete grátis e entrega no prazo",
//!     "Preço bom, loja excelente",
//! ];
//! let corpus = encode_texts(&texts, &TokenizerConfig::default(), 1).unwrap();
//! let hp = LdaHyperparams { iterations: 50, ..LdaHyperparams::with_topics(2) };
//! let state = train(&corpus, hp).unwrap();
//! let report = state.top_terms(6, 0.02);
//! assert_eq!(report.topics.len(), 2);
//! ```

pub mod domain;
pub mod pipeline;
pub mod store;
pub mod textprep;
pub mod topics;

pub use domain::{
    parse_classification, parse_review_date, review_key, Company, CompanySlug, DomainError, Review,
    ReviewClassification, ReviewKey,
};
pub use pipeline::{model_company, ModelError};
pub use store::{ReviewStore, StoreError, StoredReport};
pub use textprep::{EncodedCorpus, TokenizerConfig, Vocabulary};
pub use topics::{LdaHyperparams, TopicModelState, TopicReport};
