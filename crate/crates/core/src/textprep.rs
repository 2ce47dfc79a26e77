//! Bag-of-words preparation: tokenization, stopword removal and the
//! integer-indexed vocabulary the sampler works on.
//!
//! One review is one document. Documents that lose every token stay in the
//! corpus (empty) so that document `i` always corresponds to review `i`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

use crate::domain::{fold_accents_lower, Review};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_pt.txt");

#[derive(Debug, Error)]
pub enum TextPrepError {
    #[error("empty vocabulary: no term survived tokenization and the min-count threshold")]
    EmptyVocabulary,
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("min_token_length must be at least 1")]
    InvalidTokenLength,
    #[error("reading stopword list {path}: {source}")]
    Stopwords {
        path: String,
        source: std::io::Error,
    },
}

/// Parses a stopword list: one term per line, `#` starts a comment line.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn bundled_stopwords() -> HashSet<String> {
    parse_stopwords(BUNDLED_STOPWORDS)
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>, TextPrepError> {
    let path = path.as_ref();
    std::fs::read_to_string(path)
        .map(|t| parse_stopwords(&t))
        .map_err(|source| TextPrepError::Stopwords {
            path: path.display().to_string(),
            source,
        })
}

#[derive(Debug, Clone)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_length: usize,
    pub stopwords: HashSet<String>,
    pub keep_accents: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_length: 2,
            stopwords: bundled_stopwords(),
            keep_accents: true,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), TextPrepError> {
        if self.min_token_length == 0 {
            return Err(TextPrepError::InvalidTokenLength);
        }
        Ok(())
    }

    fn is_stopword(&self, token: &str) -> bool {
        let lower = token.to_lowercase();
        if self.stopwords.contains(&lower) {
            return true;
        }
        // With accents stripped, "é" must still match the stopword "é".
        !self.keep_accents
            && self
                .stopwords
                .iter()
                .any(|s| fold_accents_lower(s) == lower)
    }
}

/// Splits `text` into content tokens.
///
/// Tokens are maximal runs of alphanumeric characters. Digit-only tokens,
/// tokens shorter than `min_token_length` characters and stopwords are
/// dropped.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().all(|c| c.is_numeric()))
        .map(|t| {
            let t = if config.keep_accents {
                t.to_owned()
            } else {
                fold_accents_lower(t)
            };
            if config.lowercase {
                t.to_lowercase()
            } else {
                t
            }
        })
        .filter(|t| t.chars().count() >= config.min_token_length)
        .filter(|t| !config.is_stopword(t))
        .collect()
}

/// Distinct terms with dense ids `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Corpus occurrence count of term `id`.
    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Builds a vocabulary from tokenized documents, in first-appearance order,
/// keeping terms that occur at least `min_count` times.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_count: u64,
) -> Result<Vocabulary, TextPrepError> {
    if min_count == 0 {
        return Err(TextPrepError::InvalidMinCount);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut totals: HashMap<&str, u64> = HashMap::new();
    for tok in docs.iter().flatten() {
        let tok = tok.as_ref();
        let n = totals.entry(tok).or_insert_with(|| {
            order.push(tok);
            0
        });
        *n += 1;
    }

    let mut vocab = Vocabulary {
        terms: Vec::new(),
        index: HashMap::new(),
        counts: Vec::new(),
    };
    for term in order {
        let n = totals[term];
        if n >= min_count {
            vocab.index.insert(term.to_owned(), vocab.terms.len());
            vocab.terms.push(term.to_owned());
            vocab.counts.push(n);
        }
    }
    if vocab.is_empty() {
        return Err(TextPrepError::EmptyVocabulary);
    }
    Ok(vocab)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDocument {
    /// Position of the source review in the encoder's input.
    pub review_index: usize,
    pub token_ids: Vec<usize>,
}

impl EncodedDocument {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<EncodedDocument>,
}

impl EncodedCorpus {
    /// Corpus from already-encoded documents; every id must be below the
    /// vocabulary size. Term counts are recomputed from the documents.
    pub fn from_token_ids(terms: Vec<String>, docs: Vec<Vec<usize>>) -> Self {
        let mut counts = vec![0u64; terms.len()];
        for &id in docs.iter().flatten() {
            assert!(id < terms.len(), "token id {id} out of range");
            counts[id] += 1;
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        EncodedCorpus {
            vocabulary: Vocabulary {
                terms,
                index,
                counts,
            },
            documents: docs
                .into_iter()
                .enumerate()
                .map(|(review_index, token_ids)| EncodedDocument {
                    review_index,
                    token_ids,
                })
                .collect(),
        }
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(EncodedDocument::len).sum()
    }

    /// Decodes document `d` back to its terms.
    pub fn decode(&self, d: usize) -> Vec<&str> {
        self.documents[d]
            .token_ids
            .iter()
            .map(|&id| self.vocabulary.terms[id].as_str())
            .collect()
    }
}

/// Tokenizes every review description and encodes the corpus.
pub fn encode_texts<S: AsRef<str>>(
    texts: &[S],
    config: &TokenizerConfig,
    min_count: u64,
) -> Result<EncodedCorpus, TextPrepError> {
    config.validate()?;
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref(), config)).collect();
    let vocabulary = build_vocabulary(&tokenized, min_count)?;
    let documents = tokenized
        .iter()
        .enumerate()
        .map(|(review_index, toks)| EncodedDocument {
            review_index,
            token_ids: toks.iter().filter_map(|t| vocabulary.id(t)).collect(),
        })
        .collect();
    Ok(EncodedCorpus {
        vocabulary,
        documents,
    })
}

pub fn encode_corpus(
    reviews: &[Review],
    config: &TokenizerConfig,
    min_count: u64,
) -> Result<EncodedCorpus, TextPrepError> {
    let texts: Vec<&str> = reviews.iter().map(Review::description).collect();
    encode_texts(&texts, config, min_count)
}
