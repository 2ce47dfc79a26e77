//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! The topic and document distributions are integrated out; the sampler
//! keeps one topic assignment per token together with three count tables:
//!
//! * `n_dk`: tokens of document `d` assigned to topic `k`
//! * `n_kw`: occurrences of term `w` assigned to topic `k`
//! * `n_k`:  tokens assigned to topic `k`
//!
//! Each token is resampled from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! where every count excludes the token being resampled. Tokens are visited
//! in a fixed document-major order and all randomness comes from a seeded
//! ChaCha8 stream, so a `(corpus, hyperparameters)` pair fully determines the
//! assignments, the point estimates and the resulting [`TopicReport`].

use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::textprep::EncodedCorpus;

pub const DEFAULT_TOPICS: usize = 5;
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;
/// Terms listed per topic.
pub const DEFAULT_WORDS_PER_TOPIC: usize = 6;
/// Terms whose within-topic probability is below this are not reported.
pub const DEFAULT_MIN_PROB: f64 = 0.02;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TopicsError {
    #[error("empty corpus: no tokens to model")]
    EmptyCorpus,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("token position ({doc}, {pos}) out of range")]
    IndexOutOfRange { doc: usize, pos: usize },
    #[error("invalid topic assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaHyperparams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaHyperparams {
    /// Defaults for `topics` topics: `alpha = 50 / topics`, `beta = 0.01`.
    pub fn with_topics(topics: usize) -> Self {
        LdaHyperparams {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            beta: DEFAULT_BETA,
            iterations: DEFAULT_ITERATIONS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<(), TopicsError> {
        let bad = |m: &str| Err(TopicsError::InvalidHyperparams(m.to_owned()));
        if self.topics == 0 {
            return bad("topic count must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        Ok(())
    }
}

impl Default for LdaHyperparams {
    fn default() -> Self {
        LdaHyperparams::with_topics(DEFAULT_TOPICS)
    }
}

/// Sampler state: assignments, count tables and the random stream.
#[derive(Clone)]
pub struct TopicModelState<'c> {
    hp: LdaHyperparams,
    corpus: &'c EncodedCorpus,
    assignments: Vec<Vec<usize>>,
    // D × K, row-major by document
    doc_topic: Vec<u32>,
    // V × K, row-major by term so one token's K counts are contiguous
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl fmt::Debug for TopicModelState<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TopicModelState")
            .field("hp", &self.hp)
            .field("documents", &self.assignments.len())
            .field("topic_total", &self.topic_total)
            .finish()
    }
}

fn check_corpus(corpus: &EncodedCorpus) -> Result<(), TopicsError> {
    if corpus.vocab_size() == 0 || corpus.total_tokens() == 0 {
        return Err(TopicsError::EmptyCorpus);
    }
    Ok(())
}

/// Assigns every token a uniformly drawn topic and builds the count tables.
pub fn init_model(
    corpus: &EncodedCorpus,
    hp: LdaHyperparams,
) -> Result<TopicModelState<'_>, TopicsError> {
    hp.validate()?;
    check_corpus(corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let k = hp.topics as u32;
    let assignments = corpus
        .documents
        .iter()
        .map(|doc| {
            doc.token_ids
                .iter()
                .map(|_| rng.random_range(0..k) as usize)
                .collect()
        })
        .collect();
    Ok(TopicModelState::build(corpus, hp, assignments, rng))
}

/// `init_model` followed by `hp.iterations` sweeps.
pub fn train(
    corpus: &EncodedCorpus,
    hp: LdaHyperparams,
) -> Result<TopicModelState<'_>, TopicsError> {
    let mut state = init_model(corpus, hp)?;
    for _ in 0..hp.iterations {
        state.gibbs_sweep();
    }
    Ok(state)
}

impl<'c> TopicModelState<'c> {
    fn build(
        corpus: &'c EncodedCorpus,
        hp: LdaHyperparams,
        assignments: Vec<Vec<usize>>,
        rng: ChaCha8Rng,
    ) -> Self {
        let k = hp.topics;
        let mut doc_topic = vec![0u32; corpus.num_documents() * k];
        let mut word_topic = vec![0u32; corpus.vocab_size() * k];
        let mut topic_total = vec![0u32; k];
        for (d, (doc, z)) in corpus.documents.iter().zip(&assignments).enumerate() {
            for (&w, &t) in doc.token_ids.iter().zip(z) {
                doc_topic[d * k + t] += 1;
                word_topic[w * k + t] += 1;
                topic_total[t] += 1;
            }
        }
        TopicModelState {
            hp,
            corpus,
            assignments,
            doc_topic,
            word_topic,
            topic_total,
            rng,
            scratch: vec![0.0; k],
        }
    }

    /// State with explicit assignments `z[d][i]`; the random stream starts
    /// from `hp.seed`.
    pub fn from_assignments(
        corpus: &'c EncodedCorpus,
        hp: LdaHyperparams,
        z: Vec<Vec<usize>>,
    ) -> Result<Self, TopicsError> {
        hp.validate()?;
        check_corpus(corpus)?;
        if z.len() != corpus.num_documents() {
            return Err(TopicsError::InvalidAssignment(format!(
                "{} assignment rows for {} documents",
                z.len(),
                corpus.num_documents()
            )));
        }
        for (d, (row, doc)) in z.iter().zip(&corpus.documents).enumerate() {
            if row.len() != doc.len() {
                return Err(TopicsError::InvalidAssignment(format!(
                    "document {d} has {} tokens but {} assignments",
                    doc.len(),
                    row.len()
                )));
            }
            if let Some(&t) = row.iter().find(|&&t| t >= hp.topics) {
                return Err(TopicsError::InvalidAssignment(format!(
                    "topic {t} in document {d} is not below {}",
                    hp.topics
                )));
            }
        }
        let rng = ChaCha8Rng::seed_from_u64(hp.seed);
        Ok(TopicModelState::build(corpus, hp, z, rng))
    }

    pub fn hyperparams(&self) -> &LdaHyperparams {
        &self.hp
    }

    pub fn corpus(&self) -> &'c EncodedCorpus {
        self.corpus
    }

    pub fn num_topics(&self) -> usize {
        self.hp.topics
    }

    /// Topic assignments, `z()[d][i]` for token `i` of document `d`.
    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    /// `n_dk` for document `d`, one entry per topic.
    pub fn doc_topic_counts(&self, d: usize) -> &[u32] {
        let k = self.hp.topics;
        &self.doc_topic[d * k..(d + 1) * k]
    }

    /// `n_kw` for topic `k`, one entry per term.
    pub fn topic_word_counts(&self, k: usize) -> Vec<u32> {
        let kk = self.hp.topics;
        (0..self.corpus.vocab_size())
            .map(|w| self.word_topic[w * kk + k])
            .collect()
    }

    /// `n_k`, one entry per topic.
    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_total
    }

    /// Unnormalized conditional weights for a token of term `w` in document
    /// `d`. `exclude` names the topic whose counts still include the token.
    fn conditional_weights(&self, d: usize, w: usize, exclude: Option<usize>, out: &mut [f64]) {
        let k = self.hp.topics;
        let (alpha, beta) = (self.hp.alpha, self.hp.beta);
        let v_beta = self.corpus.vocab_size() as f64 * beta;
        let nd = &self.doc_topic[d * k..(d + 1) * k];
        let nw = &self.word_topic[w * k..(w + 1) * k];
        for t in 0..k {
            let own = u32::from(exclude == Some(t));
            let ndk = f64::from(nd[t] - own);
            let nkw = f64::from(nw[t] - own);
            let nk = f64::from(self.topic_total[t] - own);
            out[t] = (ndk + alpha) * (nkw + beta) / (nk + v_beta);
        }
    }

    /// Probability of each topic for token `i` of document `d`, given every
    /// other assignment. Does not modify the state.
    pub fn full_conditional(&self, d: usize, i: usize) -> Result<Vec<f64>, TopicsError> {
        let out_of_range = TopicsError::IndexOutOfRange { doc: d, pos: i };
        let doc = self.corpus.documents.get(d).ok_or(out_of_range.clone())?;
        let &w = doc.token_ids.get(i).ok_or(out_of_range)?;
        let mut p = vec![0.0; self.hp.topics];
        self.conditional_weights(d, w, Some(self.assignments[d][i]), &mut p);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Ok(p)
    }

    /// Resamples every token once, in document-major order.
    pub fn gibbs_sweep(&mut self) {
        let k = self.hp.topics;
        let corpus = self.corpus;
        let mut weights = std::mem::take(&mut self.scratch);
        for (d, doc) in corpus.documents.iter().enumerate() {
            for (i, &w) in doc.token_ids.iter().enumerate() {
                let old = self.assignments[d][i];
                self.remove_token(d, w, old);
                self.conditional_weights(d, w, None, &mut weights);
                let new = sample_index(&weights[..k], &mut self.rng);
                self.assignments[d][i] = new;
                self.add_token(d, w, new);
            }
        }
        self.scratch = weights;
    }

    fn remove_token(&mut self, d: usize, w: usize, t: usize) {
        let k = self.hp.topics;
        self.doc_topic[d * k + t] -= 1;
        self.word_topic[w * k + t] -= 1;
        self.topic_total[t] -= 1;
    }

    fn add_token(&mut self, d: usize, w: usize, t: usize) {
        let k = self.hp.topics;
        self.doc_topic[d * k + t] += 1;
        self.word_topic[w * k + t] += 1;
        self.topic_total[t] += 1;
    }

    /// Topic-term point estimates, `φ[k][w] = (n_kw + β) / (n_k + V·β)`.
    pub fn phi(&self) -> Array2<f64> {
        let (k, v) = (self.hp.topics, self.corpus.vocab_size());
        let beta = self.hp.beta;
        let v_beta = v as f64 * beta;
        Array2::from_shape_fn((k, v), |(t, w)| {
            (f64::from(self.word_topic[w * k + t]) + beta)
                / (f64::from(self.topic_total[t]) + v_beta)
        })
    }

    /// Document-topic point estimates, `θ[d][k] = (n_dk + α) / (N_d + K·α)`.
    pub fn theta(&self) -> Array2<f64> {
        let k = self.hp.topics;
        let alpha = self.hp.alpha;
        let k_alpha = k as f64 * alpha;
        Array2::from_shape_fn((self.corpus.num_documents(), k), |(d, t)| {
            let n_d = self.corpus.documents[d].len() as f64;
            (f64::from(self.doc_topic[d * k + t]) + alpha) / (n_d + k_alpha)
        })
    }

    /// Collapsed log joint `log P(w, z | α, β)`.
    pub fn log_joint(&self) -> f64 {
        let (k, v) = (self.hp.topics, self.corpus.vocab_size());
        let (alpha, beta) = (self.hp.alpha, self.hp.beta);
        let (kf, vf) = (k as f64, v as f64);

        let mut words = kf * (ln_gamma(vf * beta) - vf * ln_gamma(beta));
        for t in 0..k {
            for w in 0..v {
                words += ln_gamma(f64::from(self.word_topic[w * k + t]) + beta);
            }
            words -= ln_gamma(f64::from(self.topic_total[t]) + vf * beta);
        }

        let docs = self.corpus.num_documents() as f64;
        let mut topics = docs * (ln_gamma(kf * alpha) - kf * ln_gamma(alpha));
        for (d, doc) in self.corpus.documents.iter().enumerate() {
            for &n in self.doc_topic_counts(d) {
                topics += ln_gamma(f64::from(n) + alpha);
            }
            topics -= ln_gamma(doc.len() as f64 + kf * alpha);
        }
        words + topics
    }

    /// The `words` most probable terms of each topic, dropping any below
    /// `min_prob`.
    pub fn top_terms(&self, words: usize, min_prob: f64) -> TopicReport {
        report_from_phi(&self.phi(), self.corpus.vocabulary.terms(), words, min_prob)
    }
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (t, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return t;
        }
    }
    // u can round up to `total`; fall back to the last topic with mass.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermProbability {
    pub term: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicTerms {
    pub terms: Vec<TermProbability>,
}

/// Most probable terms per topic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicReport {
    pub topics: Vec<TopicTerms>,
}

impl TopicReport {
    /// One row per topic: index followed by `term probability` pairs with
    /// four decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::from("topic\tterms\n");
        for (k, topic) in self.topics.iter().enumerate() {
            out.push_str(&k.to_string());
            for tp in &topic.terms {
                out.push_str(&format!("\t{} {:.4}", tp.term, tp.probability));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds a report from a topic-term matrix.
///
/// Each row is ranked by probability (ties broken by ascending term id),
/// truncated to `words` entries, and then stripped of entries below
/// `min_prob`, so a topic may list fewer than `words` terms.
pub fn report_from_phi<S: AsRef<str>>(
    phi: &Array2<f64>,
    terms: &[S],
    words: usize,
    min_prob: f64,
) -> TopicReport {
    let topics = phi
        .rows()
        .into_iter()
        .map(|row| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            TopicTerms {
                terms: ids
                    .into_iter()
                    .take(words)
                    .filter(|&w| row[w] >= min_prob)
                    .map(|w| TermProbability {
                        term: terms[w].as_ref().to_owned(),
                        probability: row[w],
                    })
                    .collect(),
            }
        })
        .collect();
    TopicReport { topics }
}
