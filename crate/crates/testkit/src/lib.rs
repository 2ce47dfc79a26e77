//! Test oracles for the topic sampler.
//!
//! Nothing here calls into the sampler: documents are plain `Vec<usize>` of
//! term ids and assignments plain `Vec<usize>` of topics, so the oracles stay
//! independent of the implementation they check.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    pub topics: usize,
    pub vocab: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// `log P(w, z)` of the collapsed model, computed as a Pólya urn: each token
/// multiplies in its predictive probability given the tokens before it.
/// Uses only running counts and `ln`, never the log-gamma function.
pub fn log_joint_by_urn(docs: &[Vec<usize>], z: &[Vec<usize>], prior: Prior) -> f64 {
    let Prior {
        topics: k,
        vocab: v,
        alpha,
        beta,
    } = prior;
    let mut total = 0.0;
    // document side
    for zd in z {
        let mut seen = vec![0usize; k];
        for (n, &t) in zd.iter().enumerate() {
            total += ((seen[t] as f64 + alpha) / (n as f64 + k as f64 * alpha)).ln();
            seen[t] += 1;
        }
    }
    // topic side
    let mut word_seen = vec![vec![0usize; v]; k];
    let mut topic_seen = vec![0usize; k];
    for (doc, zd) in docs.iter().zip(z) {
        for (&w, &t) in doc.iter().zip(zd) {
            total +=
                ((word_seen[t][w] as f64 + beta) / (topic_seen[t] as f64 + v as f64 * beta)).ln();
            word_seen[t][w] += 1;
            topic_seen[t] += 1;
        }
    }
    total
}

/// Every assignment of `K` topics to the tokens of `docs`, in odometer order.
pub fn all_assignments(docs: &[Vec<usize>], topics: usize) -> Vec<Vec<Vec<usize>>> {
    let n: usize = docs.iter().map(Vec::len).sum();
    let count = topics.pow(n as u32);
    (0..count)
        .map(|mut code| {
            docs.iter()
                .map(|doc| {
                    doc.iter()
                        .map(|_| {
                            let t = code % topics;
                            code /= topics;
                            t
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// The collapsed joint of every assignment, by brute-force enumeration.
pub struct EnumeratedJoint {
    prior: Prior,
    joint: HashMap<Vec<Vec<usize>>, f64>,
}

impl EnumeratedJoint {
    pub fn new(docs: &[Vec<usize>], prior: Prior) -> Self {
        let joint = all_assignments(docs, prior.topics)
            .into_iter()
            .map(|z| {
                let p = log_joint_by_urn(docs, &z, prior).exp();
                (z, p)
            })
            .collect();
        EnumeratedJoint { prior, joint }
    }

    pub fn assignments(&self) -> impl Iterator<Item = &Vec<Vec<usize>>> {
        self.joint.keys()
    }

    pub fn len(&self) -> usize {
        self.joint.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_empty()
    }

    /// `p(z_di = k | z_rest, w)` obtained by normalizing the joint over the
    /// `K` assignments that agree with `z` everywhere except `(d, i)`.
    pub fn conditional(&self, z: &[Vec<usize>], d: usize, i: usize) -> Vec<f64> {
        let mut probe = z.to_vec();
        let weights: Vec<f64> = (0..self.prior.topics)
            .map(|t| {
                probe[d][i] = t;
                self.joint[&probe]
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / sum).collect()
    }
}

/// Count tables rebuilt from scratch: `(n_dk, n_kw, n_k)`.
pub type Counts = (Vec<Vec<u32>>, Vec<Vec<u32>>, Vec<u32>);

pub fn recount(docs: &[Vec<usize>], z: &[Vec<usize>], topics: usize, vocab: usize) -> Counts {
    let mut ndk = vec![vec![0u32; topics]; docs.len()];
    let mut nkw = vec![vec![0u32; vocab]; topics];
    let mut nk = vec![0u32; topics];
    for (d, (doc, zd)) in docs.iter().zip(z).enumerate() {
        for (&w, &t) in doc.iter().zip(zd) {
            ndk[d][t] += 1;
            nkw[t][w] += 1;
            nk[t] += 1;
        }
    }
    (ndk, nkw, nk)
}

/// Random corpus of `docs` documents with up to `max_len` tokens over
/// `vocab` terms; a document may be empty.
pub fn random_corpus(seed: u64, docs: usize, max_len: usize, vocab: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len).map(|_| rng.random_range(0..vocab)).collect()
        })
        .collect()
}

/// Corpus generated from topics with disjoint vocabularies.
pub struct PlantedCorpus {
    pub docs: Vec<Vec<usize>>,
    /// Term ids of each planted topic.
    pub topic_terms: Vec<Vec<usize>>,
    pub terms: Vec<String>,
}

/// Each document draws one planted topic and then `doc_len` terms uniformly
/// from that topic's own `terms_per_topic`-term vocabulary.
pub fn planted_corpus(
    seed: u64,
    topics: usize,
    terms_per_topic: usize,
    docs: usize,
    doc_len: usize,
) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic_terms: Vec<Vec<usize>> = (0..topics)
        .map(|t| (t * terms_per_topic..(t + 1) * terms_per_topic).collect())
        .collect();
    let terms = (0..topics * terms_per_topic)
        .map(|w| format!("topic{}_term{}", w / terms_per_topic, w % terms_per_topic))
        .collect();
    let docs = (0..docs)
        .map(|d| {
            let t = d % topics;
            (0..doc_len)
                .map(|_| topic_terms[t][rng.random_range(0..terms_per_topic)])
                .collect()
        })
        .collect();
    PlantedCorpus {
        docs,
        topic_terms,
        terms,
    }
}

/// Greedily pairs inferred topics with planted ones by largest overlap of
/// `top_terms[inferred]` with the planted vocabulary. Returns
/// `(inferred, planted, fraction of top terms inside the planted vocabulary)`.
pub fn greedy_match(top_terms: &[Vec<usize>], planted: &[Vec<usize>]) -> Vec<(usize, usize, f64)> {
    let overlap = |i: usize, p: usize| {
        top_terms[i]
            .iter()
            .filter(|w| planted[p].contains(w))
            .count()
    };
    let mut pairs: Vec<(usize, usize, usize)> = (0..top_terms.len())
        .flat_map(|i| (0..planted.len()).map(move |p| (i, p, 0)))
        .map(|(i, p, _)| (i, p, overlap(i, p)))
        .collect();
    pairs.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_i = vec![false; top_terms.len()];
    let mut used_p = vec![false; planted.len()];
    let mut out = Vec::new();
    for (i, p, n) in pairs {
        if used_i[i] || used_p[p] {
            continue;
        }
        used_i[i] = true;
        used_p[p] = true;
        let frac = if top_terms[i].is_empty() {
            0.0
        } else {
            n as f64 / top_terms[i].len() as f64
        };
        out.push((i, p, frac));
    }
    out.sort_by_key(|m| m.1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form Dirichlet-multinomial for one document of one token.
    #[test]
    fn urn_single_token() {
        let prior = Prior {
            topics: 2,
            vocab: 3,
            alpha: 0.5,
            beta: 0.1,
        };
        let lj = log_joint_by_urn(&[vec![1]], &[vec![0]], prior);
        // p(z)=1/2, p(w|z)=1/3
        assert!((lj - (0.5f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn joint_sums_to_marginal() {
        // Summing the joint over every assignment and every word sequence of
        // length 2 must give 1.
        let prior = Prior {
            topics: 2,
            vocab: 2,
            alpha: 0.3,
            beta: 0.7,
        };
        let mut total = 0.0;
        for w0 in 0..2 {
            for w1 in 0..2 {
                let docs = vec![vec![w0, w1]];
                total += EnumeratedJoint::new(&docs, prior)
                    .joint
                    .values()
                    .sum::<f64>();
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn enumeration_size() {
        let docs = vec![vec![0, 1], vec![2, 0, 1]];
        assert_eq!(all_assignments(&docs, 2).len(), 32);
    }

    #[test]
    fn matching() {
        let planted = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let m = greedy_match(&[vec![3, 4, 0], vec![0, 1, 2]], &planted);
        assert_eq!(m[0], (1, 0, 1.0));
        assert_eq!(m[1].0, 0);
        assert!((m[1].2 - 2.0 / 3.0).abs() < 1e-12);
    }
}
