//! Sampler checks against the brute-force oracles in `reputex-testkit`.

use proptest::prelude::*;
use reputex_core::textprep::EncodedCorpus;
use reputex_core::topics::{init_model, train, LdaHyperparams, TopicModelState};
use reputex_testkit::{
    greedy_match, log_joint_by_urn, planted_corpus, random_corpus, recount, EnumeratedJoint, Prior,
};

fn corpus(vocab: usize, docs: &[Vec<usize>]) -> EncodedCorpus {
    EncodedCorpus::from_token_ids((0..vocab).map(|w| format!("w{w}")).collect(), docs.to_vec())
}

fn prior_of(hp: &LdaHyperparams, vocab: usize) -> Prior {
    Prior {
        topics: hp.topics,
        vocab,
        alpha: hp.alpha,
        beta: hp.beta,
    }
}

fn assert_counts_match(state: &TopicModelState<'_>, docs: &[Vec<usize>], vocab: usize) {
    let k = state.num_topics();
    let (ndk, nkw, nk) = recount(docs, state.assignments(), k, vocab);
    for (d, row) in ndk.iter().enumerate() {
        assert_eq!(state.doc_topic_counts(d), row.as_slice());
        assert_eq!(row.iter().sum::<u32>() as usize, docs[d].len());
    }
    for (t, row) in nkw.iter().enumerate() {
        assert_eq!(&state.topic_word_counts(t), row);
        assert_eq!(row.iter().sum::<u32>(), state.topic_totals()[t]);
    }
    assert_eq!(state.topic_totals(), nk.as_slice());
    let total: usize = docs.iter().map(Vec::len).sum();
    assert_eq!(state.topic_totals().iter().sum::<u32>() as usize, total);
    assert!(state.assignments().iter().flatten().all(|&t| t < k));
}

#[test]
fn conditional_matches_enumeration_small_instance() {
    // D=2, N=5, V=3, K=2
    let docs = vec![vec![0, 1, 1], vec![2, 0]];
    let hp = LdaHyperparams {
        topics: 2,
        alpha: 0.4,
        beta: 0.25,
        iterations: 0,
        seed: 0,
    };
    let c = corpus(3, &docs);
    let oracle = EnumeratedJoint::new(&docs, prior_of(&hp, 3));
    assert_eq!(oracle.len(), 32);
    let mut worst = 0.0f64;
    for z in oracle.assignments() {
        let state = TopicModelState::from_assignments(&c, hp, z.clone()).unwrap();
        for (d, doc) in docs.iter().enumerate() {
            for i in 0..doc.len() {
                let got = state.full_conditional(d, i).unwrap();
                let want = oracle.conditional(z, d, i);
                for (g, w) in got.iter().zip(&want) {
                    worst = worst.max((g - w).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst}");
}

#[test]
fn log_joint_matches_urn_on_tiny_instance() {
    // D=1, N=2, V=2, K=2
    let docs = vec![vec![0, 1]];
    let hp = LdaHyperparams {
        topics: 2,
        alpha: 0.5,
        beta: 0.5,
        iterations: 0,
        seed: 0,
    };
    let c = corpus(2, &docs);
    for z in [
        vec![vec![0, 0]],
        vec![vec![0, 1]],
        vec![vec![1, 0]],
        vec![vec![1, 1]],
    ] {
        let s = TopicModelState::from_assignments(&c, hp, z.clone()).unwrap();
        let want = log_joint_by_urn(&docs, &z, prior_of(&hp, 2));
        assert!((s.log_joint() - want).abs() < 1e-10, "{z:?}");
    }
}

#[test]
fn permuting_topic_labels() {
    let docs = random_corpus(11, 6, 8, 5);
    let hp = LdaHyperparams {
        topics: 3,
        alpha: 0.3,
        beta: 0.2,
        iterations: 5,
        seed: 9,
    };
    let c = corpus(5, &docs);
    let s = train(&c, hp).unwrap();
    let perm = [2, 0, 1];
    let z: Vec<Vec<usize>> = s
        .assignments()
        .iter()
        .map(|row| row.iter().map(|&t| perm[t]).collect())
        .collect();
    let p = TopicModelState::from_assignments(&c, hp, z).unwrap();
    let (a, b) = (s.log_joint(), p.log_joint());
    assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
    let (phi_s, phi_p) = (s.phi(), p.phi());
    for (t, &q) in perm.iter().enumerate() {
        assert_eq!(phi_s.row(t), phi_p.row(q));
    }
}

#[test]
fn phi_theta_rows_renormalize() {
    let docs = random_corpus(5, 12, 10, 7);
    let c = corpus(7, &docs);
    let hp = LdaHyperparams {
        iterations: 3,
        ..LdaHyperparams::with_topics(4)
    };
    let s = train(&c, hp).unwrap();
    for m in [s.phi(), s.theta()] {
        for row in m.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            for x in row {
                assert!((x / sum - x).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn planted_topics_separate() {
    let planted = planted_corpus(1, 2, 10, 200, 20);
    let c = EncodedCorpus::from_token_ids(planted.terms.clone(), planted.docs.clone());
    let hp = LdaHyperparams {
        iterations: 200,
        seed: 7,
        ..LdaHyperparams::with_topics(2)
    };
    let s = train(&c, hp).unwrap();
    let report = s.top_terms(6, 0.0);
    let top: Vec<Vec<usize>> = report
        .topics
        .iter()
        .map(|t| {
            t.terms
                .iter()
                .map(|tp| c.vocabulary.id(&tp.term).unwrap())
                .collect()
        })
        .collect();
    for (_, _, frac) in greedy_match(&top, &planted.topic_terms) {
        assert!(frac >= 0.95, "{frac}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditional_normalized_and_oracle_equal(
        seed in any::<u64>(),
        k in 1usize..=3,
        v in 1usize..=4,
        alpha in 0.05f64..5.0,
        beta in 0.05f64..5.0,
    ) {
        // keep K^N ≤ 4096
        let docs = random_corpus(seed, 3, 2, v);
        let n: usize = docs.iter().map(Vec::len).sum();
        prop_assume!(n > 0 && k.pow(n as u32) <= 4096);
        let hp = LdaHyperparams { topics: k, alpha, beta, iterations: 0, seed };
        let c = corpus(v, &docs);
        let oracle = EnumeratedJoint::new(&docs, prior_of(&hp, v));
        let s = init_model(&c, hp).unwrap();
        let z = s.assignments().to_vec();
        for (d, doc) in docs.iter().enumerate() {
            for i in 0..doc.len() {
                let p = s.full_conditional(d, i).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|&x| x >= 0.0));
                for (g, w) in p.iter().zip(oracle.conditional(&z, d, i)) {
                    prop_assert!((g - w).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn counts_conserved_through_sweeps(seed in any::<u64>(), k in 1usize..=6) {
        let docs = random_corpus(seed, 8, 12, 9);
        let v = 9;
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let c = corpus(v, &docs);
        let hp = LdaHyperparams { seed, ..LdaHyperparams::with_topics(k) };
        let mut s = init_model(&c, hp).unwrap();
        assert_counts_match(&s, &docs, v);
        for _ in 0..5 {
            s.gibbs_sweep();
            assert_counts_match(&s, &docs, v);
        }
    }
}
