use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use convsim::data::Grades;
use convsim::embed::EmbeddingStore;
use convsim::metrics::{average_precision, mrr, ndcg_at, precision_at, recall_at};
use convsim::par::Execution;
use convsim::qpp::{sigma_scalar, sigma_vector};
use convsim::questions::rerank_by_embedding;
use convsim::retrieval::interpolate;
use convsim::selector::kendall_tau_at;
use convsim::text::{score_ql_dirichlet, InvertedIndex, LanguageModel, RankedList, Tokenizer};

const VOCAB: &[&str] = &["ant", "bee", "cat", "dog", "eel", "fox", "gnu"];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(VOCAB).prop_map(str::to_string)
}

fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    vec(vec(word(), 1..8), 1..7).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, words)| (format!("d{i}"), words.join(" ")))
            .collect()
    })
}

fn ranking() -> impl Strategy<Value = (RankedList, Grades)> {
    (
        Just((0..10).map(|i| format!("d{i}")).collect::<Vec<_>>()).prop_shuffle(),
        1usize..=8,
        btree_map((0..10usize).prop_map(|i| format!("d{i}")), 0u32..4, 0..8),
    )
        .prop_map(|(ids, n, grades)| {
            let run = RankedList::from_scores(ids.into_iter().take(n).enumerate().map(|(i, d)| (d, -(i as f64))).collect(), n);
            (run, grades)
        })
}

proptest! {
    #[test]
    fn mle_is_normalized(seqs in vec(vec(word(), 0..6), 0..4)) {
        let lm = LanguageModel::mle(&seqs);
        let total: usize = seqs.iter().map(Vec::len).sum();
        if total == 0 {
            prop_assert!(lm.is_empty());
        } else {
            prop_assert!((lm.total() - 1.0).abs() < 1e-12);
            for (t, p) in lm.iter() {
                let count = seqs.iter().flatten().filter(|w| *w == t).count();
                prop_assert!((p - count as f64 / total as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_is_normalized(a in vec(word(), 1..6), b in vec(word(), 1..6), alpha in 0.0f64..=1.0) {
        let m = interpolate(LanguageModel::mle(&[a]), LanguageModel::mle(&[b]), alpha).unwrap();
        let lm = m.to_language_model();
        prop_assert!((lm.total() - 1.0).abs() < 1e-12);
        for t in m.support() {
            prop_assert!((lm.prob(t) - m.prob(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn index_statistics(docs in corpus()) {
        let index = InvertedIndex::build(docs.clone(), Tokenizer::default(), Execution::Sequential).unwrap();
        let tokens: BTreeMap<&str, Vec<String>> = docs.iter().map(|(id, t)| (id.as_str(), convsim::text::tokenize(t))).collect();
        prop_assert_eq!(index.doc_count(), docs.len());
        prop_assert_eq!(index.collection_length(), tokens.values().map(|t| t.len() as u64).sum::<u64>());
        for w in VOCAB {
            let df = tokens.values().filter(|t| t.iter().any(|x| x == w)).count();
            let cf: usize = tokens.values().map(|t| t.iter().filter(|x| x == w).count()).sum();
            prop_assert_eq!(index.doc_freq(w), df);
            prop_assert_eq!(index.collection_count(w), cf as u64);
            for (id, t) in &tokens {
                let d = index.doc_number(id).unwrap();
                prop_assert_eq!(index.tf(w, d) as usize, t.iter().filter(|x| x == w).count());
                prop_assert_eq!(index.doc_length(d) as usize, t.len());
            }
        }
        let back = InvertedIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(back, index.clone());
        let par = InvertedIndex::build(docs, Tokenizer::default(), Execution::Parallel).unwrap();
        prop_assert_eq!(par, index);
    }

    #[test]
    fn unsmoothed_ql_matches_brute_force(docs in corpus(), query in vec(word(), 1..4)) {
        let index = InvertedIndex::build(docs.clone(), Tokenizer::default(), Execution::Sequential).unwrap();
        let q = LanguageModel::mle(&[query]);
        let run = score_ql_dirichlet(&index, &q, 0.0, docs.len()).unwrap();
        prop_assert_eq!(run.len(), docs.len());
        for (id, text) in &docs {
            let t = convsim::text::tokenize(text);
            let mut want = 0.0;
            for (w, p) in q.iter() {
                if index.collection_count(w) == 0 {
                    continue;
                }
                let tf = t.iter().filter(|x| *x == w).count();
                want += p * (tf as f64 / t.len() as f64).ln();
            }
            let got = run.entries().iter().find(|(d, _)| d == id).unwrap().1;
            prop_assert!(got == want || (got - want).abs() < 1e-12, "{} {} {}", id, got, want);
        }
    }

    #[test]
    fn metrics_bounded_and_consistent((run, grades) in ranking()) {
        for v in [mrr(&run, &grades), precision_at(&run, &grades, 3), recall_at(&run, &grades, 5),
                  average_precision(&run, &grades), ndcg_at(&run, &grades, 5)] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        let relevant: BTreeSet<&str> = grades.iter().filter(|(_, g)| **g > 0).map(|(d, _)| d.as_str()).collect();
        let all_found = relevant.iter().all(|d| run.position(d).is_some());
        let prefix = run.ids().take(relevant.len()).all(|d| relevant.contains(d));
        if !relevant.is_empty() && all_found && prefix {
            prop_assert!((average_precision(&run, &grades) - 1.0).abs() < 1e-12);
            prop_assert_eq!(mrr(&run, &grades), 1.0);
        }
        if relevant.is_empty() {
            prop_assert_eq!(mrr(&run, &grades), 0.0);
            prop_assert_eq!(ndcg_at(&run, &grades, 5), 0.0);
        }
    }

    #[test]
    fn sigma_scale_and_shift(scores in vec(-50.0f64..50.0, 1..30), c in 0.1f64..10.0, shift in -100.0f64..100.0, k in 1usize..40) {
        let base = sigma_scalar(&scores, k);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let moved: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        prop_assert!((sigma_scalar(&scaled, k) - c * base).abs() < 1e-9 * (1.0 + c * base));
        prop_assert!((sigma_scalar(&moved, k) - base).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn sigma_vector_prefixes(scores in vec(-50.0f64..50.0, 1..30), k in 1usize..40) {
        let v = sigma_vector(&scores, k);
        prop_assert_eq!(v.k(), k);
        for i in 1..=k {
            let want = sigma_scalar(&scores, i);
            prop_assert!((v.values[i - 1] - want).abs() < 1e-7 * (1.0 + want), "{} {} {}", i, v.values[i - 1], want);
        }
    }

    #[test]
    fn rerank_is_a_permutation(vecs in vec(vec(-1.0f32..1.0, 4), 1..12), topic in vec(-1.0f32..1.0, 4), pool in 1usize..15) {
        let mut store = EmbeddingStore::new(4);
        for (i, v) in vecs.iter().enumerate() {
            store.insert(format!("q{i}"), v.clone()).unwrap();
        }
        let n = vecs.len();
        let run = RankedList::from_scores((0..n).map(|i| (format!("q{i}"), -(i as f64))).collect(), n);
        let out = rerank_by_embedding(&run, &topic, &store, pool).unwrap();
        let before: BTreeSet<&str> = run.ids().collect();
        let after: BTreeSet<&str> = out.ids().collect();
        prop_assert_eq!(before, after);
        prop_assert_eq!(out.len(), n);
        // beyond the pool the original order is kept
        let tail: Vec<&str> = out.ids().skip(pool).collect();
        let orig_tail: Vec<&str> = run.ids().skip(pool).collect();
        prop_assert_eq!(tail, orig_tail);
    }

    #[test]
    fn embedding_file_round_trip(vecs in vec(vec(-5.0f32..5.0, 3), 0..10)) {
        let mut store = EmbeddingStore::new(3);
        for (i, v) in vecs.iter().enumerate() {
            store.insert(format!("id{i}"), v.clone()).unwrap();
        }
        prop_assert_eq!(EmbeddingStore::from_bytes(&store.to_bytes()).unwrap(), store);
    }

    #[test]
    fn kendall_tau_range_and_symmetry(a in Just((0..8).collect::<Vec<u32>>()).prop_shuffle(), b in Just((0..8).collect::<Vec<u32>>()).prop_shuffle(), da in 1usize..9, db in 1usize..9) {
        let list = |ids: &[u32]| RankedList::from_scores(ids.iter().enumerate().map(|(i, d)| (format!("d{d}"), -(i as f64))).collect(), 8);
        let (la, lb) = (list(&a), list(&b));
        let t = kendall_tau_at(&la, da, &lb, db);
        prop_assert!((-1.0..=1.0).contains(&t));
        prop_assert!((t - kendall_tau_at(&lb, db, &la, da)).abs() < 1e-12);
        prop_assert_eq!(kendall_tau_at(&la, 8, &la, 8), 1.0);
    }
}
