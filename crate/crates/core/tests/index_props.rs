mod common;

use std::collections::BTreeMap;

use common::*;
use mindstone::corpus::Stopwords;
use mindstone::expansion::{expand_query, ExpansionParams};
use mindstone::index::{build_index, Bm25Params, InvertedIndex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn f1_brute() -> BruteBm25 {
    BruteBm25::new(&f1_paragraphs(), 0.9, 0.4, Stopwords::english())
}

fn hits(index: &InvertedIndex, question: &str, n: usize) -> Vec<(String, f64)> {
    index.retrieve(question, n).hits.into_iter().map(|h| (h.para_id, h.score)).collect()
}

#[test]
fn f1_scalar_score_of_cat_in_d7() {
    let index = f1_index();
    let d7 = index.ordinal("d7#0").unwrap();
    let got = index.bm25_score("cat", d7).unwrap();

    // Scalar evaluation from raw counts.
    let paras = f1_paragraphs();
    let toks: Vec<Vec<String>> =
        paras.iter().map(|p| mindstone::corpus::tokenize(p.full_text(), &Stopwords::english())).collect();
    let n = toks.len() as f64;
    let df = toks.iter().filter(|t| t.iter().any(|w| w == "cat")).count() as f64;
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let doc = &toks[paras.iter().position(|p| p.para_id == "d7#0").unwrap()];
    let tf = doc.iter().filter(|w| *w == "cat").count() as f64;
    let dl = doc.len() as f64;
    let (k1, b) = (0.9, 0.4);
    let want = (1.0 + (n - df + 0.5) / (df + 0.5)).ln() * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    assert!(tf >= 2.0);
    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
}

#[test]
fn f1_cat_ran_matches_exhaustive_scoring() {
    let index = f1_index();
    let brute = f1_brute();
    let expected = brute.rank(&brute.question_weights("cat ran"));
    assert!(expected.len() > 3);
    matches_oracle(&hits(&index, "cat ran", 3), &expected, 3, 1e-9).unwrap();
}

#[test]
fn f1_expanded_query_matches_exhaustive_scoring() {
    let index = f1_index();
    let brute = f1_brute();
    let q = index.question_vector("cat ran");
    let params = ExpansionParams { enabled: true, alpha: 0.5, terms: 5, second_pass_n: None };
    let ranked = vec![("d7#0".to_string(), 1.0), ("d3#0".to_string(), -1.0)];
    let expanded = expand_query(&q, &ranked, &index, &params).unwrap();
    assert!(expanded.len() > q.len());
    let weights: BTreeMap<String, f64> = expanded.iter().map(|(t, w)| (t.to_string(), w)).collect();
    let got: Vec<(String, f64)> =
        index.retrieve_weighted(&expanded, 10).hits.into_iter().map(|h| (h.para_id, h.score)).collect();
    matches_oracle(&got, &brute.rank(&BruteBm25::rescaled(&weights)), 10, 1e-9).unwrap();
}

#[test]
fn f1_tfidf_top_of_d7() {
    let index = f1_index();
    let brute = f1_brute();
    let got: BTreeMap<String, f64> =
        index.doc_tfidf_top("d7#0", 5).unwrap().iter().map(|(t, w)| (t.to_string(), w)).collect();
    let want = brute.tfidf_top(brute.doc_index("d7#0").unwrap(), 5);
    assert_eq!(got.len(), 5);
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (t, w) in &want {
        assert!((got[t] - w).abs() <= 1e-12 * w.abs(), "{t}: {} vs {w}", got[t]);
    }
}

fn corpus_strategy() -> impl Strategy<Value = (u64, String)> {
    (any::<u64>(), "[a-z ]{0,40}")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retrieval_is_prefix_monotone((seed, extra) in corpus_strategy(), n1 in 0usize..20, n2 in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paras = random_corpus(&mut rng, 50);
        let index = build_index(paras, Bm25Params::default(), Stopwords::english()).unwrap();
        let question = format!("{} {extra}", random_text(&mut rng, 1, 8));
        let (lo, hi) = (n1.min(n2), n1.max(n2));
        let short = hits(&index, &question, lo);
        let long = hits(&index, &question, hi);
        prop_assert_eq!(&long[..short.len()], &short[..]);
        prop_assert!(long.len() <= hi);
        for w in long.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        prop_assert!(long.iter().all(|(_, s)| *s > 0.0));
    }

    #[test]
    fn index_statistics_are_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paras = random_corpus(&mut rng, 30);
        let index = build_index(paras.clone(), Bm25Params::default(), Stopwords::english()).unwrap();
        let again = build_index(paras, Bm25Params::default(), Stopwords::english()).unwrap();
        let mut total = 0u64;
        for o in 0..index.doc_count() {
            total += u64::from(index.doc_len(o).unwrap());
            for (term, tf) in index.doc_terms(o).unwrap() {
                prop_assert_eq!(index.term_freq(term, o).unwrap(), tf);
            }
        }
        prop_assert!((index.avg_doc_len() - total as f64 / index.doc_count() as f64).abs() < 1e-12);
        for term in VOCAB {
            let term = term.to_lowercase();
            let postings = index.postings(&term);
            prop_assert_eq!(postings.len(), index.doc_freq(&term));
            prop_assert!(postings.windows(2).all(|w| w[0].ordinal < w[1].ordinal));
            prop_assert!(index.idf(&term) >= 0.0);
            prop_assert_eq!(postings, again.postings(&term));
        }
        prop_assert_eq!(index.vocab_size(), again.vocab_size());
    }

    #[test]
    fn weighted_retrieval_ignores_scale(seed in any::<u64>(), scale in 0.001f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paras = random_corpus(&mut rng, 40);
        let index = build_index(paras, Bm25Params::default(), Stopwords::english()).unwrap();
        let q = index.question_vector(&random_text(&mut rng, 1, 8));
        let a = index.retrieve_weighted(&q, 20).hits;
        let b = index.retrieve_weighted(&q.scaled(scale), 20).hits;
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.score - y.score).abs() <= 1e-9 * x.score);
        }
    }
}

#[test]
fn saved_index_answers_identically() {
    let dir = tempfile::tempdir().unwrap();
    let index = f1_index();
    let manifest = index.save(dir.path()).unwrap();
    assert_eq!(manifest.doc_count, 50);
    let loaded = InvertedIndex::load(dir.path()).unwrap();
    for q in ["cat ran", "mat", "the", ""] {
        assert_eq!(index.retrieve(q, 10), loaded.retrieve(q, 10));
    }
}
