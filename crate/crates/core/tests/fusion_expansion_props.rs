mod common;

use std::collections::BTreeSet;

use common::*;
use mindstone::corpus::Stopwords;
use mindstone::expansion::{expand_query, ExpansionParams};
use mindstone::fusion::{fuse, normalize_scores, FusionWeights, NormalizedScores};
use mindstone::index::{build_index, Bm25Params};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights() -> impl Strategy<Value = FusionWeights> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
        let b = b * (1.0 - a);
        FusionWeights { w_retriever: a, w_ranker: b, w_reader: 1.0 - a - b }
    })
}

proptest! {
    #[test]
    fn normalization_preserves_strict_order(scores in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let n = normalize_scores(&scores);
        prop_assert_eq!(n.len(), scores.len());
        prop_assert_eq!(n.iter().copied().fold(f64::MIN, f64::max), 1.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] < scores[j] {
                    prop_assert!(n[i] <= n[j]);
                }
            }
            prop_assert!(n[i] <= 1.0);
        }
    }

    #[test]
    fn fuse_is_monotone_in_each_stage(w in weights(), base in prop::array::uniform3(-10.0f64..1.0), bump in 0.0f64..5.0, stage in 0usize..3) {
        let n = NormalizedScores { retriever: base[0], ranker: base[1], reader: base[2] };
        let mut m = n;
        match stage {
            0 => m.retriever += bump,
            1 => m.ranker += bump,
            _ => m.reader += bump,
        }
        prop_assert!(fuse(&m, &w) >= fuse(&n, &w) - 1e-12);
        let top = NormalizedScores { retriever: 1.0, ranker: 1.0, reader: 1.0 };
        prop_assert!((fuse(&top, &w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expansion_support_and_linearity(seed in any::<u64>(), terms in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paras = random_corpus(&mut rng, 15);
        let index = build_index(paras.clone(), Bm25Params::default(), Stopwords::english()).unwrap();
        let q = index.question_vector(&random_text(&mut rng, 1, 6));
        let ranked: Vec<(String, f64)> =
            paras.iter().map(|p| (p.para_id.clone(), rng.gen_range(-1.0..1.0))).collect();
        let at = |alpha: f64| {
            let params = ExpansionParams { enabled: true, alpha, terms, second_pass_n: None };
            expand_query(&q, &ranked, &index, &params).unwrap()
        };
        let (e0, e5, e1) = (at(0.0), at(0.5), at(1.0));

        let mut support: BTreeSet<String> = q.terms().map(str::to_string).collect();
        for (id, s) in &ranked {
            if *s > 0.0 {
                support.extend(index.doc_tfidf_top(id, terms).unwrap().terms().map(str::to_string));
            }
        }
        for e in [&e0, &e5, &e1] {
            prop_assert!(e.terms().all(|t| support.contains(t)));
            prop_assert!(e.iter().all(|(_, w)| w != 0.0));
        }
        // Each weight is affine in alpha: the midpoint is the mean of the ends.
        for t in &support {
            let w = |e: &mindstone::index::QueryVector| e.get(t).unwrap_or(0.0);
            let mid = (w(&e0) + w(&e1)) / 2.0;
            prop_assert!((w(&e5) - mid).abs() <= 1e-12 * mid.abs().max(1.0));
        }
        prop_assert_eq!(&e1, &q);
    }
}
