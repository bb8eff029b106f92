#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use mindstone::corpus::{tokenize, Paragraph, Stopwords};
use mindstone::eval::{load_questions, GoldRecord};
use mindstone::index::{build_index, Bm25Params, InvertedIndex};
use mindstone::jsonl;
use mindstone::pipeline::{Pipeline, PipelineConfig};
use mindstone::scorers::dataset::{build_dataset_aug2, build_dataset_finetune, DEFAULT_AUG_M, DEFAULT_AUG_N};
use mindstone::scorers::{
    train_builtin_ranker, BuiltinRanker, BuiltinRankerModel, BuiltinReader, OracleRanker, OracleReader, TrainConfig,
    TrainReport, TruncationLimits,
};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(path: &str) -> PathBuf {
    repo_root().join("fixtures").join(path)
}

pub fn f1_paragraphs() -> Vec<Paragraph> {
    jsonl::read(&fixture("f1/paragraphs.jsonl")).unwrap()
}

pub fn f1_index() -> InvertedIndex {
    build_index(f1_paragraphs(), Bm25Params::default(), Stopwords::english()).unwrap()
}

pub struct F2 {
    pub index: Arc<InvertedIndex>,
    pub dev: Vec<GoldRecord>,
    pub train: Vec<GoldRecord>,
}

pub fn f2() -> &'static F2 {
    static F2: OnceLock<F2> = OnceLock::new();
    F2.get_or_init(|| {
        let paragraphs: Vec<Paragraph> = jsonl::read(&fixture("f2/paragraphs.jsonl")).unwrap();
        let index = build_index(paragraphs, Bm25Params::default(), Stopwords::english()).unwrap();
        let (dev, skipped_dev) = load_questions(&fixture("f2/questions_dev.jsonl")).unwrap();
        let (train, skipped_train) = load_questions(&fixture("f2/questions_train.jsonl")).unwrap();
        assert_eq!(skipped_dev + skipped_train, 0);
        F2 { index: Arc::new(index), dev, train }
    })
}

pub struct TrainedRanker {
    pub model: BuiltinRankerModel,
    pub phase_one: BuiltinRankerModel,
    pub finetune_report: TrainReport,
    pub aug2_report: TrainReport,
    pub train_secs: f64,
}

/// The builtin ranker trained on the F2 training questions: the finetune
/// dataset first, then the aug2 dataset built with the phase-one model.
pub fn f2_ranker() -> &'static TrainedRanker {
    static RANKER: OnceLock<TrainedRanker> = OnceLock::new();
    RANKER.get_or_init(|| {
        let f = f2();
        let started = Instant::now();
        let limits = TruncationLimits::default();
        let cfg = TrainConfig::default();
        let ft = build_dataset_finetune(&f.train, f.index.paragraphs(), 0);
        let (m1, finetune_report) = train_builtin_ranker(&ft, f.index.clone(), &limits, &cfg, None).unwrap();
        let r1 = BuiltinRanker::new(m1.clone(), f.index.clone()).unwrap();
        let aug2 = build_dataset_aug2(&f.train, &f.index, &r1, &limits, DEFAULT_AUG_M, DEFAULT_AUG_N).unwrap();
        let (model, aug2_report) = train_builtin_ranker(&aug2, f.index.clone(), &limits, &cfg, Some(&m1)).unwrap();
        TrainedRanker {
            model,
            phase_one: m1,
            finetune_report,
            aug2_report,
            train_secs: started.elapsed().as_secs_f64(),
        }
    })
}

/// F2 with the trained builtin ranker and the builtin reader.
pub fn builtin_pipeline(config: PipelineConfig, workers: usize) -> Pipeline {
    let f = f2();
    let ranker = BuiltinRanker::new(f2_ranker().model.clone(), f.index.clone()).unwrap();
    let reader = BuiltinReader::new(f.index.clone());
    Pipeline::new(f.index.clone(), Arc::new(ranker), Arc::new(reader), config, workers).unwrap()
}

/// F2 with the gold-answer oracle ranker and reader for the dev questions.
pub fn oracle_pipeline(config: PipelineConfig, workers: usize) -> Pipeline {
    let f = f2();
    let ranker = OracleRanker::new(gold_pairs(&f.dev));
    let reader = OracleReader::new(gold_pairs(&f.dev));
    Pipeline::new(f.index.clone(), Arc::new(ranker), Arc::new(reader), config, workers).unwrap()
}

pub fn gold_pairs(records: &[GoldRecord]) -> Vec<(String, Vec<String>)> {
    records.iter().map(|r| (r.question.clone(), r.answers.clone())).collect()
}

/// BM25 computed from scratch for every document, independent of the index.
pub struct BruteBm25 {
    docs: Vec<(String, BTreeMap<String, u32>, f64)>,
    df: BTreeMap<String, usize>,
    avgdl: f64,
    k1: f64,
    b: f64,
    stopwords: Stopwords,
}

impl BruteBm25 {
    pub fn new(paragraphs: &[Paragraph], k1: f64, b: f64, stopwords: Stopwords) -> Self {
        let mut docs = Vec::new();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0.0;
        for p in paragraphs {
            let terms = tokenize(p.full_text(), &stopwords);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            total += terms.len() as f64;
            docs.push((p.para_id.clone(), tf, terms.len() as f64));
        }
        let avgdl = if docs.is_empty() { 0.0 } else { total / docs.len() as f64 };
        BruteBm25 { docs, df, avgdl, k1, b, stopwords }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = *self.df.get(term).unwrap_or(&0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_score(&self, term: &str, doc: usize) -> f64 {
        let (_, tf, dl) = &self.docs[doc];
        let tf = *tf.get(term).unwrap_or(&0) as f64;
        if tf == 0.0 {
            return 0.0;
        }
        self.idf(term) * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl))
    }

    /// Every document with a positive score for `weights`, best first, ties by id.
    pub fn rank(&self, weights: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = (0..self.docs.len())
            .map(|d| {
                let s: f64 = weights.iter().map(|(t, w)| w * self.term_score(t, d)).sum();
                (self.docs[d].0.clone(), s)
            })
            .filter(|(_, s)| *s > 0.0)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn doc_index(&self, para_id: &str) -> Option<usize> {
        self.docs.iter().position(|(id, _, _)| id == para_id)
    }

    /// The `top` most frequent terms of a document (ties by term), as tf * idf.
    pub fn tfidf_top(&self, doc: usize, top: usize) -> BTreeMap<String, f64> {
        let mut terms: Vec<(&String, u32)> = self.docs[doc].1.iter().map(|(t, c)| (t, *c)).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        terms.into_iter().take(top).map(|(t, c)| (t.clone(), c as f64 * self.idf(t))).collect()
    }

    pub fn question_weights(&self, question: &str) -> BTreeMap<String, f64> {
        let mut w = BTreeMap::new();
        for t in tokenize(question, &self.stopwords) {
            *w.entry(t).or_insert(0.0) += 1.0;
        }
        w
    }

    /// Positive weights rescaled to sum to one; the rest dropped.
    pub fn rescaled(weights: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let total: f64 = weights.values().filter(|w| **w > 0.0).sum();
        weights.iter().filter(|(_, w)| **w > 0.0).map(|(t, w)| (t.clone(), w / total)).collect()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Checks that `got` is the top of `expected` (the full oracle ranking):
/// same ids in the same order, except that documents whose oracle scores
/// agree within `rel` may appear in any order, and scores within `rel`.
pub fn matches_oracle(got: &[(String, f64)], expected: &[(String, f64)], n: usize, rel: f64) -> Result<(), String> {
    let want = n.min(expected.len());
    if got.len() != want {
        return Err(format!("got {} hits, oracle has {want}", got.len()));
    }
    let oracle: BTreeMap<&str, f64> = expected.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    for (i, (id, s)) in got.iter().enumerate() {
        let Some(&os) = oracle.get(id.as_str()) else {
            return Err(format!("hit {id} has no positive oracle score"));
        };
        if !close(*s, os, rel) {
            return Err(format!("score of {id}: {s} vs oracle {os}"));
        }
        let (eid, es) = &expected[i];
        if eid != id && !close(*es, os, rel) {
            return Err(format!("rank {i}: got {id} ({s}), oracle has {eid} ({es})"));
        }
    }
    // Every document the oracle puts strictly above the cut must be present.
    let got_ids: BTreeSet<&str> = got.iter().map(|(id, _)| id.as_str()).collect();
    if let Some((_, cut)) = expected.get(want.wrapping_sub(1)) {
        for (id, s) in expected.iter().take(want) {
            if !close(*s, *cut, rel) && !got_ids.contains(id.as_str()) {
                return Err(format!("oracle top-{want} document {id} missing"));
            }
        }
    }
    Ok(())
}

/// SQuAD-style normalization written independently of the library: lower
/// case, ASCII punctuation dropped, articles removed, whitespace collapsed.
pub fn reference_normalize(s: &str) -> String {
    let lowered: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    lowered.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

pub fn reference_contains(text: &str, answers: &[String]) -> bool {
    let hay = reference_normalize(text);
    answers.iter().any(|a| {
        let needle = reference_normalize(a);
        !needle.is_empty() && hay.contains(&needle)
    })
}

pub const VOCAB: [&str; 24] = [
    "the", "and", "of", "is", "river", "city", "mill", "stone", "bridge", "tower", "north", "harbor", "canal", "guild",
    "market", "salt", "wheat", "iron", "glass", "copper", "ferry", "abbey", "forge", "Lantern",
];

pub fn random_text<R: rand::Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let w = VOCAB[rng.gen_range(0..VOCAB.len())];
        words.push(match rng.gen_range(0..10) {
            0 => w.to_uppercase(),
            1 => format!("{w},"),
            _ => w.to_string(),
        });
    }
    words.join(" ")
}

/// Up to `max_docs` single-paragraph articles over [`VOCAB`].
pub fn random_corpus<R: rand::Rng>(rng: &mut R, max_docs: usize) -> Vec<Paragraph> {
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|i| {
            let title = if rng.gen_bool(0.3) { String::new() } else { random_text(rng, 1, 3) };
            Paragraph::new(&format!("d{i}"), &title, &random_text(rng, 1, 40), 0)
        })
        .collect()
}
