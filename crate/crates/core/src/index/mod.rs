//! Immutable unigram inverted index with Okapi BM25 scoring.
//!
//! The idf is the Lucene form `ln(1 + (N - df + 0.5) / (df + 0.5))`, which
//! never goes negative, so every document matching at least one positively
//! weighted query term receives a strictly positive score.

mod store;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Paragraph, Stopwords};
use crate::error::{Error, Result};

pub use store::{manifest_hash, read_manifest, IndexManifest, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let params = Bm25Params { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::invalid(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

/// A sparse term weight vector. Zero weights are never stored and iteration
/// is in term order, so sums over a vector are reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryVector(BTreeMap<String, f64>);

impl QueryVector {
    pub fn new() -> Self {
        QueryVector(BTreeMap::new())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut q = QueryVector::new();
        for (t, w) in pairs {
            q.add(t.into(), w);
        }
        q
    }

    /// Adds `weight` to `term`, dropping the entry if the sum becomes zero.
    pub fn add(&mut self, term: String, weight: f64) {
        let entry = self.0.entry(term);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += weight;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                if weight != 0.0 {
                    e.insert(weight);
                }
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> QueryVector {
        QueryVector::from_pairs(self.0.iter().map(|(t, w)| (t.clone(), w * factor)))
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.0.get(term).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub para_id: String,
    pub ordinal: usize,
    pub score: f64,
}

/// Hits sorted by score descending, ties by `para_id` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    pub query: QueryVector,
}

impl RetrievalResult {
    fn empty(query: QueryVector) -> Self {
        RetrievalResult { hits: Vec::new(), query }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: Bm25Params,
    stopwords: Stopwords,
    vocab: Vec<String>,
    term_ids: HashMap<String, u32>,
    /// Per term id, ascending by ordinal.
    postings: Vec<Vec<Posting>>,
    /// Per ordinal, (term id, tf) ascending by term id.
    doc_terms: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    paragraphs: Vec<Paragraph>,
    ordinals: HashMap<String, usize>,
}

/// Builds an index over `paragraphs`' full texts.
pub fn build_index<I>(paragraphs: I, params: Bm25Params, stopwords: Stopwords) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = Paragraph>,
{
    params.validate()?;
    let mut builder = IndexBuilder {
        params,
        stopwords,
        vocab: Vec::new(),
        term_ids: HashMap::new(),
        postings: Vec::new(),
        doc_terms: Vec::new(),
        doc_len: Vec::new(),
        paragraphs: Vec::new(),
        ordinals: HashMap::new(),
    };
    for p in paragraphs {
        builder.add(p)?;
    }
    Ok(builder.finish())
}

struct IndexBuilder {
    params: Bm25Params,
    stopwords: Stopwords,
    vocab: Vec<String>,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_terms: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    paragraphs: Vec<Paragraph>,
    ordinals: HashMap<String, usize>,
}

impl IndexBuilder {
    fn add(&mut self, paragraph: Paragraph) -> Result<()> {
        let ordinal = self.paragraphs.len();
        if self.ordinals.contains_key(&paragraph.para_id) {
            return Err(Error::DuplicateParagraph(paragraph.para_id));
        }
        let terms = tokenize(paragraph.full_text(), &self.stopwords);
        let mut counts: Vec<(u32, u32)> = Vec::new();
        let mut slot: HashMap<u32, usize> = HashMap::new();
        for term in &terms {
            let id = match self.term_ids.get(term) {
                Some(&id) => id,
                None => {
                    let id = self.vocab.len() as u32;
                    self.vocab.push(term.clone());
                    self.term_ids.insert(term.clone(), id);
                    self.postings.push(Vec::new());
                    id
                }
            };
            match slot.get(&id) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    slot.insert(id, counts.len());
                    counts.push((id, 1));
                }
            }
        }
        counts.sort_unstable();
        for &(id, tf) in &counts {
            self.postings[id as usize].push(Posting { ordinal: ordinal as u32, tf });
        }
        self.doc_terms.push(counts);
        self.doc_len.push(terms.len() as u32);
        self.ordinals.insert(paragraph.para_id.clone(), ordinal);
        self.paragraphs.push(paragraph);
        Ok(())
    }

    fn finish(self) -> InvertedIndex {
        InvertedIndex::from_parts(
            self.params,
            self.stopwords,
            self.vocab,
            self.postings,
            self.doc_terms,
            self.doc_len,
            self.paragraphs,
        )
    }
}

impl InvertedIndex {
    fn from_parts(
        params: Bm25Params,
        stopwords: Stopwords,
        vocab: Vec<String>,
        postings: Vec<Vec<Posting>>,
        doc_terms: Vec<Vec<(u32, u32)>>,
        doc_len: Vec<u32>,
        paragraphs: Vec<Paragraph>,
    ) -> Self {
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg_doc_len = if doc_len.is_empty() { 0.0 } else { total as f64 / doc_len.len() as f64 };
        let term_ids = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let ordinals = paragraphs.iter().enumerate().map(|(i, p)| (p.para_id.clone(), i)).collect();
        InvertedIndex {
            params,
            stopwords,
            vocab,
            term_ids,
            postings,
            doc_terms,
            doc_len,
            avg_doc_len,
            paragraphs,
            ordinals,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn doc_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn doc_len(&self, ordinal: usize) -> Result<u32> {
        self.doc_len.get(ordinal).copied().ok_or(Error::UnknownOrdinal(ordinal))
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.term_ids.get(term).map_or(0, |&id| self.postings[id as usize].len())
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_ids.get(term).map_or(&[], |&id| self.postings[id as usize].as_slice())
    }

    /// Term frequency of `term` in document `ordinal`.
    pub fn term_freq(&self, term: &str, ordinal: usize) -> Result<u32> {
        if ordinal >= self.doc_count() {
            return Err(Error::UnknownOrdinal(ordinal));
        }
        let postings = self.postings(term);
        Ok(postings.binary_search_by_key(&(ordinal as u32), |p| p.ordinal).map_or(0, |i| postings[i].tf))
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.doc_count(), self.doc_freq(term))
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn paragraph(&self, ordinal: usize) -> Option<&Paragraph> {
        self.paragraphs.get(ordinal)
    }

    pub fn ordinal(&self, para_id: &str) -> Option<usize> {
        self.ordinals.get(para_id).copied()
    }

    pub fn paragraph_by_id(&self, para_id: &str) -> Option<&Paragraph> {
        self.ordinal(para_id).map(|o| &self.paragraphs[o])
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.stopwords)
    }

    /// BM25 contribution of a single term occurrence to document `ordinal`.
    pub fn bm25_score(&self, term: &str, ordinal: usize) -> Result<f64> {
        let tf = self.term_freq(term, ordinal)?;
        Ok(self.bm25_from_tf(term, tf, self.doc_len[ordinal] as f64))
    }

    /// BM25 of `term` for a document of length `doc_len` containing it `tf`
    /// times, using this index's collection statistics.
    pub fn bm25_from_tf(&self, term: &str, tf: u32, doc_len: f64) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        self.idf(term) * self.tf_saturation(tf, doc_len)
    }

    fn tf_saturation(&self, tf: u32, doc_len: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_len > 0.0 { doc_len / self.avg_doc_len } else { 1.0 };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    /// Query-tf weighting of a question: each occurrence of a term counts once.
    pub fn question_counts(&self, question: &str) -> QueryVector {
        let mut q = QueryVector::new();
        for term in self.tokenize(question) {
            q.add(term, 1.0);
        }
        q
    }

    /// The question in TF-IDF space: `tf(t, question) * idf(t)`.
    pub fn question_vector(&self, question: &str) -> QueryVector {
        let counts = self.question_counts(question);
        QueryVector::from_pairs(counts.iter().map(|(t, c)| (t.to_string(), c * self.idf(t))))
    }

    /// Top `n` documents for a plain-text question.
    pub fn retrieve(&self, question: &str, n: usize) -> RetrievalResult {
        let counts = self.question_counts(question);
        let hits = self.score_vector(&counts, n);
        RetrievalResult { hits, query: counts }
    }

    /// Top `n` documents for a weighted query. Positive weights are rescaled
    /// to sum to one; non-positive entries are dropped.
    pub fn retrieve_weighted(&self, q: &QueryVector, n: usize) -> RetrievalResult {
        let total: f64 = q.iter().map(|(_, w)| w).filter(|w| *w > 0.0).sum();
        if total <= 0.0 || !total.is_finite() {
            return RetrievalResult::empty(q.clone());
        }
        let rescaled =
            QueryVector::from_pairs(q.iter().filter(|(_, w)| *w > 0.0).map(|(t, w)| (t.to_string(), w / total)));
        let hits = self.score_vector(&rescaled, n);
        RetrievalResult { hits, query: q.clone() }
    }

    fn score_vector(&self, weights: &QueryVector, n: usize) -> Vec<Hit> {
        if n == 0 || weights.is_empty() || self.doc_count() == 0 {
            return Vec::new();
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for (term, w) in weights.iter() {
            if w <= 0.0 {
                continue;
            }
            let Some(&id) = self.term_ids.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in &self.postings[id as usize] {
                let s = w * idf * self.tf_saturation(p.tf, self.doc_len[p.ordinal as usize] as f64);
                *acc.entry(p.ordinal).or_insert(0.0) += s;
            }
        }
        let mut hits: Vec<Hit> = acc
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(o, score)| Hit { para_id: self.paragraphs[o as usize].para_id.clone(), ordinal: o as usize, score })
            .collect();
        top_n(&mut hits, n);
        hits
    }

    /// The `top_terms` most frequent terms of a document (ties by term),
    /// weighted by `tf * idf`.
    pub fn doc_tfidf_top(&self, para_id: &str, top_terms: usize) -> Result<QueryVector> {
        let ordinal = self.ordinal(para_id).ok_or_else(|| Error::UnknownParagraph(para_id.to_string()))?;
        let mut terms: Vec<(&str, u32)> =
            self.doc_terms[ordinal].iter().map(|&(id, tf)| (self.vocab[id as usize].as_str(), tf)).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        terms.truncate(top_terms);
        Ok(QueryVector::from_pairs(terms.into_iter().map(|(t, tf)| (t.to_string(), tf as f64 * self.idf(t)))))
    }

    /// Terms of document `ordinal` with their frequencies.
    pub fn doc_terms(&self, ordinal: usize) -> Result<Vec<(&str, u32)>> {
        self.doc_terms
            .get(ordinal)
            .map(|ts| ts.iter().map(|&(id, tf)| (self.vocab[id as usize].as_str(), tf)).collect())
            .ok_or(Error::UnknownOrdinal(ordinal))
    }
}

pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Score descending, then `para_id` ascending.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.para_id.cmp(&b.para_id))
}

fn top_n(hits: &mut Vec<Hit>, n: usize) {
    if hits.len() > n {
        hits.select_nth_unstable_by(n - 1, hit_order);
        hits.truncate(n);
    }
    hits.sort_by(hit_order);
}
