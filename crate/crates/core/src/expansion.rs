//! Neural RM3: relevance feedback gated by the ranker instead of the
//! retriever.
//!
//! The expanded question is `alpha * q + (1 - alpha) * sum(v(d))`, where the
//! sum runs over first-pass documents the ranker scored strictly positive and
//! `v(d)` is the TF-IDF vector of the document's top-`terms` most frequent
//! terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{InvertedIndex, QueryVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionParams {
    pub enabled: bool,
    pub alpha: f64,
    /// Number of most frequent terms taken from each feedback document.
    pub terms: usize,
    /// Depth of the second retrieval; `None` means the first-pass depth.
    pub second_pass_n: Option<usize>,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams { enabled: false, alpha: 0.5, terms: 20, second_pass_n: None }
    }
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("rm3.alpha must be in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Builds the expanded question from `(para_id, S_ranker)` pairs. Documents
/// with a non-positive ranker score are ignored.
pub fn expand_query(
    q: &QueryVector,
    ranked: &[(String, f64)],
    index: &InvertedIndex,
    params: &ExpansionParams,
) -> Result<QueryVector> {
    params.validate()?;
    let mut feedback = QueryVector::new();
    for (para_id, score) in ranked {
        if *score > 0.0 {
            for (term, w) in index.doc_tfidf_top(para_id, params.terms)?.iter() {
                feedback.add(term.to_string(), w);
            }
        }
    }
    let mut expanded = q.scaled(params.alpha);
    for (term, w) in feedback.iter() {
        expanded.add(term.to_string(), (1.0 - params.alpha) * w);
    }
    Ok(expanded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Paragraph, Stopwords};
    use crate::index::{build_index, Bm25Params};

    fn index() -> InvertedIndex {
        build_index(
            vec![
                Paragraph::new("a", "", "x x z", 0),
                Paragraph::new("b", "", "y w", 0),
                Paragraph::new("c", "", "w w w q", 0),
            ],
            Bm25Params::default(),
            Stopwords::english(),
        )
        .unwrap()
    }

    fn params(alpha: f64, terms: usize) -> ExpansionParams {
        ExpansionParams { alpha, terms, ..ExpansionParams::default() }
    }

    #[test]
    fn alpha_one_returns_q() {
        let idx = index();
        let q = QueryVector::from_pairs([("y", 1.0)]);
        let ranked = vec![("a#0".to_string(), 3.0), ("c#0".to_string(), 1.0)];
        assert_eq!(expand_query(&q, &ranked, &idx, &params(1.0, 5)).unwrap(), q);
    }

    #[test]
    fn no_positive_docs_scales_q() {
        let idx = index();
        let q = QueryVector::from_pairs([("y", 2.0)]);
        let ranked = vec![("a#0".to_string(), 0.0), ("c#0".to_string(), -1.0)];
        let out = expand_query(&q, &ranked, &idx, &params(0.25, 5)).unwrap();
        assert_eq!(out, QueryVector::from_pairs([("y", 0.5)]));
    }

    #[test]
    fn single_feedback_document() {
        let idx = index();
        let q = QueryVector::from_pairs([("y", 1.0)]);
        let ranked = vec![("a#0".to_string(), 0.7)];
        let out = expand_query(&q, &ranked, &idx, &params(0.5, 1)).unwrap();
        let x = 2.0 * idx.idf("x");
        assert_eq!(out.get("y"), Some(0.5));
        assert!((out.get("x").unwrap() - 0.5 * x).abs() < 1e-12);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn unknown_feedback_document_is_an_error() {
        let idx = index();
        let ranked = vec![("nope".to_string(), 1.0)];
        assert!(expand_query(&QueryVector::new(), &ranked, &idx, &params(0.5, 3)).is_err());
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let idx = index();
        assert!(expand_query(&QueryVector::new(), &[], &idx, &params(1.5, 3)).is_err());
    }
}
