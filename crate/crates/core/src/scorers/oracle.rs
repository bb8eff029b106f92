//! Scorers with access to the gold answers, plus a constant ranker. Used for
//! upper-bound experiments and tests.

use std::collections::HashMap;

use super::{Passage, Ranker, Reader, ScorerDescriptor, ScorerError, SpanScore};
use crate::corpus::raw_tokens;
use crate::eval::metrics::AnswerMatcher;

/// Returns the same score for every passage.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRanker(pub f64);

impl Ranker for ConstantRanker {
    fn score(&self, _question: &str, _passage: Passage<'_>) -> Result<f64, ScorerError> {
        Ok(self.0)
    }

    fn descriptor(&self) -> ScorerDescriptor {
        ScorerDescriptor { kind: "constant".into(), detail: format!("{}", self.0) }
    }
}

/// `+1` when the passage contains a gold answer of the question, else `-1`.
pub struct OracleRanker {
    answers: HashMap<String, AnswerMatcher>,
}

impl OracleRanker {
    pub fn new<I, Q, A>(gold: I) -> Self
    where
        I: IntoIterator<Item = (Q, Vec<A>)>,
        Q: Into<String>,
        A: AsRef<str>,
    {
        OracleRanker { answers: gold.into_iter().map(|(q, a)| (q.into(), AnswerMatcher::new(&a))).collect() }
    }
}

impl Ranker for OracleRanker {
    fn score(&self, question: &str, passage: Passage<'_>) -> Result<f64, ScorerError> {
        let hit = self.answers.get(question).is_some_and(|m| m.matches(passage.text));
        Ok(if hit { 1.0 } else { -1.0 })
    }

    fn descriptor(&self) -> ScorerDescriptor {
        ScorerDescriptor { kind: "oracle".into(), detail: format!("{} questions", self.answers.len()) }
    }
}

/// Returns the first case-insensitive occurrence of a gold answer with score
/// 1, or the first token with score 0 when no answer occurs.
pub struct OracleReader {
    answers: HashMap<String, Vec<String>>,
}

impl OracleReader {
    pub fn new<I, Q, A>(gold: I) -> Self
    where
        I: IntoIterator<Item = (Q, Vec<A>)>,
        Q: Into<String>,
        A: AsRef<str>,
    {
        OracleReader {
            answers: gold
                .into_iter()
                .map(|(q, a)| (q.into(), a.iter().map(|s| s.as_ref().to_string()).collect()))
                .collect(),
        }
    }
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn find_folded(haystack: &[char], needle: &[char]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

impl Reader for OracleReader {
    fn read(&self, question: &str, passage: Passage<'_>, _k: usize) -> Result<Vec<SpanScore>, ScorerError> {
        let text: Vec<char> = passage.text.chars().map(fold).collect();
        if let Some(golds) = self.answers.get(question) {
            for gold in golds {
                let needle: Vec<char> = gold.trim().chars().map(fold).collect();
                if let Some(start) = find_folded(&text, &needle) {
                    return Ok(vec![SpanScore { start, end: start + needle.len(), score: 1.0 }]);
                }
            }
        }
        let fallback = match raw_tokens(passage.text).first() {
            Some(t) => {
                let start = passage.text[..t.start].chars().count();
                let len = passage.text[t.start..t.end].chars().count();
                (start, start + len)
            }
            None => (0, text.len().max(1)),
        };
        Ok(vec![SpanScore { start: fallback.0, end: fallback.1, score: 0.0 }])
    }

    fn descriptor(&self) -> ScorerDescriptor {
        ScorerDescriptor { kind: "oracle".into(), detail: format!("{} questions", self.answers.len()) }
    }
}
