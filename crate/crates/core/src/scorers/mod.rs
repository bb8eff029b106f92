//! Ranker and reader stages.
//!
//! Both stages are traits so the pipeline can run the builtin desk-scale
//! scorers, the test oracles, or an external process speaking the line
//! protocol in [`external`]. The free functions [`rank`] and [`read`] apply
//! the token limits before handing text to a scorer.

mod builtin_ranker;
mod builtin_reader;
pub mod dataset;
pub mod external;
mod oracle;

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{raw_tokens, truncate_to_tokens, Paragraph};

pub use builtin_ranker::{
    train_builtin_ranker, BuiltinRanker, BuiltinRankerModel, TrainConfig, TrainReport, FEATURE_COUNT,
    FEATURE_SPEC_VERSION,
};
pub use builtin_reader::BuiltinReader;
pub use external::{ExternalScorer, ScorerRole};
pub use oracle::{ConstantRanker, OracleRanker, OracleReader};

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("failed to spawn scorer `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("scorer handshake timed out after {0:?}")]
    HandshakeTimeout(Duration),
    #[error("scorer timed out after {0:?} waiting for a response")]
    Timeout(Duration),
    #[error("malformed scorer response ({reason}): {line}")]
    Malformed { line: String, reason: String },
    #[error("scorer process exited ({status}){}", stderr_suffix(.stderr))]
    Exited { status: String, stderr: String },
    #[error("scorer reported an error for request `{id}`: {message}")]
    Remote { id: String, message: String },
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("scorer does not support the `{0}` role")]
    UnsupportedRole(String),
    #[error("scorer i/o error: {0}")]
    Io(#[from] io::Error),
}

fn stderr_suffix(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.is_empty() {
        String::new()
    } else {
        format!("; stderr: {trimmed}")
    }
}

/// Token limits applied before scoring. Tokens are this crate's raw
/// alphanumeric tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationLimits {
    pub ranker_para_tokens: usize,
    pub reader_total_tokens: usize,
}

impl Default for TruncationLimits {
    fn default() -> Self {
        TruncationLimits { ranker_para_tokens: 448, reader_total_tokens: 384 }
    }
}

/// Text handed to a scorer. `text` is the (possibly truncated) full text.
#[derive(Debug, Clone, Copy)]
pub struct Passage<'a> {
    pub para_id: &'a str,
    pub title: &'a str,
    pub text: &'a str,
}

/// A span in character (code point) offsets of the text it was read from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub para_id: String,
    pub start_char: usize,
    pub end_char: usize,
    pub text: String,
    pub s_reader: f64,
}

/// Identifies a scorer in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerDescriptor {
    pub kind: String,
    pub detail: String,
}

pub trait Ranker: Send + Sync {
    /// Relevance logit; positive means the passage likely holds an answer.
    fn score(&self, question: &str, passage: Passage<'_>) -> Result<f64, ScorerError>;

    fn score_batch(&self, question: &str, passages: &[Passage<'_>]) -> Result<Vec<f64>, ScorerError> {
        passages.iter().map(|p| self.score(question, *p)).collect()
    }

    fn descriptor(&self) -> ScorerDescriptor;
}

pub trait Reader: Send + Sync {
    /// Up to `k` candidate spans over `passage.text`.
    fn read(&self, question: &str, passage: Passage<'_>, k: usize) -> Result<Vec<SpanScore>, ScorerError>;

    fn descriptor(&self) -> ScorerDescriptor;
}

/// The paragraph text the ranker sees.
pub fn ranker_text<'a>(paragraph: &'a Paragraph, limits: &TruncationLimits) -> &'a str {
    truncate_to_tokens(paragraph.full_text(), limits.ranker_para_tokens)
}

/// Scores a paragraph after truncating it to `ranker_para_tokens` tokens.
pub fn rank(
    ranker: &dyn Ranker,
    question: &str,
    paragraph: &Paragraph,
    limits: &TruncationLimits,
) -> Result<f64, ScorerError> {
    ranker.score(question, passage(paragraph, ranker_text(paragraph, limits)))
}

pub fn rank_many(
    ranker: &dyn Ranker,
    question: &str,
    paragraphs: &[&Paragraph],
    limits: &TruncationLimits,
) -> Result<Vec<f64>, ScorerError> {
    let passages: Vec<Passage<'_>> = paragraphs.iter().map(|p| passage(p, ranker_text(p, limits))).collect();
    ranker.score_batch(question, &passages)
}

fn passage<'a>(paragraph: &'a Paragraph, text: &'a str) -> Passage<'a> {
    Passage { para_id: &paragraph.para_id, title: &paragraph.title, text }
}

/// Question and paragraph cut so their combined token count fits the reader
/// budget. The paragraph is cut first and always keeps at least one token.
pub fn reader_inputs<'a>(question: &'a str, paragraph: &'a Paragraph, limits: &TruncationLimits) -> (&'a str, &'a str) {
    let total = limits.reader_total_tokens.max(1);
    let q_tokens = raw_tokens(question).len();
    let para_budget = total.saturating_sub(q_tokens).max(1);
    let question = truncate_to_tokens(question, total - para_budget);
    let text = truncate_to_tokens(paragraph.full_text(), para_budget);
    (question, text)
}

/// Runs the reader on a paragraph and returns between 1 and `k` spans sorted
/// by score descending (ties by start, then end).
pub fn read(
    reader: &dyn Reader,
    question: &str,
    paragraph: &Paragraph,
    k: usize,
    limits: &TruncationLimits,
) -> Result<Vec<AnswerSpan>, ScorerError> {
    let k = k.max(1);
    let (question, text) = reader_inputs(question, paragraph, limits);
    let raw = reader.read(question, passage(paragraph, text), k)?;
    let offsets: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();
    let n_chars = offsets.len() - 1;
    let mut spans = Vec::with_capacity(raw.len());
    for s in raw {
        if s.start >= s.end || s.end > n_chars || !s.score.is_finite() {
            return Err(ScorerError::Protocol(format!(
                "span [{}, {}) with score {} is invalid for a {n_chars}-character text",
                s.start, s.end, s.score
            )));
        }
        spans.push(s);
    }
    if spans.is_empty() {
        return Err(ScorerError::Protocol("reader returned no spans".into()));
    }
    spans.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)).then(a.end.cmp(&b.end)));
    spans.truncate(k);
    Ok(spans
        .into_iter()
        .map(|s| AnswerSpan {
            para_id: paragraph.para_id.clone(),
            start_char: s.start,
            end_char: s.end,
            text: text[offsets[s.start]..offsets[s.end]].to_string(),
            s_reader: s.score,
        })
        .collect())
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let mut offsets = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = offsets.nth(start)?;
    if end < start {
        return None;
    }
    let e = if end == start { s } else { offsets.nth(end - start - 1)? };
    Some(&text[s..e])
}
