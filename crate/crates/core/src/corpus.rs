//! Articles, paragraphs and the unigram tokenizer shared by every stage.
//!
//! Articles are split on blank lines; each resulting paragraph carries its
//! article title on the first line of its `full_text`, which is the text
//! that gets indexed, ranked and read.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The classic Lucene English stopword set.
pub const ENGLISH_STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it", "no", "not", "of",
    "on", "or", "such", "that", "the", "their", "then", "there", "these", "they", "this", "to", "was", "will", "with",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ParagraphRecord {
    para_id: String,
    article_id: String,
    title: String,
    body: String,
    position: usize,
}

/// A title-prepended paragraph. `full_text` is derived from `title` and
/// `body` and is never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ParagraphRecord", into = "ParagraphRecord")]
pub struct Paragraph {
    pub para_id: String,
    pub article_id: String,
    pub title: String,
    pub body: String,
    pub position: usize,
    full_text: String,
}

impl From<ParagraphRecord> for Paragraph {
    fn from(r: ParagraphRecord) -> Self {
        Paragraph::with_id(r.para_id, r.article_id, r.title, r.body, r.position)
    }
}

impl From<Paragraph> for ParagraphRecord {
    fn from(p: Paragraph) -> Self {
        ParagraphRecord {
            para_id: p.para_id,
            article_id: p.article_id,
            title: p.title,
            body: p.body,
            position: p.position,
        }
    }
}

impl Paragraph {
    pub fn new(article_id: &str, title: &str, body: &str, position: usize) -> Self {
        Paragraph::with_id(
            format!("{article_id}#{position}"),
            article_id.to_string(),
            title.to_string(),
            body.to_string(),
            position,
        )
    }

    pub fn with_id(para_id: String, article_id: String, title: String, body: String, position: usize) -> Self {
        let full_text = compose_full_text(&title, &body);
        Paragraph { para_id, article_id, title, body, position, full_text }
    }

    pub fn full_text(&self) -> &str {
        &self.full_text
    }
}

/// Title, newline, body. An empty title adds no line.
pub fn compose_full_text(title: &str, body: &str) -> String {
    if title.is_empty() {
        body.to_string()
    } else {
        format!("{title}\n{body}")
    }
}

/// Splits an article body into paragraphs at runs of blank lines.
pub fn split_article(article: &Article) -> Vec<Paragraph> {
    let mut paragraphs = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let flush = |block: &mut Vec<&str>, out: &mut Vec<Paragraph>| {
        let text = block.join("\n");
        let text = text.trim();
        if !text.is_empty() {
            out.push(Paragraph::new(&article.article_id, &article.title, text, out.len()));
        }
        block.clear();
    };
    for line in article.body.lines() {
        if line.trim().is_empty() {
            flush(&mut block, &mut paragraphs);
        } else {
            block.push(line);
        }
    }
    flush(&mut block, &mut paragraphs);
    paragraphs
}

/// A stopword set. Entries are stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn english() -> Self {
        Stopwords(ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect())
    }

    pub fn none() -> Self {
        Stopwords(BTreeSet::new())
    }

    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(terms.into_iter().map(|t| t.as_ref().trim().to_lowercase()).filter(|t| !t.is_empty()).collect())
    }

    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Stopwords::from_terms(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(format!("reading stopwords {}", path.display()), e))?;
        Ok(Stopwords::parse(&text))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Hex SHA-256 over the sorted, newline-joined terms.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for term in &self.0 {
            hasher.update(term.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// An alphanumeric run of the source text with its byte range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text.
    pub term: String,
    pub start: usize,
    pub end: usize,
}

/// Every maximal alphanumeric run of `text`, stopwords included.
pub fn raw_tokens(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push(Token { term: text[s..i].to_lowercase(), start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token { term: text[s..].to_lowercase(), start: s, end: text.len() });
    }
    tokens
}

/// Lowercased unigrams with stopwords removed, in text order.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let mut terms = Vec::new();
    for token in raw_tokens(text) {
        // Lowercasing can introduce non-alphanumeric marks (e.g. U+0130).
        for piece in token.term.split(|c: char| !c.is_alphanumeric()) {
            if !piece.is_empty() && !stopwords.contains(piece) {
                terms.push(piece.to_string());
            }
        }
    }
    terms
}

/// The prefix of `text` ending with its `limit`-th raw token; the whole text
/// when it has no more than `limit` tokens.
pub fn truncate_to_tokens(text: &str, limit: usize) -> &str {
    if limit == 0 {
        return "";
    }
    let tokens = raw_tokens(text);
    if tokens.len() <= limit {
        text
    } else {
        &text[..tokens[limit - 1].end]
    }
}
