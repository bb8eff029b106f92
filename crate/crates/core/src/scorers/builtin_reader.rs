//! Heuristic extractive reader.
//!
//! Candidates are token windows of up to [`MAX_SPAN_TOKENS`] tokens inside
//! one sentence. A span scores the idf of each question term found in its
//! sentence within [`CONTEXT_WINDOW`] content tokens, decayed linearly with
//! distance, plus a bonus when its shape fits the answer type implied by the
//! question word. It pays for question terms inside the span, clause
//! punctuation, function words at its edges, splitting a run of capitalized
//! or numeric tokens and (mildly) its length.

use std::collections::HashMap;
use std::sync::Arc;

use super::{Passage, Reader, ScorerDescriptor, ScorerError, SpanScore};
use crate::corpus::{raw_tokens, tokenize, Token};
use crate::index::InvertedIndex;

pub const MAX_SPAN_TOKENS: usize = 30;
pub const CONTEXT_WINDOW: usize = 15;

const LENGTH_PENALTY: f64 = 0.05;
const EDGE_PENALTY: f64 = 1.0;
const PUNCT_PENALTY: f64 = 1.0;
const ENTITY_CUT_PENALTY: f64 = 0.5;
const TYPE_BONUS: f64 = 2.0;

/// Words that rarely begin or end an answer.
const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being",
    "but", "by", "can", "could", "did", "do", "does", "during", "each", "for", "from", "had", "has", "have", "he",
    "her", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "later", "many", "may", "more",
    "most", "much", "no", "not", "of", "on", "once", "only", "or", "other", "our", "over", "she", "since", "so",
    "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
    "whose", "why", "will", "with", "would", "you",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnswerType {
    Number,
    Name,
    Any,
}

fn answer_type(question: &str) -> AnswerType {
    let words: Vec<String> = raw_tokens(question).into_iter().map(|t| t.term).collect();
    let has = |w: &str| words.iter().any(|x| x == w);
    let pair = |a: &str, b: &str| words.windows(2).any(|w| w[0] == a && w[1] == b);
    if has("when")
        || pair("what", "year")
        || pair("which", "year")
        || pair("how", "many")
        || pair("how", "much")
        || pair("how", "far")
        || pair("how", "long")
        || pair("how", "old")
        || has("population")
    {
        AnswerType::Number
    } else if has("who") || has("whom") || has("whose") || has("where") || has("which") {
        AnswerType::Name
    } else {
        AnswerType::Any
    }
}

pub struct BuiltinReader {
    index: Arc<InvertedIndex>,
}

impl BuiltinReader {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        BuiltinReader { index }
    }

    /// All candidate spans as (start token, end token exclusive, score).
    fn score_spans(&self, question: &str, text: &str, tokens: &[Token]) -> Vec<(usize, usize, f64)> {
        let stopwords = self.index.stopwords();
        let n = tokens.len();
        let wanted = answer_type(question);

        let mut q_terms: Vec<String> = tokenize(question, stopwords);
        q_terms.sort();
        q_terms.dedup();
        let q_slot: HashMap<&str, usize> = q_terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let q_idf: Vec<f64> = q_terms.iter().map(|t| self.index.idf(t)).collect();

        let first_char = |t: &Token| text[t.start..t.end].chars().next().unwrap_or(' ');
        let is_stop: Vec<bool> = tokens.iter().map(|t| stopwords.contains(&t.term)).collect();
        let is_function: Vec<bool> =
            tokens.iter().map(|t| FUNCTION_WORDS.binary_search(&t.term.as_str()).is_ok()).collect();
        let is_number: Vec<bool> = tokens.iter().map(|t| first_char(t).is_numeric()).collect();
        let is_capital: Vec<bool> = tokens.iter().map(|t| first_char(t).is_uppercase()).collect();
        let term_of: Vec<Option<usize>> = tokens.iter().map(|t| q_slot.get(t.term.as_str()).copied()).collect();
        let entity: Vec<bool> = (0..n).map(|i| !is_function[i] && (is_capital[i] || is_number[i])).collect();
        // What separates token i from token i + 1. A comma or period between
        // two digits (thousands separator, decimal point) separates nothing.
        let gap = |i: usize| &text[tokens[i].end..tokens[i + 1].start];
        let digit_join = |i: usize| {
            let g = gap(i);
            (g == "," || g == ".") && is_number[i] && is_number[i + 1]
        };
        let sentence_end: Vec<bool> = (0..n)
            .map(|i| i + 1 < n && !digit_join(i) && gap(i).chars().any(|c| matches!(c, '.' | '!' | '?' | '\n')))
            .collect();
        let punct_after: Vec<bool> = (0..n)
            .map(|i| {
                i + 1 < n && !digit_join(i) && gap(i).chars().any(|c| matches!(c, ',' | ';' | ':' | '(' | ')' | '"'))
            })
            .collect();
        let mut sentence = vec![0usize; n];
        for i in 1..n {
            sentence[i] = sentence[i - 1] + usize::from(sentence_end[i - 1]);
        }
        // content_before[i]: content tokens in [0, i).
        let mut content_before = vec![0usize; n + 1];
        for i in 0..n {
            content_before[i + 1] = content_before[i] + usize::from(!is_stop[i]);
        }
        // Nearest occurrence of each question term before / at-or-after each position.
        let q = q_terms.len();
        let mut prev_occ = vec![vec![None; n + 1]; q];
        let mut next_occ = vec![vec![None; n + 1]; q];
        for slot in 0..q {
            let mut last = None;
            for i in 0..=n {
                prev_occ[slot][i] = last;
                if i < n && term_of[i] == Some(slot) {
                    last = Some(i);
                }
            }
            let mut next = None;
            for i in (0..=n).rev() {
                if i < n && term_of[i] == Some(slot) {
                    next = Some(i);
                }
                next_occ[slot][i] = next;
            }
        }
        let decay = |d: usize| -> f64 {
            if d == 0 || d > CONTEXT_WINDOW {
                0.0
            } else {
                (CONTEXT_WINDOW + 1 - d) as f64 / CONTEXT_WINDOW as f64
            }
        };

        let mut out = Vec::with_capacity(n * MAX_SPAN_TOKENS.min(n));
        let mut inside = vec![false; q];
        for start in 0..n {
            inside.iter_mut().for_each(|v| *v = false);
            let mut punct = 0usize;
            for end in (start + 1)..=(start + MAX_SPAN_TOKENS).min(n) {
                let last = end - 1;
                if end - start > 1 {
                    if sentence_end[last - 1] {
                        break;
                    }
                    if punct_after[last - 1] {
                        punct += 1;
                    }
                }
                if let Some(slot) = term_of[last] {
                    inside[slot] = true;
                }
                let sent = sentence[start];
                let mut score = 0.0;
                for slot in 0..q {
                    if inside[slot] {
                        score -= q_idf[slot];
                        continue;
                    }
                    let left = prev_occ[slot][start]
                        .filter(|&p| sentence[p] == sent)
                        .map(|p| content_before[start] - content_before[p + 1] + 1);
                    let right = next_occ[slot][end]
                        .filter(|&p| sentence[p] == sent)
                        .map(|p| content_before[p] - content_before[end] + 1);
                    let d = match (left, right) {
                        (Some(a), Some(b)) => a.min(b),
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => continue,
                    };
                    score += q_idf[slot] * decay(d);
                }
                score -= LENGTH_PENALTY * (end - start - 1) as f64;
                score -= PUNCT_PENALTY * punct as f64;
                if is_function[start] || is_function[last] {
                    score -= EDGE_PENALTY;
                }
                if start > 0
                    && entity[start]
                    && entity[start - 1]
                    && !punct_after[start - 1]
                    && !sentence_end[start - 1]
                {
                    score -= ENTITY_CUT_PENALTY;
                }
                if end < n && entity[last] && entity[end] && !punct_after[last] && !sentence_end[last] {
                    score -= ENTITY_CUT_PENALTY;
                }
                let fits = match wanted {
                    AnswerType::Number => is_number[start] && end - start <= 3,
                    AnswerType::Name => is_capital[start] && is_capital[last] && !is_function[start],
                    AnswerType::Any => false,
                };
                if fits {
                    score += TYPE_BONUS;
                }
                out.push((start, end, score));
            }
        }
        out
    }
}

impl Reader for BuiltinReader {
    fn read(&self, question: &str, passage: Passage<'_>, k: usize) -> Result<Vec<SpanScore>, ScorerError> {
        let text = passage.text;
        let tokens = raw_tokens(text);
        let char_at = |byte: usize| text[..byte].chars().count();
        if tokens.is_empty() {
            let len = text.chars().count();
            if len == 0 {
                return Err(ScorerError::Protocol("cannot read an empty passage".into()));
            }
            return Ok(vec![SpanScore { start: 0, end: len, score: 0.0 }]);
        }
        let mut spans = self.score_spans(question, text, &tokens);
        spans.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        spans.truncate(k.max(1));
        Ok(spans
            .into_iter()
            .map(|(s, e, score)| SpanScore { start: char_at(tokens[s].start), end: char_at(tokens[e - 1].end), score })
            .collect())
    }

    fn descriptor(&self) -> ScorerDescriptor {
        ScorerDescriptor {
            kind: "builtin".into(),
            detail: format!(
                "window<={MAX_SPAN_TOKENS} context={CONTEXT_WINDOW} length={LENGTH_PENALTY} edge={EDGE_PENALTY} punct={PUNCT_PENALTY} entity_cut={ENTITY_CUT_PENALTY} type={TYPE_BONUS}"
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Paragraph, Stopwords};
    use crate::index::{build_index, Bm25Params};
    use crate::scorers::{read, TruncationLimits};

    fn index() -> Arc<InvertedIndex> {
        let paras = vec![
            Paragraph::new("f", "France", "The capital of France is Paris, a large city.", 0),
            Paragraph::new("t", "Tower", "The tower was designed by Gustave Eiffel and finished in 1889.", 0),
            Paragraph::new("e", "", "Eiffel Tower", 0),
            Paragraph::new("x", "Misc", "Other words about rivers and hills.", 0),
        ];
        Arc::new(build_index(paras, Bm25Params::default(), Stopwords::english()).unwrap())
    }

    fn top(question: &str, para_id: &str) -> String {
        let idx = index();
        let reader = BuiltinReader::new(idx.clone());
        let p = idx.paragraph_by_id(para_id).unwrap();
        read(&reader, question, p, 1, &TruncationLimits::default()).unwrap()[0].text.clone()
    }

    #[test]
    fn answers_adjacent_to_question_terms() {
        assert_eq!(top("What is the capital of France?", "f#0"), "Paris");
        assert_eq!(top("Who designed the tower?", "t#0"), "Gustave Eiffel");
    }

    #[test]
    fn paragraph_equal_to_answer_is_read_whole() {
        assert_eq!(top("Which landmark opened in 1889?", "e#0"), "Eiffel Tower");
    }

    #[test]
    fn function_words_are_sorted() {
        assert!(FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn question_words_set_the_answer_type() {
        assert_eq!(answer_type("When was it built?"), AnswerType::Number);
        assert_eq!(answer_type("How many workers were there?"), AnswerType::Number);
        assert_eq!(answer_type("Who designed it?"), AnswerType::Name);
        assert_eq!(answer_type("What did she study?"), AnswerType::Any);
    }

    #[test]
    fn spans_stay_inside_one_sentence() {
        let idx = index();
        let reader = BuiltinReader::new(idx.clone());
        let p = idx.paragraph_by_id("x#0").unwrap();
        for s in read(&reader, "rivers", p, 50, &TruncationLimits::default()).unwrap() {
            assert!(!s.text.contains('.') && !s.text.contains('\n'), "{:?}", s.text);
        }
    }

    #[test]
    fn returns_k_sorted_spans() {
        let idx = index();
        let reader = BuiltinReader::new(idx.clone());
        let p = idx.paragraph_by_id("x#0").unwrap();
        let spans = read(&reader, "unrelated", p, 5, &TruncationLimits::default()).unwrap();
        assert_eq!(spans.len(), 5);
        assert!(spans.windows(2).all(|w| w[0].s_reader >= w[1].s_reader));
        let one = read(&reader, "unrelated", p, 1, &TruncationLimits::default()).unwrap();
        assert_eq!(one.len(), 1);
    }
}
