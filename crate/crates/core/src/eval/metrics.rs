//! SQuAD answer normalization, EM/F1, answer containment and paragraph
//! similarity.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::{tokenize, Stopwords};

/// Lowercase, strip ASCII punctuation, drop the articles `a`/`an`/`the` as
/// whole words, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = remove_articles(&no_punct);
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replaces every whole-word article with a space, where a word is a maximal
/// run of alphanumerics or `_`.
fn remove_articles(s: &str) -> String {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if matches!(word.as_str(), "a" | "an" | "the") {
            out.push(' ');
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in s.chars() {
        if is_word(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// 1 when the normalized prediction equals any normalized gold answer.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> u8 {
    let p = normalize_answer(pred);
    u8::from(golds.iter().any(|g| normalize_answer(g.as_ref()) == p))
}

/// Maximum token-level F1 over the gold answers.
pub fn f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    golds.iter().map(|g| f1_single(pred, g.as_ref())).fold(0.0, f64::max)
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if pt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pt.len() as f64;
    let recall = same as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Normalized substring containment of any gold answer in `text`. Answers
/// that normalize to the empty string never match.
pub fn contains_answer<S: AsRef<str>>(text: &str, golds: &[S]) -> bool {
    let haystack = normalize_answer(text);
    golds.iter().any(|g| {
        let needle = normalize_answer(g.as_ref());
        !needle.is_empty() && haystack.contains(&needle)
    })
}

/// Same as [`contains_answer`] with answers normalized up front.
pub struct AnswerMatcher {
    needles: Vec<String>,
}

impl AnswerMatcher {
    pub fn new<S: AsRef<str>>(golds: &[S]) -> Self {
        AnswerMatcher {
            needles: golds.iter().map(|g| normalize_answer(g.as_ref())).filter(|n| !n.is_empty()).collect(),
        }
    }

    pub fn matches(&self, text: &str) -> bool {
        if self.needles.is_empty() {
            return false;
        }
        let haystack = normalize_answer(text);
        self.needles.iter().any(|n| haystack.contains(n.as_str()))
    }
}

/// Token-set Jaccard similarity, stopwords kept.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let none = Stopwords::none();
    let sa: BTreeSet<String> = tokenize(a, &none).into_iter().collect();
    let sb: BTreeSet<String> = tokenize(b, &none).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}
