//! Builders for binary "does this paragraph answer the question" datasets.
//!
//! - [`build_dataset_finetune`]: the gold paragraph plus one answer-free
//!   paragraph from the same article.
//! - [`build_dataset_aug1`]: the top `n` retrieved paragraphs.
//! - [`build_dataset_aug2`]: the top `n` of `m` retrieved paragraphs after
//!   re-ranking.
//!
//! Labels always come from normalized answer containment.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rank_many, Ranker, ScorerError, TruncationLimits};
use crate::corpus::Paragraph;
use crate::eval::metrics::{jaccard, AnswerMatcher};
use crate::eval::GoldRecord;
use crate::index::InvertedIndex;

pub const DEFAULT_AUG_M: usize = 100;
pub const DEFAULT_AUG_N: usize = 5;

/// Minimum similarity for a paragraph to stand in for a gold paragraph whose
/// text does not match any paragraph exactly.
const GOLD_MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankExample {
    pub question: String,
    pub para_id: String,
    pub text: String,
    pub label: u8,
}

impl RankExample {
    fn labeled(question: &str, paragraph: &Paragraph, matcher: &AnswerMatcher) -> Self {
        RankExample {
            question: question.to_string(),
            para_id: paragraph.para_id.clone(),
            text: paragraph.full_text().to_string(),
            label: u8::from(matcher.matches(paragraph.full_text())),
        }
    }
}

/// Finds the paragraph a gold record was written from: an exact body match
/// within the gold article, else the most similar paragraph of that article
/// if it clears [`GOLD_MATCH_THRESHOLD`].
pub fn resolve_gold_paragraph<'a>(
    record: &GoldRecord,
    by_article: &HashMap<&str, Vec<&'a Paragraph>>,
) -> Option<&'a Paragraph> {
    let article = record.gold_article_id.as_deref()?;
    let gold = record.gold_paragraph.as_deref()?.trim();
    let candidates = by_article.get(article)?;
    if let Some(p) = candidates.iter().find(|p| p.body.trim() == gold) {
        return Some(p);
    }
    candidates
        .iter()
        .map(|p| (jaccard(&p.body, gold), *p))
        .filter(|(s, _)| *s >= GOLD_MATCH_THRESHOLD)
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.position.cmp(&a.1.position)))
        .map(|(_, p)| p)
}

pub fn paragraphs_by_article(paragraphs: &[Paragraph]) -> HashMap<&str, Vec<&Paragraph>> {
    let mut map: HashMap<&str, Vec<&Paragraph>> = HashMap::new();
    for p in paragraphs {
        map.entry(p.article_id.as_str()).or_default().push(p);
    }
    map
}

/// One positive per record and, where the article has one, a negative drawn
/// (seeded) from its paragraphs that contain none of the gold answers.
/// Records whose gold paragraph cannot be located are skipped.
pub fn build_dataset_finetune(records: &[GoldRecord], paragraphs: &[Paragraph], seed: u64) -> Vec<RankExample> {
    let by_article = paragraphs_by_article(paragraphs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for record in records {
        let Some(gold) = resolve_gold_paragraph(record, &by_article) else {
            skipped += 1;
            continue;
        };
        let matcher = AnswerMatcher::new(&record.answers);
        out.push(RankExample {
            question: record.question.clone(),
            para_id: gold.para_id.clone(),
            text: gold.full_text().to_string(),
            label: 1,
        });
        let eligible: Vec<&&Paragraph> = by_article[gold.article_id.as_str()]
            .iter()
            .filter(|p| p.para_id != gold.para_id && !matcher.matches(p.full_text()))
            .collect();
        if let Some(neg) = eligible.choose(&mut rng) {
            out.push(RankExample::labeled(&record.question, neg, &matcher));
        }
    }
    if skipped > 0 {
        log::warn!("finetune dataset: {skipped} records without a locatable gold paragraph");
    }
    out
}

/// The top `n` retrieved paragraphs per question, labeled by containment.
pub fn build_dataset_aug1(records: &[GoldRecord], index: &InvertedIndex, n: usize) -> Vec<RankExample> {
    let mut out = Vec::new();
    for record in records {
        let matcher = AnswerMatcher::new(&record.answers);
        for hit in index.retrieve(&record.question, n).hits {
            let p = &index.paragraphs()[hit.ordinal];
            out.push(RankExample::labeled(&record.question, p, &matcher));
        }
    }
    out
}

/// Retrieves `m` paragraphs, re-ranks them, keeps the top `n`. The re-rank
/// sort is stable, so ranker ties keep retrieval order.
pub fn build_dataset_aug2(
    records: &[GoldRecord],
    index: &InvertedIndex,
    ranker: &dyn Ranker,
    limits: &TruncationLimits,
    m: usize,
    n: usize,
) -> Result<Vec<RankExample>, ScorerError> {
    let mut out = Vec::new();
    for record in records {
        let matcher = AnswerMatcher::new(&record.answers);
        let hits = index.retrieve(&record.question, m.max(n)).hits;
        let paras: Vec<&Paragraph> = hits.iter().map(|h| &index.paragraphs()[h.ordinal]).collect();
        let scores = rank_many(ranker, &record.question, &paras, limits)?;
        let mut order: Vec<usize> = (0..paras.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        for &i in order.iter().take(n) {
            out.push(RankExample::labeled(&record.question, paras[i], &matcher));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Stopwords;
    use crate::index::{build_index, Bm25Params};
    use crate::scorers::{ConstantRanker, OracleRanker};

    fn record(question: &str, answer: &str, article: &str, para: &str) -> GoldRecord {
        GoldRecord {
            qid: "q".into(),
            question: question.into(),
            answers: vec![answer.into()],
            gold_article_id: Some(article.into()),
            gold_paragraph: Some(para.into()),
        }
    }

    #[test]
    fn finetune_pairs_gold_with_answer_free_sibling() {
        let paras = vec![
            Paragraph::new("a", "Oxygen", "Oxygen was found by Priestley.", 0),
            Paragraph::new("a", "Oxygen", "It is a gas.", 1),
            Paragraph::new("b", "Solo", "Only paragraph about Lavoisier.", 0),
        ];
        let recs = vec![
            record("Who found oxygen?", "Priestley", "a", "Oxygen was found by Priestley."),
            record("Who?", "Lavoisier", "b", "Only paragraph about Lavoisier."),
        ];
        let ds = build_dataset_finetune(&recs, &paras, 0);
        let summary: Vec<(&str, u8)> = ds.iter().map(|e| (e.para_id.as_str(), e.label)).collect();
        assert_eq!(summary, [("a#0", 1), ("a#1", 0), ("b#0", 1)]);
    }

    #[test]
    fn finetune_skips_siblings_containing_the_answer() {
        let paras = vec![Paragraph::new("a", "T", "Paris is big.", 0), Paragraph::new("a", "T", "Paris again.", 1)];
        let ds = build_dataset_finetune(&[record("q", "paris", "a", "Paris is big.")], &paras, 0);
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn aug_labels_and_constant_ranker_equivalence() {
        let paras: Vec<Paragraph> = (0..8)
            .map(|i| {
                let body = if i % 3 == 0 { "river delta answer" } else { "river plain" };
                Paragraph::new(&format!("d{i}"), "", &format!("{body} w{i}"), 0)
            })
            .collect();
        let idx = build_index(paras, Bm25Params::default(), Stopwords::english()).unwrap();
        let recs = vec![record("river delta", "answer", "d0", "")];
        let aug1 = build_dataset_aug1(&recs, &idx, 5);
        assert_eq!(aug1.len(), 5);
        let positives = aug1.iter().filter(|e| e.label == 1).count();
        assert_eq!(positives, 3);
        let aug2 = build_dataset_aug2(&recs, &idx, &ConstantRanker(0.0), &TruncationLimits::default(), 8, 5).unwrap();
        assert_eq!(aug1, aug2);

        let none = build_dataset_aug1(&[record("river", "zzz", "d0", "")], &idx, 5);
        assert!(none.iter().all(|e| e.label == 0));

        let oracle = OracleRanker::new([("river", vec!["answer"])]);
        let aug2 = build_dataset_aug2(
            &[record("river", "answer", "d0", "")],
            &idx,
            &oracle,
            &TruncationLimits::default(),
            8,
            3,
        )
        .unwrap();
        assert!(aug2.iter().all(|e| e.label == 1));
    }
}
