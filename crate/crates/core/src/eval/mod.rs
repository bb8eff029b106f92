//! Answer metrics, lenient and strict recall curves, and latency measurement.

pub mod metrics;
pub mod squad;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Paragraph;
use crate::error::{Error, Result, Stage};
use crate::fusion::{RankedAnswer, TuneCase};
use crate::pipeline::{Pipeline, QueryOutcome};
use metrics::{exact_match, f1, jaccard, AnswerMatcher};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_QUERIES_PER_RUN: usize = 200;

/// One line of a questions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub qid: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_article_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_paragraph: Option<String>,
}

impl GoldRecord {
    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::invalid(format!("{}: empty question", self.qid)));
        }
        if self.answers.is_empty() || self.answers.iter().any(|a| a.trim().is_empty()) {
            return Err(Error::invalid(format!("{}: answers must be non-empty strings", self.qid)));
        }
        Ok(())
    }
}

/// Reads a questions file, skipping unparsable or invalid records. Returns
/// the records and the number skipped.
pub fn load_questions(path: &Path) -> Result<(Vec<GoldRecord>, usize)> {
    let (records, bad_lines) = crate::jsonl::read_lenient::<GoldRecord>(path)?;
    let total = records.len();
    let valid: Vec<GoldRecord> = records.into_iter().filter(|r| r.validate().is_ok()).collect();
    let skipped = bad_lines.len() + (total - valid.len());
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed question records", path.display());
    }
    Ok((valid, skipped))
}

/// 1 if any of the first `n` paragraphs contains a gold answer.
pub fn recall_at(candidates: &[&Paragraph], matcher: &AnswerMatcher, n: usize) -> u8 {
    u8::from(candidates.iter().take(n).any(|p| matcher.matches(p.full_text())))
}

/// 1 if any of the first `n` paragraph bodies has token-set Jaccard `>= tau`
/// with the gold paragraph.
pub fn strict_recall_at(candidates: &[&Paragraph], gold_paragraph: &str, n: usize, tau: f64) -> u8 {
    u8::from(candidates.iter().take(n).any(|p| jaccard(&p.body, gold_paragraph) >= tau))
}

/// 1 if any of the first `n` answers is an exact match.
pub fn topn_em<S: AsRef<str>>(answers: &[RankedAnswer], golds: &[S], n: usize) -> u8 {
    u8::from(answers.iter().take(n).any(|a| exact_match(&a.text, golds) == 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub runs: usize,
    pub queries_per_run: usize,
    pub workers: usize,
    pub per_run_mean_ms: Vec<f64>,
    /// Minimum of `per_run_mean_ms`.
    pub reported_ms: f64,
    /// Mean per-query time of each stage in the fastest run.
    pub stage_breakdown_ms: BTreeMap<Stage, f64>,
    /// Mean per-query end-to-end time in the fastest run.
    pub mean_query_ms: f64,
    pub failed_queries: usize,
}

impl LatencyReport {
    pub fn breakdown_total_ms(&self) -> f64 {
        self.stage_breakdown_ms.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: usize,
    pub skipped_records: usize,
    pub failed_questions: usize,
    /// Questions without a gold paragraph, left out of strict recall.
    pub strict_excluded: usize,
    pub tau: f64,
    pub n_retriever: usize,
    pub em: f64,
    pub f1: f64,
    pub recall_at_n_retriever: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub ranker_recall_at: BTreeMap<usize, f64>,
    pub strict_recall_at: BTreeMap<usize, f64>,
    pub strict_ranker_recall_at: BTreeMap<usize, f64>,
    pub topn_em: BTreeMap<usize, f64>,
    /// Digest of the run manifest this report came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub retriever_recall: f64,
    pub ranker_recall: f64,
    pub strict_retriever_recall: f64,
    pub strict_ranker_recall: f64,
    pub topn_em: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out =
        String::from("N,retriever_recall,ranker_recall,strict_retriever_recall,strict_ranker_recall,topn_em\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n, r.retriever_recall, r.ranker_recall, r.strict_retriever_recall, r.strict_ranker_recall, r.topn_em
        );
    }
    out
}

/// Per-question result of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEval {
    pub qid: String,
    pub outcome: std::result::Result<QueryOutcome, String>,
    pub em: u8,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub curves: Vec<CurveRow>,
    pub questions: Vec<QuestionEval>,
}

impl EvalRun {
    /// Read-candidate spans of every answered question, for weight tuning.
    pub fn tune_cases(&self, records: &[GoldRecord]) -> Vec<TuneCase> {
        records
            .iter()
            .zip(&self.questions)
            .filter_map(|(r, q)| {
                q.outcome.as_ref().ok().map(|o| TuneCase { golds: r.answers.clone(), candidates: o.spans.clone() })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_grid: Vec<usize>,
    pub tau: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { n_grid: vec![1, 5, 20, 100], tau: DEFAULT_TAU }
    }
}

/// Runs every question through `pipeline` and computes all metrics. The
/// result depends only on the inputs, not on the worker count.
pub fn run_eval(
    records: &[GoldRecord],
    skipped_records: usize,
    pipeline: &Pipeline,
    settings: &EvalSettings,
) -> Result<EvalRun> {
    if !(settings.tau >= 0.0 && settings.tau <= 1.0) {
        return Err(Error::invalid(format!("tau must be in [0, 1], got {}", settings.tau)));
    }
    let mut n_grid = settings.n_grid.clone();
    n_grid.sort_unstable();
    n_grid.dedup();

    let questions: Vec<&str> = records.iter().map(|r| r.question.as_str()).collect();
    let outcomes = pipeline.answer_batch(&questions);
    let index = pipeline.index();
    let n_retriever = pipeline.config().n_retriever;

    let zero = || n_grid.iter().map(|&n| (n, 0u64)).collect::<BTreeMap<usize, u64>>();
    let (mut ret, mut rank, mut sret, mut srank, mut topn) = (zero(), zero(), zero(), zero(), zero());
    let mut em_sum = 0u64;
    let mut f1_sum = 0.0;
    let mut recall_nr = 0u64;
    let mut failed = 0usize;
    let mut strict_excluded = 0usize;
    let mut per_question = Vec::with_capacity(records.len());

    for (record, outcome) in records.iter().zip(outcomes) {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                log::warn!("{}: {e}", record.qid);
                failed += 1;
                if record.gold_paragraph.is_none() {
                    strict_excluded += 1;
                }
                per_question.push(QuestionEval {
                    qid: record.qid.clone(),
                    outcome: Err(e.to_string()),
                    em: 0,
                    f1: 0.0,
                });
                continue;
            }
        };
        let matcher = AnswerMatcher::new(&record.answers);
        let retrieved: Vec<&Paragraph> = outcome.retrieved.iter().map(|h| &index.paragraphs()[h.ordinal]).collect();
        let ranked: Vec<&Paragraph> = outcome.pool.iter().map(|c| &index.paragraphs()[c.ordinal]).collect();
        let top = outcome.answers.first().map_or("", |a| a.text.as_str());
        let em = exact_match(top, &record.answers);
        let f = f1(top, &record.answers);
        em_sum += u64::from(em);
        f1_sum += f;
        recall_nr += u64::from(recall_at(&retrieved, &matcher, n_retriever));
        for &n in &n_grid {
            *ret.get_mut(&n).unwrap() += u64::from(recall_at(&retrieved, &matcher, n));
            *rank.get_mut(&n).unwrap() += u64::from(recall_at(&ranked, &matcher, n));
            *topn.get_mut(&n).unwrap() += u64::from(topn_em(&outcome.answers, &record.answers, n));
            if let Some(gold) = &record.gold_paragraph {
                *sret.get_mut(&n).unwrap() += u64::from(strict_recall_at(&retrieved, gold, n, settings.tau));
                *srank.get_mut(&n).unwrap() += u64::from(strict_recall_at(&ranked, gold, n, settings.tau));
            }
        }
        if record.gold_paragraph.is_none() {
            strict_excluded += 1;
        }
        per_question.push(QuestionEval { qid: record.qid.clone(), outcome: Ok(outcome), em, f1: f });
    }

    let total = records.len();
    let strict_total = total - strict_excluded;
    let frac = |hits: u64, of: usize| if of == 0 { 0.0 } else { hits as f64 / of as f64 };
    let rate = |m: &BTreeMap<usize, u64>, of: usize| {
        m.iter().map(|(&n, &h)| (n, frac(h, of))).collect::<BTreeMap<usize, f64>>()
    };
    let report = EvalReport {
        questions: total,
        skipped_records,
        failed_questions: failed,
        strict_excluded,
        tau: settings.tau,
        n_retriever,
        em: frac(em_sum, total),
        f1: if total == 0 { 0.0 } else { f1_sum / total as f64 },
        recall_at_n_retriever: frac(recall_nr, total),
        recall_at: rate(&ret, total),
        ranker_recall_at: rate(&rank, total),
        strict_recall_at: rate(&sret, strict_total),
        strict_ranker_recall_at: rate(&srank, strict_total),
        topn_em: rate(&topn, total),
        manifest_digest: None,
        latency: None,
    };
    let curves = n_grid
        .iter()
        .map(|n| CurveRow {
            n: *n,
            retriever_recall: report.recall_at[n],
            ranker_recall: report.ranker_recall_at[n],
            strict_retriever_recall: report.strict_recall_at[n],
            strict_ranker_recall: report.strict_ranker_recall_at[n],
            topn_em: report.topn_em[n],
        })
        .collect();
    Ok(EvalRun { report, curves, questions: per_question })
}

/// `runs` timed passes over a batch of `queries_per_run` questions (cycled
/// from `questions`), after one untimed warm-up pass. Each run's mean is
/// batch wall time divided by the batch size.
pub fn run_benchmark(
    questions: &[String],
    pipeline: &Pipeline,
    runs: usize,
    queries_per_run: usize,
) -> Result<LatencyReport> {
    if questions.is_empty() || runs == 0 || queries_per_run == 0 {
        return Err(Error::invalid("benchmark needs questions, runs >= 1 and queries_per_run >= 1"));
    }
    let batch: Vec<&str> = questions.iter().cycle().take(queries_per_run).map(String::as_str).collect();
    let _ = pipeline.answer_batch(&batch);

    let mut per_run = Vec::with_capacity(runs);
    let mut best: Option<(f64, BTreeMap<Stage, f64>, f64, usize)> = None;
    for _ in 0..runs {
        let started = Instant::now();
        let outcomes = pipeline.answer_batch(&batch);
        let mean = started.elapsed().as_secs_f64() * 1e3 / batch.len() as f64;
        per_run.push(mean);
        if best.as_ref().is_some_and(|b| b.0 <= mean) {
            continue;
        }
        let mut stages: BTreeMap<Stage, f64> = Stage::ALL.iter().map(|s| (*s, 0.0)).collect();
        let mut total = 0.0;
        let mut failed = 0;
        for o in &outcomes {
            match o {
                Ok(o) => {
                    for (s, ms) in &o.trace.stage_ms {
                        *stages.entry(*s).or_default() += ms;
                    }
                    total += o.trace.total_ms;
                }
                Err(_) => failed += 1,
            }
        }
        let n = batch.len() as f64;
        stages.values_mut().for_each(|v| *v /= n);
        best = Some((mean, stages, total / n, failed));
    }
    let (reported_ms, stage_breakdown_ms, mean_query_ms, failed_queries) = best.expect("runs >= 1");
    Ok(LatencyReport {
        runs,
        queries_per_run: batch.len(),
        workers: pipeline.workers(),
        per_run_mean_ms: per_run,
        reported_ms,
        stage_breakdown_ms,
        mean_query_ms,
        failed_queries,
    })
}
