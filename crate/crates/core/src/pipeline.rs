//! The retrieve → rank → (neural RM3) → read → fuse cascade.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Paragraph;
use crate::error::{Error, Result, Stage};
use crate::expansion::{expand_query, ExpansionParams};
use crate::fusion::{rank_answers, FusionWeights, RankedAnswer, SpanCandidate};
use crate::index::{Hit, InvertedIndex};
use crate::scorers::{rank, read, Ranker, Reader, ScorerDescriptor, TruncationLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_retriever: usize,
    pub read_fraction: f64,
    /// Explicit reader depth; overrides `read_fraction` when set.
    pub n_reader: Option<usize>,
    pub rm3: ExpansionParams,
    /// Re-score RM3-only candidates with the original question instead of
    /// giving them a zero retriever score.
    pub rm3_rescore_retriever: bool,
    pub fusion: FusionWeights,
    pub k_spans_per_paragraph: usize,
    pub limits: TruncationLimits,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_retriever: 100,
            read_fraction: 0.025,
            n_reader: None,
            rm3: ExpansionParams::default(),
            rm3_rescore_retriever: false,
            fusion: FusionWeights::default(),
            k_spans_per_paragraph: 1,
            limits: TruncationLimits::default(),
        }
    }
}

impl PipelineConfig {
    /// `n_reader` if set, else `max(1, ceil(read_fraction * n_retriever))`.
    pub fn n_reader_effective(&self) -> usize {
        match self.n_reader {
            Some(n) => n,
            None => ((self.read_fraction * self.n_retriever as f64 - 1e-9).ceil() as usize).max(1),
        }
    }

    pub fn second_pass_n(&self) -> usize {
        self.rm3.second_pass_n.unwrap_or(self.n_retriever)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.read_fraction > 0.0 && self.read_fraction <= 1.0) {
            return Err(Error::invalid(format!("read_fraction must be in (0, 1], got {}", self.read_fraction)));
        }
        if self.k_spans_per_paragraph == 0 {
            return Err(Error::invalid("k_spans_per_paragraph must be >= 1"));
        }
        if self.limits.ranker_para_tokens == 0 || self.limits.reader_total_tokens == 0 {
            return Err(Error::invalid("token limits must be positive"));
        }
        self.rm3.validate()?;
        self.fusion.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FirstPass,
    Rm3Pass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub para_id: String,
    #[serde(skip)]
    pub ordinal: usize,
    pub s_retriever: f64,
    pub s_ranker: f64,
    pub provenance: Provenance,
}

/// Candidate counts and wall times of one query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub retrieved: usize,
    pub ranked: usize,
    pub rm3_new: usize,
    pub read: usize,
    pub spans: usize,
    pub answers: usize,
    pub stage_ms: BTreeMap<Stage, f64>,
    pub total_ms: f64,
}

/// Everything one query produced, including the intermediate candidate lists
/// used for recall measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub answers: Vec<RankedAnswer>,
    pub trace: StageTrace,
    /// First-pass retrieval order.
    pub retrieved: Vec<Hit>,
    /// Every ranked candidate sorted by `s_ranker` descending, ties by id.
    pub pool: Vec<ScoredCandidate>,
    /// Raw per-span scores of the read candidates.
    pub spans: Vec<SpanCandidate>,
}

pub struct Pipeline {
    index: Arc<InvertedIndex>,
    ranker: Arc<dyn Ranker>,
    reader: Arc<dyn Reader>,
    config: PipelineConfig,
    workers: usize,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(
        index: Arc<InvertedIndex>,
        ranker: Arc<dyn Ranker>,
        reader: Arc<dyn Reader>,
        config: PipelineConfig,
        workers: usize,
    ) -> Result<Self> {
        config.validate()?;
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
        Ok(Pipeline { index, ranker, reader, config, workers, pool })
    }

    pub fn index(&self) -> &Arc<InvertedIndex> {
        &self.index
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn ranker_descriptor(&self) -> ScorerDescriptor {
        self.ranker.descriptor()
    }

    pub fn reader_descriptor(&self) -> ScorerDescriptor {
        self.reader.descriptor()
    }

    /// Same scorers and index under a different configuration.
    pub fn with_config(&self, config: PipelineConfig) -> Result<Pipeline> {
        Pipeline::new(Arc::clone(&self.index), Arc::clone(&self.ranker), Arc::clone(&self.reader), config, self.workers)
    }

    pub fn answer(&self, question: &str) -> Result<QueryOutcome> {
        self.pool.install(|| self.answer_inner(question))
    }

    /// Answers every question; outputs are in input order and each equals
    /// what [`Pipeline::answer`] returns for that question.
    pub fn answer_batch<S: AsRef<str> + Sync>(&self, questions: &[S]) -> Vec<Result<QueryOutcome>> {
        self.pool.install(|| questions.par_iter().map(|q| self.answer_inner(q.as_ref())).collect())
    }

    fn answer_inner(&self, question: &str) -> Result<QueryOutcome> {
        let started = Instant::now();
        let cfg = &self.config;
        let mut trace = StageTrace::default();
        let mut clock = Instant::now();
        let mut lap = |trace: &mut StageTrace, stage: Stage| {
            let now = Instant::now();
            *trace.stage_ms.entry(stage).or_default() += (now - clock).as_secs_f64() * 1e3;
            clock = now;
        };

        let first = self.index.retrieve(question, cfg.n_retriever);
        trace.retrieved = first.hits.len();
        lap(&mut trace, Stage::Retrieve);

        let first_ranked = self.rank_hits(question, &first.hits, Stage::Rank)?;
        let mut pool: Vec<ScoredCandidate> = first
            .hits
            .iter()
            .zip(&first_ranked)
            .map(|(h, &s)| ScoredCandidate {
                para_id: h.para_id.clone(),
                ordinal: h.ordinal,
                s_retriever: h.score,
                s_ranker: s,
                provenance: Provenance::FirstPass,
            })
            .collect();
        trace.ranked = pool.len();
        lap(&mut trace, Stage::Rank);

        if cfg.rm3.enabled && !pool.is_empty() {
            let q = self.index.question_vector(question);
            let feedback: Vec<(String, f64)> = pool.iter().map(|c| (c.para_id.clone(), c.s_ranker)).collect();
            let expanded = expand_query(&q, &feedback, &self.index, &cfg.rm3)?;
            let seen: HashSet<&str> = pool.iter().map(|c| c.para_id.as_str()).collect();
            let fresh: Vec<Hit> = self
                .index
                .retrieve_weighted(&expanded, self.config.second_pass_n())
                .hits
                .into_iter()
                .filter(|h| !seen.contains(h.para_id.as_str()))
                .collect();
            let scores = self.rank_hits(question, &fresh, Stage::Rm3)?;
            let counts = cfg.rm3_rescore_retriever.then(|| self.index.question_counts(question));
            for (h, s) in fresh.iter().zip(scores) {
                let s_retriever = match &counts {
                    Some(c) => c.iter().map(|(t, w)| w * self.index.bm25_score(t, h.ordinal).unwrap_or(0.0)).sum(),
                    None => 0.0,
                };
                pool.push(ScoredCandidate {
                    para_id: h.para_id.clone(),
                    ordinal: h.ordinal,
                    s_retriever,
                    s_ranker: s,
                    provenance: Provenance::Rm3Pass,
                });
            }
            trace.rm3_new = fresh.len();
            trace.ranked = pool.len();
        }
        pool.sort_by(|a, b| b.s_ranker.total_cmp(&a.s_ranker).then_with(|| a.para_id.cmp(&b.para_id)));
        lap(&mut trace, Stage::Rm3);

        let to_read = &pool[..cfg.n_reader_effective().min(pool.len())];
        let k = cfg.k_spans_per_paragraph;
        let read_spans: Vec<Vec<SpanCandidate>> = to_read
            .par_iter()
            .map(|c| {
                let p = &self.index.paragraphs()[c.ordinal];
                read(self.reader.as_ref(), question, p, k, &cfg.limits)
                    .map(|spans| {
                        spans
                            .into_iter()
                            .map(|s| SpanCandidate {
                                para_id: c.para_id.clone(),
                                text: s.text,
                                start: s.start_char,
                                end: s.end_char,
                                s_retriever: c.s_retriever,
                                s_ranker: c.s_ranker,
                                s_reader: s.s_reader,
                            })
                            .collect()
                    })
                    .map_err(|source| Error::Stage { stage: Stage::Read, source })
            })
            .collect::<Result<_>>()?;
        let spans: Vec<SpanCandidate> = read_spans.into_iter().flatten().collect();
        trace.read = to_read.len();
        trace.spans = spans.len();
        lap(&mut trace, Stage::Read);

        let answers = rank_answers(&spans, &cfg.fusion);
        trace.answers = answers.len();
        lap(&mut trace, Stage::Fuse);
        trace.total_ms = started.elapsed().as_secs_f64() * 1e3;

        Ok(QueryOutcome { answers, trace, retrieved: first.hits, pool, spans })
    }

    fn rank_hits(&self, question: &str, hits: &[Hit], stage: Stage) -> Result<Vec<f64>> {
        let paragraphs: Vec<&Paragraph> = hits.iter().map(|h| &self.index.paragraphs()[h.ordinal]).collect();
        paragraphs
            .par_iter()
            .map(|p| rank(self.ranker.as_ref(), question, p, &self.config.limits))
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|source| Error::Stage { stage, source })
    }
}
