//! Per-stage score normalization and weighted-average fusion.
//!
//! Scores of each stage are shifted per query so the best candidate sits at
//! exactly 1 (`s - max + 1`), which maps every stage into `(-inf, 1]` and
//! makes the fused ranking invariant to constant offsets of any stage.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{exact_match, normalize_answer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_retriever: f64,
    pub w_ranker: f64,
    pub w_reader: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights { w_retriever: 0.2, w_ranker: 0.4, w_reader: 0.4 }
    }
}

impl FusionWeights {
    pub fn new(w_retriever: f64, w_ranker: f64, w_reader: f64) -> Result<Self> {
        let w = FusionWeights { w_retriever, w_ranker, w_reader };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_retriever, self.w_ranker, self.w_reader];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("fusion weights must be >= 0, got {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("fusion weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub retriever: f64,
    pub ranker: f64,
    pub reader: f64,
}

/// `s - max(s) + 1` for every score.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let Some(max) = scores.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    scores.iter().map(|s| s - max + 1.0).collect()
}

pub fn fuse(n: &NormalizedScores, w: &FusionWeights) -> f64 {
    w.w_retriever * n.retriever + w.w_ranker * n.ranker + w.w_reader * n.reader
}

/// A span read from a paragraph, with the raw scores of all three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCandidate {
    pub para_id: String,
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub s_retriever: f64,
    pub s_ranker: f64,
    pub s_reader: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub text: String,
    pub para_id: String,
    pub start: usize,
    pub end: usize,
    pub s_retriever: f64,
    pub s_ranker: f64,
    pub s_reader: f64,
    pub fused: f64,
}

/// Normalizes each stage over `candidates`, fuses, sorts by fused score
/// (ties by `para_id`, then start) and keeps the best answer per normalized
/// text.
pub fn rank_answers(candidates: &[SpanCandidate], w: &FusionWeights) -> Vec<RankedAnswer> {
    let col = |f: fn(&SpanCandidate) -> f64| normalize_scores(&candidates.iter().map(f).collect::<Vec<_>>());
    let n_ret = col(|c| c.s_retriever);
    let n_rank = col(|c| c.s_ranker);
    let n_read = col(|c| c.s_reader);
    let mut answers: Vec<RankedAnswer> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| RankedAnswer {
            text: c.text.clone(),
            para_id: c.para_id.clone(),
            start: c.start,
            end: c.end,
            s_retriever: c.s_retriever,
            s_ranker: c.s_ranker,
            s_reader: c.s_reader,
            fused: fuse(&NormalizedScores { retriever: n_ret[i], ranker: n_rank[i], reader: n_read[i] }, w),
        })
        .collect();
    answers.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then_with(|| a.para_id.cmp(&b.para_id))
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    let mut seen = HashSet::new();
    answers.retain(|a| seen.insert(normalize_answer(&a.text)));
    answers
}

/// Cached stage output of one dev question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCase {
    pub golds: Vec<String>,
    pub candidates: Vec<SpanCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub weights: FusionWeights,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: FusionWeights,
    pub best_em: f64,
    pub points: Vec<GridPoint>,
}

impl TuneReport {
    /// `w1,w2,w3,em` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w1,w2,w3,em\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.weights.w_retriever, p.weights.w_ranker, p.weights.w_reader, p.em);
        }
        out
    }
}

/// Simplex lattice `{(i, j, k) / m : i + j + k = m}` with `m = 1 / grid_step`.
pub fn simplex_grid(grid_step: f64) -> Result<Vec<FusionWeights>> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::invalid(format!("grid_step must be in (0, 0.5], got {grid_step}")));
    }
    let m = (1.0 / grid_step).round();
    if (m * grid_step - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("grid_step {grid_step} does not divide 1 into a whole number of steps")));
    }
    let m = m as usize;
    let mut points = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for i in 0..=m {
        for j in 0..=(m - i) {
            let k = m - i - j;
            points.push(FusionWeights {
                w_retriever: i as f64 / m as f64,
                w_ranker: j as f64 / m as f64,
                w_reader: k as f64 / m as f64,
            });
        }
    }
    Ok(points)
}

/// Top-1 exact match of the fused ranking, averaged over cases.
pub fn fused_em(cases: &[TuneCase], w: &FusionWeights) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let hits: u32 = cases
        .iter()
        .map(|c| rank_answers(&c.candidates, w).first().map_or(0, |a| exact_match(&a.text, &c.golds) as u32))
        .sum();
    hits as f64 / cases.len() as f64
}

/// Exhaustive simplex search for the weights maximizing top-1 EM. Ties go to
/// the larger reader weight, then the larger ranker weight.
pub fn tune_weights(cases: &[TuneCase], grid_step: f64) -> Result<TuneReport> {
    if cases.is_empty() {
        return Err(Error::invalid("tuning needs a non-empty dev set"));
    }
    let grid = simplex_grid(grid_step)?;
    let points: Vec<GridPoint> = grid.par_iter().map(|w| GridPoint { weights: *w, em: fused_em(cases, w) }).collect();
    let best = points
        .iter()
        .max_by(|a, b| {
            a.em.total_cmp(&b.em)
                .then(a.weights.w_reader.total_cmp(&b.weights.w_reader))
                .then(a.weights.w_ranker.total_cmp(&b.weights.w_ranker))
        })
        .expect("grid is non-empty");
    Ok(TuneReport { best: best.weights, best_em: best.em, points })
}
