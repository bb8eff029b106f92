//! Linear lexical ranker trained with logistic loss.
//!
//! Feature vector (feature_spec_version 1), computed on the truncated passage:
//!
//! | # | feature |
//! |---|---------|
//! | 0 | BM25 of the question against the passage, collection stats from the index |
//! | 1 | distinct question terms present |
//! | 2 | idf-weighted distinct overlap |
//! | 3 | fraction of distinct question terms covered |
//! | 4 | `ln(1 + passage length)` |
//! | 5 | distinct question terms present in the title |

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::RankExample;
use super::{Passage, Ranker, ScorerDescriptor, ScorerError, TruncationLimits};
use crate::corpus::{tokenize, truncate_to_tokens};
use crate::error::{Error, Result};
use crate::index::InvertedIndex;

pub const FEATURE_SPEC_VERSION: u32 = 1;
pub const FEATURE_COUNT: usize = 6;

pub type Features = [f64; FEATURE_COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinRankerModel {
    pub feature_weights: Vec<f64>,
    pub bias: f64,
    pub feature_spec_version: u32,
    /// Per-feature standardization applied before the dot product.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl BuiltinRankerModel {
    pub fn zeros() -> Self {
        BuiltinRankerModel {
            feature_weights: vec![0.0; FEATURE_COUNT],
            bias: 0.0,
            feature_spec_version: FEATURE_SPEC_VERSION,
            feature_mean: vec![0.0; FEATURE_COUNT],
            feature_scale: vec![1.0; FEATURE_COUNT],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_spec_version != FEATURE_SPEC_VERSION {
            return Err(Error::invalid(format!(
                "ranker model has feature_spec_version {}, expected {FEATURE_SPEC_VERSION}",
                self.feature_spec_version
            )));
        }
        for v in [&self.feature_weights, &self.feature_mean, &self.feature_scale] {
            if v.len() != FEATURE_COUNT {
                return Err(Error::invalid("ranker model has wrong feature count"));
            }
        }
        let finite = self
            .feature_weights
            .iter()
            .chain(&self.feature_mean)
            .chain(&self.feature_scale)
            .chain(std::iter::once(&self.bias))
            .all(|v| v.is_finite());
        if !finite || self.feature_scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::invalid("ranker model has non-finite values"));
        }
        Ok(())
    }

    pub fn logit(&self, x: &Features) -> f64 {
        let mut z = self.bias;
        for i in 0..FEATURE_COUNT {
            z += self.feature_weights[i] * (x[i] - self.feature_mean[i]) / self.feature_scale[i];
        }
        z
    }
}

/// Extracts ranker features using an index for idf and length statistics.
#[derive(Clone)]
pub struct FeatureExtractor {
    index: Arc<InvertedIndex>,
}

impl FeatureExtractor {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        FeatureExtractor { index }
    }

    pub fn features(&self, question: &str, title: &str, text: &str) -> Features {
        let stopwords = self.index.stopwords();
        let q_terms = tokenize(question, stopwords);
        let distinct: BTreeSet<&str> = q_terms.iter().map(String::as_str).collect();
        let p_terms = tokenize(text, stopwords);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &p_terms {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        let p_len = p_terms.len() as f64;
        let bm25: f64 =
            q_terms.iter().map(|t| self.index.bm25_from_tf(t, tf.get(t.as_str()).copied().unwrap_or(0), p_len)).sum();
        let present: Vec<&str> = distinct.iter().copied().filter(|t| tf.contains_key(t)).collect();
        let idf_overlap: f64 = present.iter().map(|t| self.index.idf(t)).sum();
        let coverage = if distinct.is_empty() { 0.0 } else { present.len() as f64 / distinct.len() as f64 };
        let title_terms: BTreeSet<String> = tokenize(title, stopwords).into_iter().collect();
        let title_overlap = distinct.iter().filter(|t| title_terms.contains(**t)).count();
        [bm25, present.len() as f64, idf_overlap, coverage, (1.0 + p_len).ln(), title_overlap as f64]
    }

    /// Features of a dataset example, truncated the same way the ranker
    /// truncates passages. The title comes from the index when the paragraph
    /// is known.
    pub fn example_features(&self, ex: &RankExample, limits: &TruncationLimits) -> Features {
        let title = self.index.paragraph_by_id(&ex.para_id).map_or("", |p| p.title.as_str());
        let text = truncate_to_tokens(&ex.text, limits.ranker_para_tokens);
        self.features(&ex.question, title, text)
    }
}

pub struct BuiltinRanker {
    model: BuiltinRankerModel,
    features: FeatureExtractor,
}

impl BuiltinRanker {
    pub fn new(model: BuiltinRankerModel, index: Arc<InvertedIndex>) -> Result<Self> {
        model.validate()?;
        Ok(BuiltinRanker { model, features: FeatureExtractor::new(index) })
    }

    pub fn model(&self) -> &BuiltinRankerModel {
        &self.model
    }
}

impl Ranker for BuiltinRanker {
    fn score(&self, question: &str, passage: Passage<'_>) -> Result<f64, ScorerError> {
        let x = self.features.features(question, passage.title, passage.text);
        Ok(self.model.logit(&x))
    }

    fn descriptor(&self) -> ScorerDescriptor {
        ScorerDescriptor { kind: "builtin".into(), detail: serde_json::to_string(&self.model).unwrap_or_default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 400, learning_rate: 0.5, l2: 1e-3, holdout_fraction: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_size: usize,
    pub holdout_size: usize,
    pub positives: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `None` when the dataset was too small to hold anything out.
    pub holdout_accuracy: Option<f64>,
}

/// Trains (or, given `init`, continues training) a builtin ranker model with
/// full-batch gradient descent on the logistic loss. A seeded shuffle splits
/// off `holdout_fraction` of the examples for the reported accuracy.
/// Continued training keeps the initial model's feature standardization.
pub fn train_builtin_ranker(
    dataset: &[RankExample],
    index: Arc<InvertedIndex>,
    limits: &TruncationLimits,
    config: &TrainConfig,
    init: Option<&BuiltinRankerModel>,
) -> Result<(BuiltinRankerModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let positives = dataset.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::Training("dataset must contain both positive and negative labels".into()));
    }
    if let Some(m) = init {
        m.validate()?;
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::invalid("holdout_fraction must be in [0, 1)"));
    }

    let extractor = FeatureExtractor::new(index);
    let xs: Vec<Features> = dataset.iter().map(|e| extractor.example_features(e, limits)).collect();
    let ys: Vec<f64> = dataset.iter().map(|e| e.label as f64).collect();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let holdout_size = if dataset.len() >= 2 {
        ((dataset.len() as f64 * config.holdout_fraction).round() as usize).min(dataset.len() - 1)
    } else {
        0
    };
    let (holdout, train) = order.split_at(holdout_size);
    let mut train = train.to_vec();
    train.sort_unstable();

    let mut model = match init {
        Some(m) => m.clone(),
        None => {
            let mut m = BuiltinRankerModel::zeros();
            standardize(&mut m, train.iter().map(|&i| &xs[i]));
            m
        }
    };

    let n = train.len() as f64;
    let z: Vec<Features> = xs
        .iter()
        .map(|x| {
            let mut out = [0.0; FEATURE_COUNT];
            for i in 0..FEATURE_COUNT {
                out[i] = (x[i] - model.feature_mean[i]) / model.feature_scale[i];
            }
            out
        })
        .collect();
    for _ in 0..config.epochs {
        let mut grad_w = [0.0; FEATURE_COUNT];
        let mut grad_b = 0.0;
        for &i in &train {
            let p = sigmoid(linear(&model, &z[i]));
            let err = p - ys[i];
            for f in 0..FEATURE_COUNT {
                grad_w[f] += err * z[i][f];
            }
            grad_b += err;
        }
        for f in 0..FEATURE_COUNT {
            let g = grad_w[f] / n + config.l2 * model.feature_weights[f];
            model.feature_weights[f] -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * grad_b / n;
    }

    let loss = train.iter().map(|&i| log_loss(linear(&model, &z[i]), ys[i])).sum::<f64>() / n;
    let accuracy = |idx: &[usize]| {
        idx.iter().filter(|&&i| (linear(&model, &z[i]) > 0.0) == (ys[i] > 0.5)).count() as f64 / idx.len() as f64
    };
    let report = TrainReport {
        train_size: train.len(),
        holdout_size,
        positives,
        train_loss: loss,
        train_accuracy: accuracy(&train),
        holdout_accuracy: (!holdout.is_empty()).then(|| accuracy(holdout)),
    };
    model.validate()?;
    Ok((model, report))
}

fn standardize<'a>(model: &mut BuiltinRankerModel, xs: impl Iterator<Item = &'a Features>) {
    let xs: Vec<&Features> = xs.collect();
    let n = xs.len().max(1) as f64;
    for f in 0..FEATURE_COUNT {
        let mean = xs.iter().map(|x| x[f]).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x[f] - mean).powi(2)).sum::<f64>() / n;
        model.feature_mean[f] = mean;
        model.feature_scale[f] = if var > 1e-12 { var.sqrt() } else { 1.0 };
    }
}

fn linear(model: &BuiltinRankerModel, z: &Features) -> f64 {
    let mut s = model.bias;
    for f in 0..FEATURE_COUNT {
        s += model.feature_weights[f] * z[f];
    }
    s
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_loss(logit: f64, y: f64) -> f64 {
    // log(1 + e^-x) for y=1, log(1 + e^x) for y=0, computed stably.
    let x = if y > 0.5 { logit } else { -logit };
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}
