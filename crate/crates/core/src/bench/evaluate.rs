//! Ten-fold evaluation over pluggable detection pipelines.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::gru::GruEncoder;
use super::metrics::{build_report, FoldPredictions, MetricsReport};
use super::{BenchError, FoldPlan};
use crate::dataset::PairDataset;
use crate::detect::{cosine_similarity, overlap_similarity, weighted_category_similarity, CategoryWeights};
use crate::embed::{train_word2vec, EmbedConfig, EmbeddingTable};
use crate::encoder::EncoderParams;
use crate::train::{finetune, pretrain, FineTuneHead, FinetuneConfig, PairObserver, PretrainConfig};

/// A trained detector for one fold.
pub trait Scorer: Send + Sync {
    /// Predicted clone flag for each pair index.
    fn predict(&self, dataset: &PairDataset, pairs: &[usize]) -> Vec<bool>;
}

/// Something that can be trained on a fold's training pairs.
pub trait Pipeline: Sync {
    fn name(&self) -> String;

    /// Train on `train_pairs`. Every pair read must be reported to
    /// `observer`.
    fn train(
        &self,
        dataset: &PairDataset,
        train_pairs: &[usize],
        fold: usize,
        observer: PairObserver,
    ) -> Result<Box<dyn Scorer + '_>, BenchError>;
}

/// Word2vec over every method's tokens. Uses no labels.
pub fn train_embeddings(dataset: &PairDataset, config: &EmbedConfig) -> Result<EmbeddingTable, BenchError> {
    Ok(train_word2vec(&dataset.token_streams(), config)?)
}

/// Vectors of the methods referenced by `pairs`, keyed by method index.
fn vectors_for(dataset: &PairDataset, pairs: &[usize], encode: impl Fn(usize) -> Vec<f64>) -> HashMap<usize, Vec<f64>> {
    let mut needed: Vec<usize> = pairs
        .iter()
        .flat_map(|&p| {
            let (a, b) = dataset.pair_indices(p);
            [a, b]
        })
        .collect();
    needed.sort_unstable();
    needed.dedup();
    needed.into_iter().map(|m| (m, encode(m))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoringMode {
    Cosine { threshold: f64 },
    Classifier { head_layers: usize, finetune: FinetuneConfig },
}

/// The attention encoder. `pretrain.epochs = 0` gives the random-frozen
/// (no contrastive training) variant.
#[derive(Debug, Clone)]
pub struct EncoderPipeline<'a> {
    pub table: &'a EmbeddingTable,
    pub pretrain: PretrainConfig,
    pub mode: ScoringMode,
}

struct CosineScorer<'a> {
    params: EncoderParams,
    table: &'a EmbeddingTable,
    threshold: f64,
}

impl Scorer for CosineScorer<'_> {
    fn predict(&self, dataset: &PairDataset, pairs: &[usize]) -> Vec<bool> {
        let vectors = vectors_for(dataset, pairs, |m| self.params.encode(&dataset.methods()[m].categorized, self.table));
        pairs
            .iter()
            .map(|&p| {
                let (a, b) = dataset.pair_indices(p);
                cosine_similarity(&vectors[&a], &vectors[&b]) > self.threshold
            })
            .collect()
    }
}

struct ClassifierScorer<'a> {
    params: EncoderParams,
    head: FineTuneHead,
    table: &'a EmbeddingTable,
    symmetric: bool,
}

impl Scorer for ClassifierScorer<'_> {
    fn predict(&self, dataset: &PairDataset, pairs: &[usize]) -> Vec<bool> {
        let vectors = vectors_for(dataset, pairs, |m| self.params.encode(&dataset.methods()[m].categorized, self.table));
        pairs
            .iter()
            .map(|&p| {
                let (a, b) = dataset.pair_indices(p);
                self.head.clone_probability(&vectors[&a], &vectors[&b], self.symmetric) > 0.5
            })
            .collect()
    }
}

impl Pipeline for EncoderPipeline<'_> {
    fn name(&self) -> String {
        let stage = if self.pretrain.epochs == 0 { "attention" } else { "attention+contrastive" };
        match &self.mode {
            ScoringMode::Cosine { .. } => format!("{stage}/cosine"),
            ScoringMode::Classifier { head_layers, .. } => format!("{stage}/classifier-{head_layers}L"),
        }
    }

    fn train(
        &self,
        dataset: &PairDataset,
        train_pairs: &[usize],
        fold: usize,
        observer: PairObserver,
    ) -> Result<Box<dyn Scorer + '_>, BenchError> {
        let mut cfg = self.pretrain.clone();
        cfg.seed = cfg.seed.wrapping_add(fold as u64);
        let params = if cfg.epochs == 0 {
            EncoderParams::init(cfg.seed)
        } else {
            pretrain(dataset, train_pairs, self.table, &cfg, Some(observer))?.params
        };
        match &self.mode {
            ScoringMode::Cosine { threshold } => Ok(Box::new(CosineScorer {
                params,
                table: self.table,
                threshold: *threshold,
            })),
            ScoringMode::Classifier { head_layers, finetune: ft } => {
                let mut ft = ft.clone();
                ft.train.seed = ft.train.seed.wrapping_add(fold as u64);
                let head = FineTuneHead::new(*head_layers, ft.train.seed);
                let out = finetune(params, head, dataset, train_pairs, self.table, &ft, Some(observer))?;
                Ok(Box::new(ClassifierScorer {
                    params: out.params,
                    head: out.head,
                    table: self.table,
                    symmetric: ft.symmetric,
                }))
            }
        }
    }
}

/// Token-overlap baseline; no training. With weights, the weighted
/// category similarity is used.
#[derive(Debug, Clone)]
pub struct OverlapPipeline {
    pub threshold: f64,
    pub weights: Option<CategoryWeights>,
}

impl Scorer for OverlapPipeline {
    fn predict(&self, dataset: &PairDataset, pairs: &[usize]) -> Vec<bool> {
        pairs
            .iter()
            .map(|&p| {
                let (a, b) = dataset.pair_indices(p);
                let (ma, mb) = (&dataset.methods()[a].categorized, &dataset.methods()[b].categorized);
                let s = match &self.weights {
                    Some(w) => weighted_category_similarity(ma, mb, w),
                    None => overlap_similarity(ma, mb),
                };
                s > self.threshold
            })
            .collect()
    }
}

impl Pipeline for OverlapPipeline {
    fn name(&self) -> String {
        if self.weights.is_some() { "weighted-overlap" } else { "overlap" }.to_string()
    }

    fn train(&self, _: &PairDataset, _: &[usize], _: usize, _: PairObserver) -> Result<Box<dyn Scorer + '_>, BenchError> {
        Ok(Box::new(self.clone()))
    }
}

/// Random-frozen two-layer GRU over the raw token sequence, cosine rule.
#[derive(Debug, Clone)]
pub struct GruPipeline<'a> {
    pub table: &'a EmbeddingTable,
    pub seed: u64,
    pub threshold: f64,
}

struct GruScorer<'a> {
    encoder: GruEncoder,
    table: &'a EmbeddingTable,
    threshold: f64,
}

impl Scorer for GruScorer<'_> {
    fn predict(&self, dataset: &PairDataset, pairs: &[usize]) -> Vec<bool> {
        let vectors = vectors_for(dataset, pairs, |m| self.encoder.encode(&dataset.methods()[m].tokens, self.table));
        pairs
            .iter()
            .map(|&p| {
                let (a, b) = dataset.pair_indices(p);
                cosine_similarity(&vectors[&a], &vectors[&b]) > self.threshold
            })
            .collect()
    }
}

impl Pipeline for GruPipeline<'_> {
    fn name(&self) -> String {
        "gru/cosine".to_string()
    }

    fn train(&self, _: &PairDataset, _: &[usize], fold: usize, _: PairObserver) -> Result<Box<dyn Scorer + '_>, BenchError> {
        Ok(Box::new(GruScorer {
            encoder: GruEncoder::new(self.seed.wrapping_add(fold as u64)),
            table: self.table,
            threshold: self.threshold,
        }))
    }
}

/// Train on the complement of each fold, predict the fold, and aggregate.
pub fn evaluate(dataset: &PairDataset, plan: &FoldPlan, pipeline: &dyn Pipeline, jobs: usize) -> Result<MetricsReport, BenchError> {
    evaluate_with_hook(dataset, plan, pipeline, jobs, None)
}

/// As `evaluate`; `hook(fold, pair)` sees every pair read during training.
/// Reading a test pair of the fold being trained fails with `Leakage`.
pub fn evaluate_with_hook(
    dataset: &PairDataset,
    plan: &FoldPlan,
    pipeline: &dyn Pipeline,
    jobs: usize,
    hook: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<MetricsReport, BenchError> {
    let run_fold = |f: usize| -> Result<FoldPredictions, BenchError> {
        let test: HashSet<usize> = plan.folds[f].iter().copied().collect();
        let leaked = AtomicUsize::new(usize::MAX);
        let observer = |p: usize| {
            if let Some(h) = hook {
                h(f, p);
            }
            if test.contains(&p) {
                leaked.store(p, Ordering::Relaxed);
            }
        };
        let train_pairs = plan.train_indices(f);
        let scorer = pipeline.train(dataset, &train_pairs, f, &observer)?;
        let leak = leaked.load(Ordering::Relaxed);
        if leak != usize::MAX {
            return Err(BenchError::Leakage { fold: f, pair: leak });
        }
        let predicted = scorer.predict(dataset, &plan.folds[f]);
        Ok(plan.folds[f].iter().copied().zip(predicted).collect())
    };
    let folds: Vec<FoldPredictions> = if jobs <= 1 {
        (0..plan.len()).map(run_fold).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::detect::DetectError::Pool(e.to_string()))?;
        pool.install(|| (0..plan.len()).into_par_iter().map(run_fold).collect::<Result<_, _>>())?
    };
    Ok(build_report(dataset, &folds))
}
