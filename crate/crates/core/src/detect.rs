//! Clone decisions: cosine threshold, classifier head, token overlap.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::encoder::EncoderParams;
use crate::lexcat::{category_order, CategorizedMethod, LexemeCounts, TokenCategory, NUM_CATEGORIES};
use crate::train::FineTuneHead;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("unknown method id `{0}`")]
    UnknownId(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Cosine,
    Classifier,
    Overlap,
    CategoryOverlap,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Cosine => "cosine",
            DetectorKind::Classifier => "classifier",
            DetectorKind::Overlap => "overlap",
            DetectorKind::CategoryOverlap => "category_overlap",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneVerdict {
    pub id1: String,
    pub id2: String,
    pub score: f64,
    pub is_clone: bool,
    pub detector: DetectorKind,
}

/// One non-negative weight per category, canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryWeights(pub [f64; NUM_CATEGORIES]);

impl CategoryWeights {
    pub fn zeros() -> Self {
        Self([0.0; NUM_CATEGORIES])
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_CATEGORIES as f64; NUM_CATEGORIES])
    }

    pub fn indicator(cat: TokenCategory) -> Self {
        let mut w = [0.0; NUM_CATEGORIES];
        w[cat.index()] = 1.0;
        Self(w)
    }

    pub fn with(mut self, cat: TokenCategory, weight: f64) -> Self {
        self.0[cat.index()] = weight;
        self
    }

    pub fn get(&self, cat: TokenCategory) -> f64 {
        self.0[cat.index()]
    }
}

impl FromStr for CategoryWeights {
    type Err = String;

    /// 15 numbers separated by whitespace or commas.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values: Vec<f64> = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
            .collect::<Result<_, _>>()?;
        if values.len() != NUM_CATEGORIES {
            return Err(format!("expected {NUM_CATEGORIES} weights, found {}", values.len()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("weights must be finite and >= 0".into());
        }
        let mut w = [0.0; NUM_CATEGORIES];
        w.copy_from_slice(&values);
        Ok(Self(w))
    }
}

/// v1·v2 / √(‖v1‖²‖v2‖²); exactly 1 for identical nonzero vectors, 0 if
/// either norm is 0.
pub fn cosine_similarity(v1: &[f64], v2: &[f64]) -> f64 {
    let dot: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum();
    let s1: f64 = v1.iter().map(|a| a * a).sum();
    let s2: f64 = v2.iter().map(|b| b * b).sum();
    if s1 == 0.0 || s2 == 0.0 {
        return 0.0;
    }
    (dot / (s1 * s2).sqrt()).clamp(-1.0, 1.0)
}

fn verdict(cm1: &CategorizedMethod, cm2: &CategorizedMethod, score: f64, is_clone: bool, detector: DetectorKind) -> CloneVerdict {
    CloneVerdict {
        id1: cm1.source_id.clone(),
        id2: cm2.source_id.clone(),
        score,
        is_clone,
        detector,
    }
}

/// Clone iff cosine > threshold (strict).
pub fn detect_cosine(
    m1: &CategorizedMethod,
    m2: &CategorizedMethod,
    params: &EncoderParams,
    table: &EmbeddingTable,
    threshold: f64,
) -> CloneVerdict {
    let score = cosine_similarity(&params.encode(m1, table), &params.encode(m2, table));
    verdict(m1, m2, score, score > threshold, DetectorKind::Cosine)
}

/// Clone iff the head's clone probability > 0.5.
pub fn detect_classifier(
    m1: &CategorizedMethod,
    m2: &CategorizedMethod,
    params: &EncoderParams,
    head: &FineTuneHead,
    table: &EmbeddingTable,
    symmetric: bool,
) -> CloneVerdict {
    let score = head.clone_probability(&params.encode(m1, table), &params.encode(m2, table), symmetric);
    verdict(m1, m2, score, score > 0.5, DetectorKind::Classifier)
}

fn multiset_intersection(a: &LexemeCounts, b: &LexemeCounts) -> u64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(lex, &n)| u64::from(n.min(large.get(lex).copied().unwrap_or(0))))
        .sum()
}

fn counts_total(a: &LexemeCounts) -> u64 {
    a.values().map(|&n| u64::from(n)).sum()
}

/// Shared tokens (multiset, per category) over the larger token count.
/// Both empty → 1.0.
pub fn overlap_similarity(cm1: &CategorizedMethod, cm2: &CategorizedMethod) -> f64 {
    let denom = cm1.total_tokens().max(cm2.total_tokens());
    if denom == 0 {
        return 1.0;
    }
    let shared: u64 = category_order()
        .iter()
        .map(|&c| multiset_intersection(cm1.category(c), cm2.category(c)))
        .sum();
    shared as f64 / denom as f64
}

/// Overlap restricted to one category. Both empty → 0.0.
pub fn category_overlap_similarity(cm1: &CategorizedMethod, cm2: &CategorizedMethod, cat: TokenCategory) -> f64 {
    let (a, b) = (cm1.category(cat), cm2.category(cat));
    let denom = counts_total(a).max(counts_total(b));
    if denom == 0 {
        return 0.0;
    }
    multiset_intersection(a, b) as f64 / denom as f64
}

/// Σ_c w_c · category_overlap_similarity(c)
pub fn weighted_category_similarity(cm1: &CategorizedMethod, cm2: &CategorizedMethod, w: &CategoryWeights) -> f64 {
    category_order()
        .iter()
        .map(|&c| {
            let wc = w.get(c);
            if wc == 0.0 {
                0.0
            } else {
                wc * category_overlap_similarity(cm1, cm2, c)
            }
        })
        .sum()
}

/// Scoring strategy for corpus scans.
#[derive(Debug, Clone, Copy)]
pub enum Detector<'a> {
    Cosine {
        params: &'a EncoderParams,
        table: &'a EmbeddingTable,
        threshold: f64,
    },
    Classifier {
        params: &'a EncoderParams,
        head: &'a FineTuneHead,
        table: &'a EmbeddingTable,
        symmetric: bool,
    },
    Overlap {
        threshold: f64,
    },
    CategoryOverlap {
        weights: &'a CategoryWeights,
        threshold: f64,
    },
}

impl Detector<'_> {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Cosine { .. } => DetectorKind::Cosine,
            Detector::Classifier { .. } => DetectorKind::Classifier,
            Detector::Overlap { .. } => DetectorKind::Overlap,
            Detector::CategoryOverlap { .. } => DetectorKind::CategoryOverlap,
        }
    }

    fn encoder(&self) -> Option<(&EncoderParams, &EmbeddingTable)> {
        match *self {
            Detector::Cosine { params, table, .. } | Detector::Classifier { params, table, .. } => Some((params, table)),
            _ => None,
        }
    }

    fn score(&self, m1: &CategorizedMethod, m2: &CategorizedMethod, v1: Option<&[f64]>, v2: Option<&[f64]>) -> CloneVerdict {
        let kind = self.kind();
        let (score, is_clone) = match *self {
            Detector::Cosine { threshold, .. } => {
                let s = cosine_similarity(v1.expect("vector"), v2.expect("vector"));
                (s, s > threshold)
            }
            Detector::Classifier { head, symmetric, .. } => {
                let s = head.clone_probability(v1.expect("vector"), v2.expect("vector"), symmetric);
                (s, s > 0.5)
            }
            Detector::Overlap { threshold } => {
                let s = overlap_similarity(m1, m2);
                (s, s > threshold)
            }
            Detector::CategoryOverlap { weights, threshold } => {
                let s = weighted_category_similarity(m1, m2, weights);
                (s, s > threshold)
            }
        };
        verdict(m1, m2, score, is_clone, kind)
    }
}

/// Score `pairs` (by source id) over `methods` with up to `parallelism`
/// workers. Each referenced method is encoded once; output order follows
/// `pairs`.
pub fn detect_corpus(
    methods: &[CategorizedMethod],
    pairs: &[(String, String)],
    detector: &Detector<'_>,
    parallelism: usize,
) -> Result<Vec<CloneVerdict>, DetectError> {
    let index: HashMap<&str, usize> = methods.iter().enumerate().map(|(i, m)| (m.source_id.as_str(), i)).collect();
    let resolved: Vec<(usize, usize)> = pairs
        .iter()
        .map(|(a, b)| {
            let ia = *index.get(a.as_str()).ok_or_else(|| DetectError::UnknownId(a.clone()))?;
            let ib = *index.get(b.as_str()).ok_or_else(|| DetectError::UnknownId(b.clone()))?;
            Ok((ia, ib))
        })
        .collect::<Result<_, DetectError>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| DetectError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        let vectors: HashMap<usize, Vec<f64>> = match detector.encoder() {
            Some((params, table)) => {
                let mut needed: Vec<usize> = resolved.iter().flat_map(|&(a, b)| [a, b]).collect();
                needed.sort_unstable();
                needed.dedup();
                needed
                    .par_iter()
                    .map(|&i| (i, params.encode(&methods[i], table)))
                    .collect()
            }
            None => HashMap::new(),
        };
        resolved
            .par_iter()
            .map(|&(a, b)| {
                detector.score(
                    &methods[a],
                    &methods[b],
                    vectors.get(&a).map(Vec::as_slice),
                    vectors.get(&b).map(Vec::as_slice),
                )
            })
            .collect()
    }))
}
