//! Experimental harness: ingestion, folds, evaluation, synthetic data, timing.

mod bases;
mod evaluate;
mod gru;
mod metrics;
mod synth;
mod timing;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ClonePair, CloneType, PairDataset};
use crate::embed::EmbedError;
use crate::lexcat::LexError;
use crate::train::TrainError;

pub use crate::dataset::{clone_classes, DatasetMethod};
pub use bases::BASE_METHODS;
pub use evaluate::{
    evaluate, evaluate_with_hook, train_embeddings, EncoderPipeline, GruPipeline, OverlapPipeline, Pipeline, Scorer,
    ScoringMode,
};
pub use gru::{GruEncoder, GruLayer};
pub use metrics::{build_report, confusion, Confusion, FoldMetrics, FoldPredictions, MetricsReport, Prf, TypeRecall};
pub use synth::{
    classify_pair, layout_variant, make_variant, rename_variant, swap_variant, swappable_lines, synth_clones, SynthSpec,
    VariantKind, VARIANT_ROTATION,
};
pub use timing::{time_detection, TimingReport};

pub const NUM_FOLDS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("pair references missing function `{0}`")]
    MissingFunction(String),
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("need at least {needed} pairs for {needed}-fold cross-validation, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error("cannot lex `{0}`: {1}")]
    Lex(String, LexError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("test pair {pair} of fold {fold} was read during training")]
    Leakage { fold: usize, pair: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Lex one `.java` file, or every `*.java` file of a directory in name
/// order. The id of a method is its file stem. The result has no pairs.
pub fn load_sources(path: &Path) -> Result<PairDataset, BenchError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "java"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut ds = PairDataset::new();
    for file in &files {
        let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let source = fs::read_to_string(file).map_err(io_err(file))?;
        ds.add_method(synth::dataset_method(&id, source)?);
    }
    Ok(ds)
}

/// Lex every `*.java` file in `functions_dir` (id = file stem) and read the
/// pairs CSV `id1,id2,label[,clone_type]`. A missing clone type is derived
/// from the two token streams for clones and is NONCLONE otherwise.
pub fn load_dataset(functions_dir: &Path, pairs_file: &Path) -> Result<PairDataset, BenchError> {
    if !functions_dir.is_dir() {
        return Err(BenchError::Io {
            path: functions_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut ds = load_sources(functions_dir)?;
    let text = fs::read_to_string(pairs_file).map_err(io_err(pairs_file))?;
    ds.pairs = parse_pairs(&text, &ds)?;
    Ok(ds)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

/// Unlabeled `id1,id2` rows; extra columns are ignored and a leading
/// `id1,id2` header is skipped.
pub fn parse_id_pairs(text: &str) -> Result<Vec<(String, String)>, BenchError> {
    let mut pairs = Vec::new();
    for (n, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| BenchError::BadRow {
            line: e.position().map_or(n as u64 + 1, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(n as u64 + 1, |p| p.line());
        if rec.len() < 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(BenchError::BadRow {
                line,
                reason: "expected `id1,id2`".into(),
            });
        }
        if n == 0 && &rec[0] == "id1" && &rec[1] == "id2" {
            continue;
        }
        pairs.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(pairs)
}

/// Parse the pairs CSV against already-loaded methods.
pub fn parse_pairs(text: &str, ds: &PairDataset) -> Result<Vec<ClonePair>, BenchError> {
    let mut pairs = Vec::new();
    for (n, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| BenchError::BadRow {
            line: e.position().map_or(n as u64 + 1, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(n as u64 + 1, |p| p.line());
        let bad = |reason: String| BenchError::BadRow { line, reason };
        if n == 0 && rec.get(2) == Some("label") {
            continue;
        }
        if rec.len() < 3 || rec.len() > 4 {
            return Err(bad(format!("expected 3 or 4 fields, found {}", rec.len())));
        }
        let label: u8 = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label must be 0 or 1, found `{other}`"))),
        };
        let (id1, id2) = (rec[0].to_string(), rec[1].to_string());
        for id in [&id1, &id2] {
            if ds.method(id).is_none() {
                return Err(BenchError::MissingFunction(id.clone()));
            }
        }
        let clone_type = match rec.get(3).filter(|s| !s.is_empty()) {
            Some(t) => t.parse::<CloneType>().map_err(bad)?,
            None if label == 0 => CloneType::NONCLONE,
            None => {
                let (a, b) = (ds.method(&id1).expect("checked"), ds.method(&id2).expect("checked"));
                classify_pair(&a.tokens, &b.tokens, &a.categorized, &b.categorized)
            }
        };
        if (label == 0) != (clone_type == CloneType::NONCLONE) {
            return Err(bad(format!("label {label} contradicts clone type {clone_type}")));
        }
        pairs.push(ClonePair {
            id1,
            id2,
            label,
            clone_type,
        });
    }
    Ok(pairs)
}

/// Disjoint pair-index folds covering the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Every pair index not in fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Seeded shuffle, then round-robin into ten folds.
pub fn make_folds(dataset: &PairDataset, seed: u64) -> Result<FoldPlan, BenchError> {
    make_k_folds(dataset.pairs.len(), NUM_FOLDS, seed)
}

pub fn make_k_folds(n_pairs: usize, k: usize, seed: u64) -> Result<FoldPlan, BenchError> {
    if n_pairs < k || k == 0 {
        return Err(BenchError::TooFewPairs {
            needed: k,
            found: n_pairs,
        });
    }
    let mut order: Vec<usize> = (0..n_pairs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, p) in order.into_iter().enumerate() {
        folds[i % k].push(p);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_pairs() {
        let p = parse_id_pairs("id1,id2\na,b\n# note\nc , d,1\n").unwrap();
        assert_eq!(p, vec![("a".into(), "b".into()), ("c".into(), "d".into())]);
        assert!(matches!(parse_id_pairs("a,b\nc\n"), Err(BenchError::BadRow { line: 2, .. })));
    }

    #[test]
    fn fold_sizes() {
        let plan = make_k_folds(100, 10, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 10));
        let plan = make_k_folds(101, 10, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 10, 10, 10, 10, 11]);
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(plan, make_k_folds(101, 10, 1).unwrap());
        assert_ne!(plan, make_k_folds(101, 10, 2).unwrap());
        assert!(matches!(make_k_folds(9, 10, 0), Err(BenchError::TooFewPairs { .. })));
        assert_eq!(plan.train_indices(0).len() + plan.folds[0].len(), 101);
    }
}
