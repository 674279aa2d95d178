//! Skip-gram token embeddings with negative sampling.
//!
//! Sentences are the linear token streams of methods (before
//! categorization). Tokens rarer than `min_count` are replaced by the
//! reserved UNK token, which is also what out-of-vocabulary lookups return.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{write_f32s, write_u32, write_u64, FileError, LeReader};
use crate::lexcat::TokenStream;

pub const EMBED_DIM: usize = 100;
pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: u32 = 0;
pub const EMBED_MAGIC: &[u8; 6] = b"CCEMB1";

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
}

/// Token ↔ id map with corpus frequencies. Id 0 is always UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Result<Self, FileError> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(FileError::format("vocabulary must start with the UNK token"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(FileError::format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, freqs, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `UNK_ID` when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn freq(&self, token: &str) -> u64 {
        self.freqs[self.id(token) as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Count tokens; those with frequency below `min_count` fold into UNK.
pub fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], min_count: u64) -> Result<Vocabulary, EmbedError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let mut unk_freq = 0;
    let mut kept: Vec<(&str, u64)> = Vec::new();
    for (t, c) in counts {
        if c >= min_count.max(1) && t != UNK_TOKEN {
            kept.push((t, c));
        } else {
            unk_freq += c;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![UNK_TOKEN.to_string()];
    let mut freqs = vec![unk_freq];
    for (t, c) in kept {
        tokens.push(t.to_string());
        freqs.push(c);
    }
    Ok(Vocabulary::from_parts(tokens, freqs).expect("built vocabulary is well-formed"))
}

/// Vocabulary over method token streams.
pub fn build_vocab_from_streams(corpus: &[TokenStream], min_count: u64) -> Result<Vocabulary, EmbedError> {
    build_vocab(&sentences_of(corpus), min_count)
}

fn sentences_of(corpus: &[TokenStream]) -> Vec<Vec<&str>> {
    corpus.iter().map(|ts| ts.lexemes().collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), crate::config::ConfigError> {
        use crate::config::parse_value;
        match key {
            "window" => self.window = parse_value(key, value)?,
            "negatives" => self.negatives = parse_value(key, value)?,
            "epochs" | "embed_epochs" => self.epochs = parse_value(key, value)?,
            "lr" | "embed_lr" => self.lr = parse_value(key, value)?,
            "min_count" => self.min_count = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(crate::config::ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.window < 1 {
            return Err(EmbedError::InvalidConfig("window must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(EmbedError::InvalidConfig("negatives must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(EmbedError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EmbedError::InvalidConfig("lr must be > 0".into()));
        }
        Ok(())
    }
}

/// V×100 token vectors plus their vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    data: Vec<f32>,
}

impl EmbeddingTable {
    /// Build a table from explicit rows; row 0 belongs to UNK.
    pub fn from_rows(tokens: &[&str], rows: &[[f32; EMBED_DIM]]) -> Self {
        assert_eq!(tokens.len(), rows.len());
        let mut all = vec![UNK_TOKEN.to_string()];
        all.extend(tokens.iter().map(|t| t.to_string()));
        let vocab = Vocabulary::from_parts(all, vec![0; tokens.len() + 1]).expect("distinct tokens");
        let mut data = vec![0.0; EMBED_DIM];
        for r in rows {
            data.extend_from_slice(r);
        }
        Self { vocab, data }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        EMBED_DIM
    }

    pub fn row(&self, id: u32) -> &[f32] {
        let i = id as usize * EMBED_DIM;
        &self.data[i..i + EMBED_DIM]
    }

    /// The stored row for `lexeme`, or the UNK row.
    pub fn lookup(&self, lexeme: &str) -> &[f32] {
        self.row(self.vocab.id(lexeme))
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn token_cosine(&self, a: &str, b: &str) -> f64 {
        cosine_f32(self.lookup(a), self.lookup(b))
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FileError> {
        w.write_all(EMBED_MAGIC)?;
        write_u32(w, self.vocab.len() as u32)?;
        write_u32(w, EMBED_DIM as u32)?;
        for (t, &f) in self.vocab.tokens.iter().zip(&self.vocab.freqs) {
            write_u32(w, t.len() as u32)?;
            w.write_all(t.as_bytes())?;
            write_u64(w, f)?;
        }
        write_f32s(w, self.data.iter().copied())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self, FileError> {
        let mut r = LeReader::new(r);
        r.expect_magic(EMBED_MAGIC)?;
        let v = r.u32("vocabulary size")? as usize;
        let dim = r.u32("dimension")? as usize;
        if dim != EMBED_DIM {
            return Err(FileError::format(format!("dimension {dim}, expected {EMBED_DIM}")));
        }
        if v == 0 {
            return Err(FileError::format("empty vocabulary"));
        }
        let mut tokens = Vec::with_capacity(v.min(1 << 20));
        let mut freqs = Vec::with_capacity(v.min(1 << 20));
        for _ in 0..v {
            let len = r.u32("token length")? as usize;
            let bytes = r.bytes(len, "token")?;
            let token = String::from_utf8(bytes).map_err(|_| FileError::format("token is not UTF-8"))?;
            tokens.push(token);
            freqs.push(r.u64("token frequency")?);
        }
        let data = r.f32s(v * EMBED_DIM, "embedding rows")?;
        r.expect_eof()?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(FileError::format("non-finite embedding value"));
        }
        Ok(Self {
            vocab: Vocabulary::from_parts(tokens, freqs)?,
            data,
        })
    }
}

pub(crate) fn cosine_f32(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Train skip-gram embeddings on method token streams.
pub fn train_word2vec(corpus: &[TokenStream], config: &EmbedConfig) -> Result<EmbeddingTable, EmbedError> {
    train_on_sentences(&sentences_of(corpus), config)
}

/// Single-threaded skip-gram with negative sampling; deterministic per seed.
pub fn train_on_sentences<S: AsRef<str>>(sentences: &[Vec<S>], config: &EmbedConfig) -> Result<EmbeddingTable, EmbedError> {
    config.validate()?;
    let vocab = build_vocab(sentences, config.min_count)?;
    let v = vocab.len();
    let dim = EMBED_DIM;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut input: Vec<f32> = (0..v * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output = vec![0.0f32; v * dim];

    let weights: Vec<f64> = vocab.freqs.iter().map(|&f| (f as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).expect("at least one token has positive frequency");

    let ids: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| vocab.id(t.as_ref())).collect())
        .collect();
    let total_words: usize = ids.iter().map(Vec::len).sum();
    let total_steps = (total_words * config.epochs).max(1) as f64;
    let lr0 = config.lr as f32;

    let mut processed = 0usize;
    let mut grad = vec![0.0f32; dim];
    for _ in 0..config.epochs {
        for sentence in &ids {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = processed as f64 / total_steps;
                let alpha = lr0 * (1.0 - progress as f32).max(1e-4);
                processed += 1;
                let shrink = rng.gen_range(0..config.window);
                let reach = config.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let ctx = sentence[ctx_pos] as usize;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let l1 = ctx * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (center as usize, 1.0f32)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == center as usize {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let l2 = target * dim;
                        let dot: f32 = (0..dim).map(|d| input[l1 + d] * output[l2 + d]).sum();
                        let g = (label - sigmoid(dot)) * alpha;
                        for d in 0..dim {
                            grad[d] += g * output[l2 + d];
                            output[l2 + d] += g * input[l1 + d];
                        }
                    }
                    for d in 0..dim {
                        input[l1 + d] += grad[d];
                    }
                }
            }
        }
    }
    debug_assert!(input.iter().all(|x| x.is_finite()));
    Ok(EmbeddingTable { vocab, data: input })
}
