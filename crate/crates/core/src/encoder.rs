//! Two-stage program encoder.
//!
//! Token encoding: every category owns an attention block; its input
//! sequence holds one row per distinct lexeme (sorted), scaled by the
//! lexeme's count, and the block output is mean-pooled into a category
//! vector. Type encoding: the 15 category vectors form a sequence for one
//! more block, with absent categories masked out as keys and queries. The
//! method vector is the mean over present positions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{write_f32s, write_u32, FileError, LeReader};
use crate::embed::EmbeddingTable;
use crate::lexcat::{category_order, CategorizedMethod, LexemeCounts, TokenCategory, NUM_CATEGORIES};
use crate::nn::{AttentionBlock, BlockCache, BLOCK_TENSORS};

pub const ENCODER_MAGIC: &[u8; 6] = b"CCENC1";

/// 15 category blocks (canonical order) plus the type-level block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub category_blocks: Vec<AttentionBlock>,
    pub type_block: AttentionBlock,
}

/// A method's encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVector {
    pub source_id: String,
    pub vector: Vec<f64>,
}

/// Head-averaged type-level attention probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub type_attention: Array2<f64>,
    pub present_mask: [bool; NUM_CATEGORIES],
}

impl AttentionTrace {
    pub fn empty() -> Self {
        Self {
            type_attention: Array2::zeros((NUM_CATEGORIES, NUM_CATEGORIES)),
            present_mask: [false; NUM_CATEGORIES],
        }
    }
}

impl EncoderParams {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let category_blocks = (0..NUM_CATEGORIES).map(|_| AttentionBlock::init(&mut rng)).collect();
        let type_block = AttentionBlock::init(&mut rng);
        Self {
            category_blocks,
            type_block,
        }
    }

    /// Narrow encoder for tests and gradient checks.
    pub fn init_with_dims(seed: u64, d_model: usize, heads: usize, d_ff: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let category_blocks = (0..NUM_CATEGORIES)
            .map(|_| AttentionBlock::init_with_dims(&mut rng, d_model, heads, d_ff))
            .collect();
        let type_block = AttentionBlock::init_with_dims(&mut rng, d_model, heads, d_ff);
        Self {
            category_blocks,
            type_block,
        }
    }

    pub fn d_model(&self) -> usize {
        self.type_block.d_model()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            category_blocks: self.category_blocks.iter().map(AttentionBlock::zeros_like).collect(),
            type_block: self.type_block.zeros_like(),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &AttentionBlock> {
        self.category_blocks.iter().chain(std::iter::once(&self.type_block))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut AttentionBlock> {
        self.category_blocks.iter_mut().chain(std::iter::once(&mut self.type_block))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(AttentionBlock::is_finite)
    }

    pub fn num_params(&self) -> usize {
        self.blocks().map(AttentionBlock::num_params).sum()
    }

    /// Encode one method and return its vector and attention trace.
    pub fn encode_method(&self, cm: &CategorizedMethod, table: &EmbeddingTable) -> (MethodVector, AttentionTrace) {
        let fwd = self.forward(cm, table);
        let trace = fwd.trace();
        (
            MethodVector {
                source_id: cm.source_id.clone(),
                vector: fwd.output.to_vec(),
            },
            trace,
        )
    }

    /// Vector only.
    pub fn encode(&self, cm: &CategorizedMethod, table: &EmbeddingTable) -> Vec<f64> {
        self.forward(cm, table).output.to_vec()
    }

    /// Forward pass keeping everything needed for `backward`.
    pub fn forward(&self, cm: &CategorizedMethod, table: &EmbeddingTable) -> MethodForward {
        self.forward_inputs(method_inputs(cm, table, self.d_model()))
    }

    /// Forward from explicit per-category input sequences (`None` = absent).
    pub fn forward_inputs(&self, inputs: Vec<Option<Array2<f64>>>) -> MethodForward {
        assert_eq!(inputs.len(), NUM_CATEGORIES);
        let d = self.d_model();
        let mut stacked = Array2::<f64>::zeros((NUM_CATEGORIES, d));
        let mut present = [false; NUM_CATEGORIES];
        let mut category_caches = Vec::with_capacity(NUM_CATEGORIES);
        for (i, input) in inputs.into_iter().enumerate() {
            match input {
                Some(x) => {
                    let (pooled, cache) = run_pooled(&self.category_blocks[i], x);
                    stacked.row_mut(i).assign(&pooled);
                    present[i] = true;
                    category_caches.push(Some(cache));
                }
                None => category_caches.push(None),
            }
        }
        let n_present = present.iter().filter(|&&p| p).count();
        if n_present == 0 {
            return MethodForward {
                category_caches,
                type_cache: None,
                present,
                output: Array1::zeros(d),
            };
        }
        let (y, type_cache) = self.type_block.forward(stacked.view(), Some(&present));
        let mut output = Array1::<f64>::zeros(d);
        for (i, row) in y.rows().into_iter().enumerate() {
            if present[i] {
                output += &row;
            }
        }
        output /= n_present as f64;
        MethodForward {
            category_caches,
            type_cache: Some(type_cache),
            present,
            output,
        }
    }

    /// Backpropagate `d_output` through both stages into `grads`.
    pub fn backward(&self, fwd: &MethodForward, d_output: ArrayView1<f64>, grads: &mut EncoderParams) {
        let Some(type_cache) = &fwd.type_cache else {
            return;
        };
        let d = self.d_model();
        let n_present = fwd.present.iter().filter(|&&p| p).count() as f64;
        let mut dy = Array2::<f64>::zeros((NUM_CATEGORIES, d));
        for i in 0..NUM_CATEGORIES {
            if fwd.present[i] {
                dy.row_mut(i).assign(&(&d_output / n_present));
            }
        }
        let dstack = self.type_block.backward(type_cache, dy.view(), &mut grads.type_block);
        for (i, cache) in fwd.category_caches.iter().enumerate() {
            if let Some(cache) = cache {
                backward_pooled(
                    &self.category_blocks[i],
                    cache,
                    dstack.row(i),
                    &mut grads.category_blocks[i],
                );
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// `CCENC1`, then 16 blocks; each tensor is `ndim, dims..., f32 data`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FileError> {
        w.write_all(ENCODER_MAGIC)?;
        for block in self.blocks() {
            write_block(w, block)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FileError> {
        let mut r = LeReader::new(r);
        r.expect_magic(ENCODER_MAGIC)?;
        let mut blocks = Vec::with_capacity(NUM_CATEGORIES + 1);
        for _ in 0..=NUM_CATEGORIES {
            blocks.push(read_block(&mut r)?);
        }
        r.expect_eof()?;
        let type_block = blocks.pop().expect("16 blocks");
        let d = type_block.d_model();
        if blocks.iter().any(|b| b.d_model() != d) {
            return Err(FileError::format("blocks disagree on model width"));
        }
        Ok(Self {
            category_blocks: blocks,
            type_block,
        })
    }

    /// Round every parameter to f32, the precision of the file format.
    pub fn quantized(&self) -> Self {
        let mut q = self.clone();
        for block in q.blocks_mut() {
            for t in block.tensors_mut() {
                t.iter_mut().for_each(|v| *v = f64::from(*v as f32));
            }
        }
        q
    }
}

/// Heads are not stored in the file; width 100 always uses the standard
/// four heads, narrower test blocks use one.
fn heads_for_width(d: usize) -> usize {
    if d % crate::nn::NUM_HEADS == 0 {
        crate::nn::NUM_HEADS
    } else {
        1
    }
}

pub(crate) fn write_tensor<W: Write>(w: &mut W, shape: &[usize], data: &[f64]) -> Result<(), FileError> {
    write_u32(w, shape.len() as u32)?;
    for &s in shape {
        write_u32(w, s as u32)?;
    }
    write_f32s(w, data.iter().map(|&v| v as f32))?;
    Ok(())
}

pub(crate) fn read_tensor<R: Read>(r: &mut LeReader<R>, name: &str) -> Result<(Vec<usize>, Vec<f64>), FileError> {
    let ndim = r.u32(name)? as usize;
    if ndim == 0 || ndim > 2 {
        return Err(FileError::format(format!("tensor {name}: unsupported rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.u32(name)? as usize);
    }
    let len: usize = shape.iter().product();
    if len > 1 << 26 {
        return Err(FileError::format(format!("tensor {name}: implausible size {len}")));
    }
    let data: Vec<f64> = r.f32s(len, name)?.into_iter().map(f64::from).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FileError::format(format!("tensor {name}: non-finite value")));
    }
    Ok((shape, data))
}

fn write_block<W: Write>(w: &mut W, block: &AttentionBlock) -> Result<(), FileError> {
    for (_, shape, data) in block.tensors() {
        write_tensor(w, &shape, data)?;
    }
    Ok(())
}

fn read_block<R: Read>(r: &mut LeReader<R>) -> Result<AttentionBlock, FileError> {
    let mut parts = Vec::with_capacity(BLOCK_TENSORS.len());
    for name in BLOCK_TENSORS {
        parts.push((name, read_tensor(r, name)?));
    }
    let mat = |i: usize| -> Result<Array2<f64>, FileError> {
        let (name, (shape, data)) = &parts[i];
        if shape.len() != 2 {
            return Err(FileError::format(format!("tensor {name}: expected a matrix")));
        }
        Ok(Array2::from_shape_vec((shape[0], shape[1]), data.clone()).expect("length checked"))
    };
    let vec = |i: usize| -> Result<Array1<f64>, FileError> {
        let (name, (shape, data)) = &parts[i];
        if shape.len() != 1 {
            return Err(FileError::format(format!("tensor {name}: expected a vector")));
        }
        Ok(Array1::from(data.clone()))
    };
    let wq = mat(0)?;
    let d = wq.nrows();
    let block = AttentionBlock {
        heads: heads_for_width(d),
        wq,
        wk: mat(1)?,
        wv: mat(2)?,
        wo: mat(3)?,
        w1: mat(4)?,
        b1: vec(5)?,
        w2: mat(6)?,
        b2: vec(7)?,
        ln1_gamma: vec(8)?,
        ln1_beta: vec(9)?,
        ln2_gamma: vec(10)?,
        ln2_beta: vec(11)?,
    };
    let ff = block.w1.ncols();
    let ok = [&block.wq, &block.wk, &block.wv, &block.wo].iter().all(|m| m.dim() == (d, d))
        && block.w1.dim() == (d, ff)
        && block.b1.len() == ff
        && block.w2.dim() == (ff, d)
        && [&block.b2, &block.ln1_gamma, &block.ln1_beta, &block.ln2_gamma, &block.ln2_beta]
            .iter()
            .all(|v| v.len() == d);
    if !ok {
        return Err(FileError::format("inconsistent tensor shapes in block"));
    }
    Ok(block)
}

/// Input sequence of one category: one row per distinct lexeme in
/// ascending lexeme order, each row = count × embedding.
pub fn category_input(entries: &LexemeCounts, table: &EmbeddingTable, d_model: usize) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((entries.len(), d_model));
    for (mut row, (lexeme, &count)) in x.rows_mut().into_iter().zip(entries) {
        let emb = table.lookup(lexeme);
        let c = f64::from(count);
        for (r, &e) in row.iter_mut().zip(emb) {
            *r = c * f64::from(e);
        }
    }
    x
}

/// Per-category input sequences of a method (`None` = absent category).
pub fn method_inputs(cm: &CategorizedMethod, table: &EmbeddingTable, d_model: usize) -> Vec<Option<Array2<f64>>> {
    category_order()
        .iter()
        .map(|&c| {
            let entries = cm.category(c);
            (!entries.is_empty()).then(|| category_input(entries, table, d_model))
        })
        .collect()
}

/// Encode one category's multiset with its block. Empty → zero vector.
pub fn encode_category(entries: &LexemeCounts, table: &EmbeddingTable, block: &AttentionBlock) -> Array1<f64> {
    if entries.is_empty() {
        return Array1::zeros(block.d_model());
    }
    run_pooled(block, category_input(entries, table, block.d_model())).0
}

#[derive(Debug, Clone)]
pub struct PooledCache {
    block: BlockCache,
    rows: usize,
}

fn run_pooled(block: &AttentionBlock, x: Array2<f64>) -> (Array1<f64>, PooledCache) {
    let rows = x.nrows();
    let (y, cache) = block.forward(x.view(), None);
    let pooled = y.mean_axis(Axis(0)).expect("non-empty sequence");
    (pooled, PooledCache { block: cache, rows })
}

fn backward_pooled(block: &AttentionBlock, cache: &PooledCache, d_pooled: ArrayView1<f64>, grads: &mut AttentionBlock) -> Array2<f64> {
    let d = block.d_model();
    let scaled = &d_pooled / cache.rows as f64;
    let dy = scaled.broadcast((cache.rows, d)).expect("row broadcast").to_owned();
    block.backward(&cache.block, dy.view(), grads)
}

/// Cached forward state of one method.
#[derive(Debug, Clone)]
pub struct MethodForward {
    category_caches: Vec<Option<PooledCache>>,
    type_cache: Option<BlockCache>,
    present: [bool; NUM_CATEGORIES],
    pub output: Array1<f64>,
}

impl MethodForward {
    pub fn present_mask(&self) -> [bool; NUM_CATEGORIES] {
        self.present
    }

    pub fn trace(&self) -> AttentionTrace {
        match &self.type_cache {
            Some(cache) => AttentionTrace {
                type_attention: cache.head_mean_attention(),
                present_mask: self.present,
            },
            None => AttentionTrace::empty(),
        }
    }
}

/// Encode categories with the per-category blocks only (no type stage).
pub fn category_vectors(cm: &CategorizedMethod, table: &EmbeddingTable, params: &EncoderParams) -> Vec<(TokenCategory, Array1<f64>)> {
    category_order()
        .iter()
        .map(|&c| (c, encode_category(cm.category(c), table, &params.category_blocks[c.index()])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EMBED_DIM, EmbeddingTable};
    use crate::lexcat::categorize_source;
    use rand::Rng;

    fn random_table(tokens: &[&str], seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f32; EMBED_DIM]> = tokens
            .iter()
            .map(|_| std::array::from_fn(|_| rng.gen_range(-0.5..0.5)))
            .collect();
        EmbeddingTable::from_rows(tokens, &rows)
    }

    #[test]
    fn empty_method_encodes_to_zero() {
        let params = EncoderParams::init(1);
        let table = random_table(&["a"], 1);
        let (v, trace) = params.encode_method(&CategorizedMethod::empty("e"), &table);
        assert!(v.vector.iter().all(|&x| x == 0.0));
        assert_eq!(v.vector.len(), 100);
        assert!(trace.type_attention.iter().all(|&x| x == 0.0));
        assert!(trace.present_mask.iter().all(|&p| !p));
    }

    #[test]
    fn single_category_trace_and_output() {
        let params = EncoderParams::init(2);
        let table = random_table(&["x", "y"], 2);
        let mut cm = CategorizedMethod::empty("m");
        cm.insert_n(TokenCategory::Identifier, "x", 2);
        cm.insert(TokenCategory::Identifier, "y");
        let (v, trace) = params.encode_method(&cm, &table);
        let idx = TokenCategory::Identifier.index();
        for i in 0..NUM_CATEGORIES {
            for j in 0..NUM_CATEGORIES {
                let expected = if i == idx && j == idx { 1.0 } else { 0.0 };
                assert_eq!(trace.type_attention[[i, j]], expected);
            }
        }
        // type stage run on the single category vector alone
        let cat = encode_category(cm.category(TokenCategory::Identifier), &table, &params.category_blocks[idx]);
        let x = cat.insert_axis(Axis(0));
        let (y, _) = params.type_block.forward(x.view(), None);
        for (a, b) in v.vector.iter().zip(y.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn count_scaling_changes_output() {
        let params = EncoderParams::init(3);
        let table = random_table(&["p", "q"], 3);
        let mut one = LexemeCounts::new();
        one.insert("p".into(), 1);
        one.insert("q".into(), 1);
        let mut two = one.clone();
        two.insert("p".into(), 2);
        let block = &params.category_blocks[0];
        let a = encode_category(&one, &table, block);
        let b = encode_category(&two, &table, block);
        assert!(a.iter().zip(b.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn absent_category_masking_isolates_present_ones() {
        let params = EncoderParams::init(4);
        let table = random_table(&["int", "a", "=", "0", ";"], 4);
        let cm = categorize_source("int a = 0;", "m").unwrap();
        let fwd = params.forward(&cm, &table);
        let trace = fwd.trace();
        for i in 0..NUM_CATEGORIES {
            let present = trace.present_mask[i];
            let row_sum: f64 = trace.type_attention.row(i).sum();
            let col_sum: f64 = trace.type_attention.column(i).sum();
            if present {
                assert!((row_sum - 1.0).abs() < 1e-9);
            } else {
                assert_eq!(row_sum, 0.0);
                assert_eq!(col_sum, 0.0);
            }
        }
        // Masked zero rows behave exactly as if the absent categories were
        // removed from the sequence.
        let cats = category_vectors(&cm, &table, &params);
        let mut stacked = Array2::<f64>::zeros((NUM_CATEGORIES, 100));
        for (c, v) in &cats {
            stacked.row_mut(c.index()).assign(v);
        }
        let mask = cm.present_mask();
        let (full, _) = params.type_block.forward(stacked.view(), Some(&mask));
        let present: Vec<usize> = (0..NUM_CATEGORIES).filter(|&i| mask[i]).collect();
        let gathered = stacked.select(Axis(0), &present);
        let (compact, _) = params.type_block.forward(gathered.view(), None);
        for (k, &i) in present.iter().enumerate() {
            for (a, b) in full.row(i).iter().zip(compact.row(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let pooled = compact.mean_axis(Axis(0)).unwrap();
        for (a, b) in fwd.output.iter().zip(pooled.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn file_round_trip() {
        let params = EncoderParams::init(7);
        let mut buf = Vec::new();
        params.write_to(&mut buf).unwrap();
        let back = EncoderParams::read_from(&buf[..]).unwrap();
        assert_eq!(back, params);
        assert_eq!(params.quantized(), params);

        assert!(matches!(EncoderParams::read_from(&buf[..buf.len() / 2]), Err(FileError::Format(_))));
        let mut bad = buf.clone();
        bad[..6].copy_from_slice(b"CCEMB1");
        assert!(matches!(EncoderParams::read_from(&bad[..]), Err(FileError::Format(_))));
    }
}
