//! Transformer-style attention block with an explicit backward pass.
//!
//! Rows are sequence positions. The block is post-norm:
//! `H = LN1(X + MHA(X))`, `Y = LN2(H + FF(H))` with a ReLU feed-forward.
//! All arithmetic is f64; shapes are read from the weights so tests can use
//! narrow blocks.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

pub const D_MODEL: usize = 100;
pub const NUM_HEADS: usize = 4;
pub const D_FF: usize = 200;
pub const LN_EPS: f64 = 1e-5;

/// Uniform Xavier init, sampled in f32 so the values survive the 32-bit
/// parameter file unchanged.
pub fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt() as f32;
    Array2::from_shape_simple_fn((rows, cols), || f64::from(rng.gen_range(-bound..=bound)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub heads: usize,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

/// Names of the block tensors in serialization order.
pub const BLOCK_TENSORS: [&str; 12] = [
    "wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2", "ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta",
];

impl AttentionBlock {
    /// Production block: d_model 100, 4 heads, d_ff 200.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        Self::init_with_dims(rng, D_MODEL, NUM_HEADS, D_FF)
    }

    pub fn init_with_dims<R: Rng>(rng: &mut R, d_model: usize, heads: usize, d_ff: usize) -> Self {
        assert!(heads > 0 && d_model % heads == 0, "d_model must split evenly across heads");
        Self {
            heads,
            wq: xavier(rng, d_model, d_model),
            wk: xavier(rng, d_model, d_model),
            wv: xavier(rng, d_model, d_model),
            wo: xavier(rng, d_model, d_model),
            w1: xavier(rng, d_model, d_ff),
            b1: Array1::zeros(d_ff),
            w2: xavier(rng, d_ff, d_model),
            b2: Array1::zeros(d_model),
            ln1_gamma: Array1::ones(d_model),
            ln1_beta: Array1::zeros(d_model),
            ln2_gamma: Array1::ones(d_model),
            ln2_beta: Array1::zeros(d_model),
        }
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            heads: self.heads,
            wq: Array2::zeros(self.wq.raw_dim()),
            wk: Array2::zeros(self.wk.raw_dim()),
            wv: Array2::zeros(self.wv.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            ln1_gamma: Array1::zeros(self.ln1_gamma.raw_dim()),
            ln1_beta: Array1::zeros(self.ln1_beta.raw_dim()),
            ln2_gamma: Array1::zeros(self.ln2_gamma.raw_dim()),
            ln2_beta: Array1::zeros(self.ln2_beta.raw_dim()),
        }
    }

    pub fn d_model(&self) -> usize {
        self.wq.nrows()
    }

    pub fn d_ff(&self) -> usize {
        self.w1.ncols()
    }

    /// (name, shape, values) for every tensor, in serialization order.
    pub fn tensors(&self) -> [(&'static str, Vec<usize>, &[f64]); 12] {
        fn t2(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn t1(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let all = [
            t2(&self.wq),
            t2(&self.wk),
            t2(&self.wv),
            t2(&self.wo),
            t2(&self.w1),
            t1(&self.b1),
            t2(&self.w2),
            t1(&self.b2),
            t1(&self.ln1_gamma),
            t1(&self.ln1_beta),
            t1(&self.ln2_gamma),
            t1(&self.ln2_beta),
        ];
        let mut i = 0;
        all.map(|(shape, data)| {
            let name = BLOCK_TENSORS[i];
            i += 1;
            (name, shape, data)
        })
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            self.wq.as_slice_mut().unwrap(),
            self.wk.as_slice_mut().unwrap(),
            self.wv.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.ln1_gamma.as_slice_mut().unwrap(),
            self.ln1_beta.as_slice_mut().unwrap(),
            self.ln2_gamma.as_slice_mut().unwrap(),
            self.ln2_beta.as_slice_mut().unwrap(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
    }

    /// Forward pass. `mask[i] == false` removes position `i` as a key and
    /// zeroes its attention row. `None` admits every position.
    pub fn forward(&self, x: ArrayView2<f64>, mask: Option<&[bool]>) -> (Array2<f64>, BlockCache) {
        let n = x.nrows();
        let d = self.d_model();
        assert_eq!(x.ncols(), d, "input width must equal d_model");
        let mask: Vec<bool> = match mask {
            Some(m) => {
                assert_eq!(m.len(), n);
                m.to_vec()
            }
            None => vec![true; n],
        };
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let q = x.dot(&self.wq);
        let k = x.dot(&self.wk);
        let v = x.dot(&self.wv);
        let mut concat = Array2::<f64>::zeros((n, d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut p = qh.dot(&kh.t()) * scale;
            masked_softmax_rows(&mut p, &mask);
            concat.slice_mut(cols).assign(&p.dot(&vh));
            probs.push(p);
        }
        let o = concat.dot(&self.wo);
        let z1 = &x + &o;
        let (h1, ln1) = layer_norm(&z1, &self.ln1_gamma, &self.ln1_beta);
        let u = h1.dot(&self.w1) + &self.b1;
        let r = u.mapv(|a| a.max(0.0));
        let f = r.dot(&self.w2) + &self.b2;
        let z2 = &h1 + &f;
        let (y, ln2) = layer_norm(&z2, &self.ln2_gamma, &self.ln2_beta);
        let cache = BlockCache {
            x: x.to_owned(),
            q,
            k,
            v,
            probs,
            concat,
            ln1,
            h1,
            u,
            r,
            ln2,
            mask,
        };
        (y, cache)
    }

    /// Backpropagate `dy` (gradient w.r.t. the block output). Parameter
    /// gradients are added into `grads`; the input gradient is returned.
    pub fn backward(&self, cache: &BlockCache, dy: ArrayView2<f64>, grads: &mut AttentionBlock) -> Array2<f64> {
        let d = self.d_model();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dz2 = layer_norm_backward(
            &cache.ln2,
            &self.ln2_gamma,
            dy,
            &mut grads.ln2_gamma,
            &mut grads.ln2_beta,
        );
        // feed-forward
        grads.w2 += &cache.r.t().dot(&dz2);
        grads.b2 += &dz2.sum_axis(Axis(0));
        let mut du = dz2.dot(&self.w2.t());
        du.zip_mut_with(&cache.u, |g, &u| {
            if u <= 0.0 {
                *g = 0.0
            }
        });
        grads.w1 += &cache.h1.t().dot(&du);
        grads.b1 += &du.sum_axis(Axis(0));
        let dh1 = dz2 + du.dot(&self.w1.t());

        let dz1 = layer_norm_backward(
            &cache.ln1,
            &self.ln1_gamma,
            dh1.view(),
            &mut grads.ln1_gamma,
            &mut grads.ln1_beta,
        );
        // attention
        grads.wo += &cache.concat.t().dot(&dz1);
        let dconcat = dz1.dot(&self.wo.t());
        let n = cache.x.nrows();
        let mut dq = Array2::<f64>::zeros((n, d));
        let mut dk = Array2::<f64>::zeros((n, d));
        let mut dv = Array2::<f64>::zeros((n, d));
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = &cache.probs[h];
            let da = dconcat.slice(cols);
            let vh = cache.v.slice(cols);
            let dp = da.dot(&vh.t());
            dv.slice_mut(cols).assign(&p.t().dot(&da));
            let mut ds = dp;
            for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
                let inner: f64 = ds_row.iter().zip(p_row.iter()).map(|(a, b)| a * b).sum();
                ds_row.zip_mut_with(&p_row, |g, &pv| *g = pv * (*g - inner) * scale);
            }
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let xt = cache.x.t();
        grads.wq += &xt.dot(&dq);
        grads.wk += &xt.dot(&dk);
        grads.wv += &xt.dot(&dv);
        dz1 + dq.dot(&self.wq.t()) + dk.dot(&self.wk.t()) + dv.dot(&self.wv.t())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
    ln1: LayerNormCache,
    h1: Array2<f64>,
    u: Array2<f64>,
    r: Array2<f64>,
    ln2: LayerNormCache,
    mask: Vec<bool>,
}

impl BlockCache {
    /// Post-softmax attention probabilities averaged over heads (n×n).
    pub fn head_mean_attention(&self) -> Array2<f64> {
        let mut acc = self.probs[0].clone();
        for p in &self.probs[1..] {
            acc += p;
        }
        acc / self.probs.len() as f64
    }

    pub fn head_attention(&self, head: usize) -> &Array2<f64> {
        &self.probs[head]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Row softmax over admitted columns; rows of masked queries become zero.
pub fn masked_softmax_rows(logits: &mut Array2<f64>, mask: &[bool]) {
    for (i, mut row) in logits.rows_mut().into_iter().enumerate() {
        if !mask[i] {
            row.fill(0.0);
            continue;
        }
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (v, &m) in row.iter_mut().zip(mask) {
            if m {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Array1<f64>,
    dy: ArrayView2<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    *dgamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = &dy * gamma;
    for ((mut row, xh), &is) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let sum = row.sum();
        let dot: f64 = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
        row.zip_mut_with(&xh, |g, &x| *g = is * (*g - sum / d - x * dot / d));
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_rows_sum_to_one_over_admitted_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Array2::from_shape_simple_fn((5, 5), || rng.gen_range(-3.0..3.0));
        let mask = [true, false, true, true, false];
        masked_softmax_rows(&mut m, &mask);
        for (i, row) in m.rows().into_iter().enumerate() {
            if mask[i] {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert_eq!(row[1], 0.0);
                assert_eq!(row[4], 0.0);
            } else {
                assert!(row.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn layer_norm_normalizes() {
        let x = Array2::from_shape_vec((2, 4), vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 0.0, 5.0]).unwrap();
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn xavier_values_are_f32_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = xavier(&mut rng, 10, 20);
        assert!(w.iter().all(|&v| f64::from(v as f32) == v));
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|&v| v.abs() <= bound + 1e-7));
    }

    #[test]
    fn block_shapes_and_attention_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let block = AttentionBlock::init(&mut rng);
        assert_eq!(block.d_model(), 100);
        assert_eq!(block.d_ff(), 200);
        let x = Array2::from_shape_simple_fn((6, 100), || rng.gen_range(-1.0..1.0));
        let (y, cache) = block.forward(x.view(), None);
        assert_eq!(y.dim(), (6, 100));
        let att = cache.head_mean_attention();
        for row in att.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
