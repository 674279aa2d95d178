//! Fully connected pair classifier: concat(v1, v2) → … → 2 logits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameters;
use crate::binio::{write_u32, FileError, LeReader};
use crate::encoder::{read_tensor, write_tensor};
use crate::nn::{xavier, D_MODEL};

pub const HEAD_MAGIC: &[u8; 6] = b"CCHED1";
/// Width of the classifier input (two method vectors side by side).
pub const PAIR_INPUT: usize = 2 * D_MODEL;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// in × out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneHead {
    pub layers: Vec<Linear>,
}

/// Layer inputs and pre-activations kept for backprop.
#[derive(Debug, Clone)]
pub struct HeadCache {
    inputs: Vec<Array1<f64>>,
    pre: Vec<Array1<f64>>,
}

impl FineTuneHead {
    /// Layer widths for k ∈ {1, 3, 5}.
    pub fn widths(k: usize) -> Option<Vec<usize>> {
        match k {
            1 => Some(vec![PAIR_INPUT, 2]),
            3 => Some(vec![PAIR_INPUT, 100, 32, 2]),
            5 => Some(vec![PAIR_INPUT, 100, 64, 32, 16, 2]),
            _ => None,
        }
    }

    /// Xavier weights, zero biases. Panics unless k ∈ {1, 3, 5}.
    pub fn new(k: usize, seed: u64) -> Self {
        let widths = Self::widths(k).expect("head depth must be 1, 3 or 5");
        Self::with_widths(&widths, seed)
    }

    pub fn with_widths(widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| Linear {
                w: xavier(&mut rng, w[0], w[1]),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.nrows()];
        d.extend(self.layers.iter().map(|l| l.w.ncols()));
        d
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Zero the final layer so both logits are equal for every input.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.w.fill(0.0);
        last.b.fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> (Array1<f64>, HeadCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            inputs.push(h);
            h = if i + 1 < self.layers.len() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        (h, HeadCache { inputs, pre })
    }

    pub fn logits(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients into `grads`; returns dL/dx.
    pub fn backward(&self, cache: &HeadCache, d_logits: ArrayView1<f64>, grads: &mut FineTuneHead) -> Array1<f64> {
        let mut d = d_logits.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                d.zip_mut_with(&cache.pre[i], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let x = &cache.inputs[i];
            let g = &mut grads.layers[i];
            for (r, &xv) in x.iter().enumerate() {
                if xv != 0.0 {
                    g.w.row_mut(r).scaled_add(xv, &d);
                }
            }
            g.b += &d;
            d = self.layers[i].w.dot(&d);
        }
        d
    }

    /// Softmax probability of the clone class for the ordered pair. With
    /// `symmetric` the logits of both orderings are averaged.
    pub fn clone_probability(&self, v1: &[f64], v2: &[f64], symmetric: bool) -> f64 {
        let mut logits = self.logits(pair_input(v1, v2).view());
        if symmetric {
            logits = (logits + self.logits(pair_input(v2, v1).view())) * 0.5;
        }
        let (_, _, p) = softmax_cross_entropy(logits.view(), 1);
        p[1]
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// `CCHED1`, u32 layer count, then `w, b` per layer as encoder tensors.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FileError> {
        w.write_all(HEAD_MAGIC)?;
        write_u32(w, self.layers.len() as u32)?;
        for l in &self.layers {
            write_tensor(w, l.w.shape(), l.w.as_slice().expect("standard layout"))?;
            write_tensor(w, l.b.shape(), l.b.as_slice().expect("standard layout"))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FileError> {
        let mut r = LeReader::new(r);
        r.expect_magic(HEAD_MAGIC)?;
        let n = r.u32("layer count")? as usize;
        if n == 0 || n > 16 {
            return Err(FileError::format(format!("implausible layer count {n}")));
        }
        let mut layers: Vec<Linear> = Vec::with_capacity(n);
        for i in 0..n {
            let (ws, wd) = read_tensor(&mut r, "w")?;
            let (bs, bd) = read_tensor(&mut r, "b")?;
            if ws.len() != 2 || bs != [ws[1]] {
                return Err(FileError::format(format!("layer {i}: inconsistent shapes")));
            }
            if let Some(prev) = layers.last() {
                if prev.w.ncols() != ws[0] {
                    return Err(FileError::format(format!("layer {i}: input width mismatch")));
                }
            }
            layers.push(Linear {
                w: Array2::from_shape_vec((ws[0], ws[1]), wd).expect("length checked"),
                b: Array1::from(bd),
            });
        }
        r.expect_eof()?;
        Ok(Self { layers })
    }
}

impl Parameters for FineTuneHead {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().unwrap(), l.b.as_slice().unwrap()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().unwrap(), l.b.as_slice_mut().unwrap()])
            .collect()
    }
}

/// concat(v1, v2)
pub fn pair_input(v1: &[f64], v2: &[f64]) -> Array1<f64> {
    v1.iter().chain(v2).copied().collect()
}

/// Softmax cross-entropy for one example. Returns (loss, dloss/dlogits,
/// probabilities).
pub fn softmax_cross_entropy(logits: ArrayView1<f64>, label: usize) -> (f64, Array1<f64>, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    let probs = exp / sum;
    let loss = -(logits[label] - max - sum.ln());
    let mut d = probs.clone();
    d[label] -= 1.0;
    (loss, d, probs)
}
