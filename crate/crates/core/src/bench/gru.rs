//! Randomly initialized, untrained two-layer GRU over raw token order.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::EmbeddingTable;
use crate::lexcat::TokenStream;
use crate::nn::{xavier, D_MODEL};

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub wz: Array2<f64>,
    pub uz: Array2<f64>,
    pub wr: Array2<f64>,
    pub ur: Array2<f64>,
    pub wh: Array2<f64>,
    pub uh: Array2<f64>,
    pub bz: Array1<f64>,
    pub br: Array1<f64>,
    pub bh: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GruLayer {
    pub fn init(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        Self {
            wz: xavier(rng, input, hidden),
            uz: xavier(rng, hidden, hidden),
            wr: xavier(rng, input, hidden),
            ur: xavier(rng, hidden, hidden),
            wh: xavier(rng, input, hidden),
            uh: xavier(rng, hidden, hidden),
            bz: Array1::zeros(hidden),
            br: Array1::zeros(hidden),
            bh: Array1::zeros(hidden),
        }
    }

    /// z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br),
    /// n = tanh(xWh + (r⊙h)Uh + bh), h' = (1−z)⊙n + z⊙h.
    pub fn step(&self, x: &Array1<f64>, h: &Array1<f64>) -> Array1<f64> {
        let z = (x.dot(&self.wz) + h.dot(&self.uz) + &self.bz).mapv(sigmoid);
        let r = (x.dot(&self.wr) + h.dot(&self.ur) + &self.br).mapv(sigmoid);
        let n = (x.dot(&self.wh) + (&r * h).dot(&self.uh) + &self.bh).mapv(f64::tanh);
        let mut out = n;
        out.zip_mut_with(&z, |nv, &zv| *nv *= 1.0 - zv);
        out + &z * h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruEncoder {
    pub layers: [GruLayer; 2],
}

impl GruEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = GruLayer::init(&mut rng, D_MODEL, D_MODEL);
        let l2 = GruLayer::init(&mut rng, D_MODEL, D_MODEL);
        Self { layers: [l1, l2] }
    }

    /// Final hidden state of the second layer; zero for an empty stream.
    pub fn encode(&self, ts: &TokenStream, table: &EmbeddingTable) -> Vec<f64> {
        let mut h1 = Array1::<f64>::zeros(D_MODEL);
        let mut h2 = Array1::<f64>::zeros(D_MODEL);
        for t in &ts.tokens {
            let x: Array1<f64> = table.lookup(&t.lexeme).iter().map(|&v| f64::from(v)).collect();
            h1 = self.layers[0].step(&x, &h1);
            h2 = self.layers[1].step(&h1, &h2);
        }
        h2.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EMBED_DIM;
    use crate::lexcat::tokenize;

    #[test]
    fn encodes_deterministically() {
        let rows: Vec<[f32; EMBED_DIM]> = vec![[0.1; EMBED_DIM], [-0.2; EMBED_DIM]];
        let table = EmbeddingTable::from_rows(&["a", "b"], &rows);
        let g = GruEncoder::new(3);
        let ts = tokenize("a b a").unwrap();
        let v = g.encode(&ts, &table);
        assert_eq!(v.len(), 100);
        assert!(v.iter().all(|x| x.is_finite() && x.abs() < 1.0));
        assert_eq!(v, GruEncoder::new(3).encode(&ts, &table));
        assert!(g.encode(&tokenize("").unwrap(), &table).iter().all(|&x| x == 0.0));
    }
}
