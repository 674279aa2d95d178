//! Joint fine-tuning of encoder and classifier head on labeled pairs.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::head::{pair_input, softmax_cross_entropy, FineTuneHead, HeadCache};
use super::{rmsprop_step, LogEntry, OptimizerState, PairObserver, Parameters, PretrainConfig, RmsProp, TrainError};
use crate::dataset::PairDataset;
use crate::embed::EmbeddingTable;
use crate::encoder::EncoderParams;

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub train: PretrainConfig,
    /// Average the logits of both argument orders.
    pub symmetric: bool,
    pub allow_single_class_batches: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            train: PretrainConfig::default(),
            symmetric: false,
            allow_single_class_batches: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: EncoderParams,
    pub head: FineTuneHead,
    pub log: Vec<LogEntry>,
    pub epoch_losses: Vec<f64>,
}

struct Joint {
    encoder: EncoderParams,
    head: FineTuneHead,
}

impl Parameters for Joint {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.slices();
        v.extend(self.head.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.slices_mut();
        v.extend(self.head.slices_mut());
        v
    }
}

/// Logits for one ordered pair plus the caches of the head passes.
fn pair_logits(head: &FineTuneHead, v1: &[f64], v2: &[f64], symmetric: bool) -> (Array1<f64>, Vec<HeadCache>) {
    let (l, c) = head.forward(pair_input(v1, v2).view());
    if !symmetric {
        return (l, vec![c]);
    }
    let (l2, c2) = head.forward(pair_input(v2, v1).view());
    ((l + l2) * 0.5, vec![c, c2])
}

/// Backprop d_logits through the head; returns (dv1, dv2).
fn pair_backward(
    head: &FineTuneHead,
    caches: &[HeadCache],
    d_logits: &Array1<f64>,
    grads: &mut FineTuneHead,
    d: usize,
) -> (Array1<f64>, Array1<f64>) {
    if caches.len() == 1 {
        let dx = head.backward(&caches[0], d_logits.view(), grads);
        return (dx.slice(s![..d]).to_owned(), dx.slice(s![d..]).to_owned());
    }
    let half = d_logits * 0.5;
    let a = head.backward(&caches[0], half.view(), grads);
    let b = head.backward(&caches[1], half.view(), grads);
    (
        &a.slice(s![..d]) + &b.slice(s![d..]),
        &a.slice(s![d..]) + &b.slice(s![..d]),
    )
}

/// Train encoder and head on the pairs in `train_pairs` with mean softmax
/// cross-entropy per batch.
pub fn finetune(
    params: EncoderParams,
    head: FineTuneHead,
    dataset: &PairDataset,
    train_pairs: &[usize],
    table: &EmbeddingTable,
    config: &FinetuneConfig,
    observer: Option<PairObserver>,
) -> Result<FinetuneOutcome, TrainError> {
    let tc = &config.train;
    tc.validate()?;
    let d = params.d_model();
    if head.dims().first() != Some(&(2 * d)) || head.dims().last() != Some(&2) {
        return Err(TrainError::ShapeMismatch(format!("head dims {:?} for encoder width {d}", head.dims())));
    }
    let mut model = Joint { encoder: params, head };
    let mut log = Vec::new();
    let mut epoch_losses = Vec::new();
    if tc.epochs == 0 || train_pairs.is_empty() {
        return Ok(FinetuneOutcome {
            params: model.encoder,
            head: model.head,
            log,
            epoch_losses,
        });
    }
    let opt = tc.optimizer();
    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0xf1e));
    let mut order = train_pairs.to_vec();

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            if let Some(obs) = observer {
                batch.iter().for_each(|&p| obs(p));
            }
            let first = dataset.pairs[batch[0]].label;
            if !config.allow_single_class_batches && batch.iter().all(|&p| dataset.pairs[p].label == first) {
                return Err(TrainError::DegenerateBatch(format!("epoch {epoch}, batch {b} has one class")));
            }
            let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
            let mut forwards = Vec::new();
            let mut vectors: Vec<Vec<f64>> = Vec::new();
            let mut idx = Vec::with_capacity(batch.len());
            for &p in batch {
                let (a, bm) = dataset.pair_indices(p);
                let mut slot = |m: usize| {
                    *slots.entry(m).or_insert_with(|| {
                        let fwd = model.encoder.forward(&dataset.methods()[m].categorized, table);
                        vectors.push(fwd.output.to_vec());
                        forwards.push(fwd);
                        forwards.len() - 1
                    })
                };
                let (sa, sb) = (slot(a), slot(bm));
                idx.push((sa, sb));
            }
            let mut head_grads = model.head.zeros_like();
            let mut dvec = Array2::<f64>::zeros((forwards.len(), d));
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for (&p, &(sa, sb)) in batch.iter().zip(&idx) {
                let label = usize::from(dataset.pairs[p].is_clone());
                let (logits, caches) = pair_logits(&model.head, &vectors[sa], &vectors[sb], config.symmetric);
                let (loss, dl, _) = softmax_cross_entropy(logits.view(), label);
                batch_loss += loss * scale;
                let (d1, d2) = pair_backward(&model.head, &caches, &(dl * scale), &mut head_grads, d);
                dvec.row_mut(sa).scaled_add(1.0, &d1);
                dvec.row_mut(sb).scaled_add(1.0, &d2);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            let mut enc_grads = model.encoder.zeros_like();
            for (k, fwd) in forwards.iter().enumerate() {
                model.encoder.backward(fwd, dvec.row(k), &mut enc_grads);
            }
            let grads = Joint {
                encoder: enc_grads,
                head: head_grads,
            };
            rmsprop_step(&mut model, &grads, &mut state, &opt)?;
            log.push(LogEntry {
                epoch,
                batch: b,
                loss: batch_loss,
            });
            total += batch_loss * batch.len() as f64;
        }
        epoch_losses.push(total / order.len() as f64);
    }
    Ok(FinetuneOutcome {
        params: model.encoder,
        head: model.head,
        log,
        epoch_losses,
    })
}

/// Full-batch training of a head on fixed input vectors (no encoder).
/// Returns the per-step mean loss.
pub fn train_head_on_vectors(
    head: &mut FineTuneHead,
    inputs: &[Array1<f64>],
    labels: &[usize],
    opt: &RmsProp,
    steps: usize,
) -> Result<Vec<f64>, TrainError> {
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(TrainError::ShapeMismatch(format!("{} inputs, {} labels", inputs.len(), labels.len())));
    }
    let mut state = OptimizerState::new(head);
    let scale = 1.0 / inputs.len() as f64;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut grads = head.zeros_like();
        let mut total = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            let (logits, cache) = head.forward(x.view());
            let (loss, dl, _) = softmax_cross_entropy(logits.view(), y);
            total += loss * scale;
            head.backward(&cache, (dl * scale).view(), &mut grads);
        }
        rmsprop_step(head, &grads, &mut state, opt)?;
        losses.push(total);
    }
    Ok(losses)
}
