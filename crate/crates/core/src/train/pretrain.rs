//! Contrastive pretraining of the encoder.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{rmsprop_step, supcon_loss, OptimizerState, PairObserver, PretrainConfig, TrainError};
use crate::dataset::{clone_classes, PairDataset};
use crate::embed::EmbeddingTable;
use crate::encoder::{method_inputs, EncoderParams};
use crate::lexcat::CategorizedMethod;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub batch: usize,
    /// Batch loss divided by the number of contributing anchors.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: EncoderParams,
    pub log: Vec<LogEntry>,
    /// Mean per-anchor loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl PretrainOutcome {
    /// `epoch,batch,loss` CSV with header.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,batch,loss\n");
        for e in &self.log {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.batch, e.loss);
        }
        s
    }
}

/// P×K sampler. Every epoch each class is shuffled and cut into chunks of
/// K members (a trailing singleton joins the previous chunk); the chunks
/// are shuffled and packed greedily into batches of at most `batch_size`
/// items holding at most one chunk per class. Every method appears once per
/// epoch and the positives of an anchor are exactly its own chunk.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    classes: Vec<Vec<usize>>,
    batch_size: usize,
    per_class: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(classes: Vec<Vec<usize>>, batch_size: usize, per_class: usize, seed: u64) -> Result<Self, TrainError> {
        let classes: Vec<Vec<usize>> = classes.into_iter().filter(|c| c.len() >= 2).collect();
        if classes.is_empty() {
            return Err(TrainError::DegenerateBatch("no clone class has two members".into()));
        }
        Ok(Self {
            classes,
            batch_size: batch_size.max(2),
            per_class: per_class.clamp(2, batch_size.max(2)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Batches of (item, class label) for one epoch.
    pub fn epoch(&mut self) -> Vec<Vec<(usize, usize)>> {
        let mut chunks: Vec<Vec<(usize, usize)>> = Vec::new();
        for (label, class) in self.classes.iter().enumerate() {
            let mut members = class.clone();
            members.shuffle(&mut self.rng);
            let mut class_chunks: Vec<Vec<(usize, usize)>> = members
                .chunks(self.per_class)
                .map(|c| c.iter().map(|&m| (m, label)).collect())
                .collect();
            if class_chunks.len() > 1 && class_chunks.last().map_or(false, |c| c.len() == 1) {
                let single = class_chunks.pop().expect("non-empty");
                class_chunks.last_mut().expect("non-empty").extend(single);
            }
            chunks.extend(class_chunks);
        }
        chunks.shuffle(&mut self.rng);
        let mut batches: Vec<Vec<(usize, usize)>> = Vec::new();
        while !chunks.is_empty() {
            let mut batch: Vec<(usize, usize)> = Vec::new();
            let mut labels: Vec<usize> = Vec::new();
            let mut rest = Vec::with_capacity(chunks.len());
            for chunk in chunks {
                let label = chunk[0].1;
                let fits = batch.is_empty() || batch.len() + chunk.len() <= self.batch_size;
                if fits && !labels.contains(&label) {
                    labels.push(label);
                    batch.extend(chunk);
                } else {
                    rest.push(chunk);
                }
            }
            batches.push(batch);
            chunks = rest;
        }
        batches
    }
}

/// Pretrain from `EncoderParams::init(config.seed)` on the clone classes
/// induced by the positive pairs in `train_pairs`.
pub fn pretrain(
    dataset: &PairDataset,
    train_pairs: &[usize],
    table: &EmbeddingTable,
    config: &PretrainConfig,
    observer: Option<PairObserver>,
) -> Result<PretrainOutcome, TrainError> {
    if let Some(obs) = observer {
        train_pairs.iter().for_each(|&p| obs(p));
    }
    let classes = clone_classes(dataset, train_pairs);
    let methods: Vec<&CategorizedMethod> = dataset.methods().iter().map(|m| &m.categorized).collect();
    pretrain_classes(EncoderParams::init(config.seed), &methods, &classes, table, config)
}

/// Pretrain `init` on explicit classes of indices into `methods`.
pub fn pretrain_classes(
    init: EncoderParams,
    methods: &[&CategorizedMethod],
    classes: &[Vec<usize>],
    table: &EmbeddingTable,
    config: &PretrainConfig,
) -> Result<PretrainOutcome, TrainError> {
    config.validate()?;
    let mut params = init;
    if config.epochs == 0 {
        return Ok(PretrainOutcome {
            params,
            log: Vec::new(),
            epoch_losses: Vec::new(),
        });
    }
    let mut sampler = BatchSampler::new(
        classes.to_vec(),
        config.batch_size,
        config.samples_per_class,
        config.seed.wrapping_add(0x5eed),
    )?;
    let d = params.d_model();
    let mut inputs: Vec<Option<Vec<Option<Array2<f64>>>>> = vec![None; methods.len()];
    let opt = config.optimizer();
    let mut state = OptimizerState::new(&params);
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut total = 0.0;
        let mut anchors = 0usize;
        for (b, batch) in sampler.epoch().into_iter().enumerate() {
            let mut forwards = Vec::with_capacity(batch.len());
            let mut z = Array2::<f64>::zeros((batch.len(), d));
            for (row, &(m, _)) in batch.iter().enumerate() {
                let x = inputs[m].get_or_insert_with(|| method_inputs(methods[m], table, d)).clone();
                let fwd = params.forward_inputs(x);
                z.row_mut(row).assign(&fwd.output);
                forwards.push(fwd);
            }
            let labels: Vec<usize> = batch.iter().map(|&(_, l)| l).collect();
            let out = supcon_loss(z.view(), &labels, config.temperature)?;
            if !out.loss.is_finite() {
                return Err(TrainError::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            let mut grads = params.zeros_like();
            for (row, fwd) in forwards.iter().enumerate() {
                params.backward(fwd, out.grad.row(row), &mut grads);
            }
            rmsprop_step(&mut params, &grads, &mut state, &opt)?;
            if !params.is_finite() {
                return Err(TrainError::NonFinite(format!("parameters after epoch {epoch}, batch {b}")));
            }
            log.push(LogEntry {
                epoch,
                batch: b,
                loss: out.loss / out.anchors as f64,
            });
            total += out.loss;
            anchors += out.anchors;
        }
        epoch_losses.push(total / anchors as f64);
    }
    Ok(PretrainOutcome {
        params,
        log,
        epoch_losses,
    })
}
