//! Training: SupCon pretraining, RMSProp, classifier heads, gradient checks.

mod finetune;
pub mod gradcheck;
mod head;
mod optim;
mod pretrain;
mod supcon;

use crate::config::{parse_kv, parse_value, ConfigError};
use crate::encoder::EncoderParams;
use crate::nn::AttentionBlock;

pub use finetune::{finetune, train_head_on_vectors, FinetuneConfig, FinetuneOutcome};
pub use head::{pair_input, softmax_cross_entropy, FineTuneHead, HeadCache, Linear, HEAD_MAGIC, PAIR_INPUT};
pub use optim::{rmsprop_step, rmsprop_update, OptimizerState, RmsProp};
pub use pretrain::{pretrain, pretrain_classes, BatchSampler, LogEntry, PretrainOutcome};
pub use supcon::{supcon_loss, SupConOutput};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Pair-access observer used by the evaluation harness to prove that a
/// fold's test pairs never reach training.
pub type PairObserver<'a> = &'a (dyn Fn(usize) + Sync);

/// Read-write view of trainable tensors as flat slices in a fixed order.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_scalars(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrite from a flat vector produced by `flatten`.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        assert_eq!(off, flat.len(), "flat vector length");
    }
}

impl Parameters for AttentionBlock {
    fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, d)| d).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut().into_iter().collect()
    }
}

impl Parameters for EncoderParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.blocks().flat_map(|b| b.slices()).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks_mut().flat_map(|b| b.slices_mut()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub lr: f64,
    pub rmsprop_momentum: f64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// K in the P×K batch sampler.
    pub samples_per_class: usize,
    pub temperature: f64,
    pub seed: u64,
    pub embedding_frozen: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            rmsprop_momentum: 0.9,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
            weight_decay: 1e-4,
            epochs: 10,
            batch_size: 64,
            samples_per_class: 4,
            temperature: 0.07,
            seed: 0,
            embedding_frozen: true,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be > 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if self.samples_per_class < 2 || self.samples_per_class > self.batch_size {
            return bad("samples_per_class must be in [2, batch_size]");
        }
        if !(0.0..1.0).contains(&self.rmsprop_momentum) || !(0.0..1.0).contains(&self.rmsprop_alpha) {
            return bad("rmsprop_momentum and rmsprop_alpha must be in [0, 1)");
        }
        if !(self.rmsprop_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("rmsprop_eps must be > 0 and weight_decay >= 0");
        }
        if !self.embedding_frozen {
            return bad("embedding_frozen = false is not supported");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> RmsProp {
        RmsProp {
            lr: self.lr,
            alpha: self.rmsprop_alpha,
            eps: self.rmsprop_eps,
            momentum: self.rmsprop_momentum,
            weight_decay: self.weight_decay,
        }
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "lr" => self.lr = parse_value(key, value)?,
            "rmsprop_momentum" | "momentum" => self.rmsprop_momentum = parse_value(key, value)?,
            "rmsprop_alpha" => self.rmsprop_alpha = parse_value(key, value)?,
            "rmsprop_eps" => self.rmsprop_eps = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "samples_per_class" => self.samples_per_class = parse_value(key, value)?,
            "temperature" | "tau" => self.temperature = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "embedding_frozen" => self.embedding_frozen = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Defaults overridden by a `key = value` file body, then validated.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PretrainConfig::default();
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.temperature, 0.07);
        assert!(cfg.validate().is_ok());
        let cfg = PretrainConfig::from_kv_text("epochs = 3\ntemperature = 0.5\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.temperature, 0.5);
        assert!(matches!(PretrainConfig::from_kv_text("temperature = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PretrainConfig::from_kv_text("nope = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(PretrainConfig::from_kv_text("epochs = x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(PretrainConfig::from_kv_text("batch_size = 1"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let mut p = EncoderParams::init_with_dims(1, 4, 1, 6);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.num_params());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.assign_flat(&doubled);
        assert_eq!(p.flatten(), doubled);
    }
}
