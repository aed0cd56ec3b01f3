//! Training configuration and learning-rate schedule shared by both parsers.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::repr::{VectorTable, DEFAULT_HASH_BITS, DEFAULT_PROJECTION_DIM};
use crate::tree::ParseTree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid training configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

/// Maximum unary-chain length the in-order system may build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryLimit {
    /// Longest chain observed in the training data.
    Auto,
    Fixed(usize),
}

impl Default for UnaryLimit {
    fn default() -> Self {
        UnaryLimit::Fixed(4)
    }
}

impl Serialize for UnaryLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            UnaryLimit::Auto => s.serialize_str("auto"),
            UnaryLimit::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for UnaryLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(UnaryLimit::Fixed(n as usize)),
            Repr::S(s) if s == "auto" => Ok(UnaryLimit::Auto),
            Repr::S(s) => Err(serde::de::Error::custom(format!("unary_limit must be a number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Base rate for decoder (scorer) parameters.
    pub decoder_lr: f64,
    /// Base rate for the projection of imported vectors.
    pub representation_lr: f64,
    /// Epochs without a new best dev F1 before the rates are halved.
    pub patience: usize,
    pub decay: f64,
    /// Linear warmup of the representation rate, in updates.
    pub warmup_updates: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub hash_bits: u32,
    pub projection_dim: usize,
    pub unary_limit: UnaryLimit,
    pub beam_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decoder_lr: 1e-3,
            representation_lr: 2e-5,
            patience: 2,
            decay: 0.5,
            warmup_updates: 160,
            max_epochs: 30,
            seeds: vec![1, 2, 3, 4, 5],
            hash_bits: DEFAULT_HASH_BITS,
            projection_dim: DEFAULT_PROJECTION_DIM,
            unary_limit: UnaryLimit::default(),
            beam_size: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.decoder_lr > 0.0 && self.representation_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(1..=32).contains(&self.hash_bits) {
            return bad("hash_bits must be in 1..=32");
        }
        if self.projection_dim == 0 {
            return bad("projection_dim must be at least 1");
        }
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if self.unary_limit == UnaryLimit::Fixed(0) {
            return bad("unary_limit must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Learning-rate multipliers for one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrMultipliers {
    /// Plateau decay only.
    pub decoder: f64,
    /// Plateau decay times the warmup ramp.
    pub representation: f64,
    pub warmup: f64,
    pub halvings: u32,
}

/// Number of plateau decays triggered by a dev-F1 history: one each time
/// `patience` consecutive epochs pass without a new best.
pub fn plateau_decays(dev_history: &[f64], patience: usize) -> u32 {
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut decays = 0;
    for &f in dev_history {
        if f > best {
            best = f;
            stale = 0;
        } else {
            stale += 1;
            if stale == patience {
                decays += 1;
                stale = 0;
            }
        }
    }
    decays
}

/// `step` is the 1-based index of the update about to be applied.
pub fn lr_schedule(step: usize, dev_history: &[f64], config: &TrainConfig) -> LrMultipliers {
    let warmup = if config.warmup_updates == 0 { 1.0 } else { (step as f64 / config.warmup_updates as f64).min(1.0) };
    let halvings = plateau_decays(dev_history, config.patience);
    let decay = config.decay.powi(halvings as i32);
    LrMultipliers { decoder: decay, representation: decay * warmup, warmup, halvings }
}

/// Trees plus, optionally, the imported vectors aligned with their sentences.
#[derive(Debug, Clone, Copy)]
pub struct Corpus<'a> {
    pub trees: &'a [ParseTree],
    pub vectors: Option<&'a VectorTable>,
}

impl<'a> Corpus<'a> {
    pub fn new(trees: &'a [ParseTree]) -> Self {
        Corpus { trees, vectors: None }
    }

    pub fn with_vectors(trees: &'a [ParseTree], vectors: Option<&'a VectorTable>) -> Self {
        Corpus { trees, vectors }
    }

    pub fn sentence_vectors(&self, i: usize) -> Option<Vec<&'a [f32]>> {
        self.vectors.map(|t| t.sentence_rows(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub updates: usize,
    pub loss: f64,
    pub dev_f1: f64,
    pub decoder_multiplier: f64,
    pub representation_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epoch\tupdates\tloss\tdev_f1\tdecoder_lr_mult\trepr_lr_mult")?;
        for e in &self.epochs {
            writeln!(
                f,
                "{}\t{}\t{:.4}\t{:.2}\t{:.6}\t{:.6}",
                e.epoch, e.updates, e.loss, e.dev_f1, e.decoder_multiplier, e.representation_multiplier
            )?;
        }
        writeln!(f, "# best epoch {} dev F1 {:.2}", self.best_epoch, self.best_dev_f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(80, &[], &cfg).representation, 0.5);
        assert_eq!(lr_schedule(0, &[], &cfg).representation, 0.0);
        assert_eq!(lr_schedule(160, &[], &cfg).representation, 1.0);
        assert_eq!(lr_schedule(1000, &[], &cfg).representation, 1.0);
        assert_eq!(lr_schedule(80, &[], &cfg).decoder, 1.0);
    }

    #[test]
    fn plateau_halving() {
        let cfg = TrainConfig::default();
        assert_eq!(plateau_decays(&[90.0, 90.0], 2), 0);
        assert_eq!(plateau_decays(&[90.0, 90.0, 90.0], 2), 1);
        assert_eq!(lr_schedule(500, &[90.0, 90.0, 90.0], &cfg).decoder, 0.5);
        assert_eq!(plateau_decays(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), 0);
        assert_eq!(plateau_decays(&[90.0, 89.0, 88.0, 87.0, 86.0], 2), 2);
        assert_eq!(plateau_decays(&[90.0, 89.0, 91.0, 90.0, 90.0], 2), 1);
    }

    #[test]
    fn config_toml() {
        let cfg = TrainConfig::from_toml("batch_size = 8\nunary_limit = \"auto\"\nseeds = [3]\n").unwrap();
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.unary_limit, UnaryLimit::Auto);
        assert_eq!(cfg.decoder_lr, 1e-3);
        assert!(TrainConfig::from_toml("batch_size = 0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("unary_limit = \"many\"").is_err());
        let text = toml::to_string(&TrainConfig::default()).unwrap();
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), TrainConfig::default());
    }
}
