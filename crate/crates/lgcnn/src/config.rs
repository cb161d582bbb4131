//! Training configuration files (TOML). Every key is optional:
//!
//! ```toml
//! epochs = 30
//! batch_size = 64
//! learning_rate = 0.001
//! optimizer = "adam"      # sgd | sgd_momentum | adam
//! momentum = 0.9
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! seed = 0
//! checkpoint_every = 0
//! repeats = 1
//! ```

use std::fs;
use std::path::Path;

use lgcnn_core::train::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<String>,
    pub momentum: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub repeats: Option<usize>,
}

impl TrainFile {
    pub fn read(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        toml::from_str(&text).map_err(|e| AppError::input(format!("{}: {e}", path.display())))
    }

    /// Layers `over` on top of `self`: any key set in `over` wins.
    pub fn overlay(self, over: TrainFile) -> TrainFile {
        TrainFile {
            epochs: over.epochs.or(self.epochs),
            batch_size: over.batch_size.or(self.batch_size),
            learning_rate: over.learning_rate.or(self.learning_rate),
            optimizer: over.optimizer.or(self.optimizer),
            momentum: over.momentum.or(self.momentum),
            beta1: over.beta1.or(self.beta1),
            beta2: over.beta2.or(self.beta2),
            epsilon: over.epsilon.or(self.epsilon),
            seed: over.seed.or(self.seed),
            checkpoint_every: over.checkpoint_every.or(self.checkpoint_every),
            repeats: over.repeats.or(self.repeats),
        }
    }

    /// Fills unset keys from the defaults.
    pub fn resolve(&self) -> AppResult<(TrainConfig, usize)> {
        let mut cfg = TrainConfig::default();
        let o = &mut cfg.optimizer;
        if let Some(name) = &self.optimizer {
            o.kind = OptimizerKind::parse(name)?;
        }
        o.learning_rate = self.learning_rate.unwrap_or(o.learning_rate);
        o.momentum = self.momentum.unwrap_or(o.momentum);
        o.beta1 = self.beta1.unwrap_or(o.beta1);
        o.beta2 = self.beta2.unwrap_or(o.beta2);
        o.epsilon = self.epsilon.unwrap_or(o.epsilon);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.checkpoint_every = self.checkpoint_every.unwrap_or(cfg.checkpoint_every);
        cfg.validate()?;
        let repeats = self.repeats.unwrap_or(1);
        if repeats == 0 {
            return Err(AppError::input("repeats must be >= 1"));
        }
        Ok((cfg, repeats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_defaults() {
        let file: TrainFile = toml::from_str("epochs = 5\nlearning_rate = 0.1\n").unwrap();
        let flags = TrainFile { epochs: Some(2), ..TrainFile::default() };
        let (cfg, repeats) = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.optimizer.learning_rate, 0.1);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(repeats, 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<TrainFile>("epoch = 5\n").is_err());
        let bad = TrainFile { optimizer: Some("rmsprop".into()), ..TrainFile::default() };
        assert!(bad.resolve().is_err());
    }
}
