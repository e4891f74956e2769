use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Classification plus expectation regression on ground-truth labels.
    #[default]
    Hard,
    /// KL divergence to the teacher ensemble.
    Distill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Half-cosine from `lr` at epoch 0 down to `lr_floor` at the final epoch boundary.
    #[default]
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    /// Teachers label each augmented batch as it is drawn.
    #[default]
    OnTheFly,
    /// Labels come from a store computed once on clean crops.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Defaults to 100 for hard-label training and 200 for distillation.
    pub epochs: Option<usize>,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub lr_floor: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub reg_weight: f64,
    /// Weight of an auxiliary hard-label term during distillation.
    pub hard_weight: f64,
    /// Softmax temperature applied to teacher and student during distillation.
    pub temperature: f64,
    pub teacher_checkpoints: Vec<PathBuf>,
    pub pseudo_mode: PseudoMode,
    pub pseudo_store: Option<PathBuf>,
    /// Fraction of the training set held out for checkpoint selection.
    pub holdout_fraction: f64,
    pub weight_decay: f64,
    /// Maximum global gradient norm; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Apply the augmentation stack to training batches.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Hard,
            epochs: None,
            optimizer: Optimizer::Adam,
            lr: 1e-4,
            lr_schedule: LrSchedule::Cosine,
            lr_floor: 0.0,
            batch_size: 64,
            seed: 0,
            reg_weight: 1.0,
            hard_weight: 0.0,
            temperature: 1.0,
            teacher_checkpoints: Vec::new(),
            pseudo_mode: PseudoMode::OnTheFly,
            pseudo_store: None,
            holdout_fraction: 0.02,
            weight_decay: 0.0,
            grad_clip: None,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn distill() -> Self {
        Self {
            mode: TrainMode::Distill,
            ..Self::default()
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.mode {
            TrainMode::Hard => 100,
            TrainMode::Distill => 200,
        })
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let t = epoch.min(self.epochs()) as f64 / self.epochs() as f64;
                self.lr_floor + (self.lr - self.lr_floor) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("train.{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("train.{name} must be non-negative, got {v}")))
            }
        };
        positive("lr", self.lr)?;
        non_negative("lr_floor", self.lr_floor)?;
        if self.lr_floor > self.lr {
            return Err(Error::config("train.lr_floor exceeds train.lr"));
        }
        if self.epochs() == 0 {
            return Err(Error::config("train.epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        non_negative("reg_weight", self.reg_weight)?;
        non_negative("hard_weight", self.hard_weight)?;
        non_negative("weight_decay", self.weight_decay)?;
        positive("temperature", self.temperature)?;
        if let Some(c) = self.grad_clip {
            positive("grad_clip", c)?;
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config(format!("train.holdout_fraction must lie in [0, 1), got {}", self.holdout_fraction)));
        }
        if self.mode == TrainMode::Distill {
            match self.pseudo_mode {
                PseudoMode::OnTheFly if self.teacher_checkpoints.is_empty() => {
                    return Err(Error::config("distillation on the fly needs at least one entry in train.teacher_checkpoints"));
                }
                PseudoMode::Precomputed if self.pseudo_store.is_none() => {
                    return Err(Error::config("precomputed distillation needs train.pseudo_store"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_follow_mode() {
        assert_eq!(TrainConfig::default().epochs(), 100);
        assert_eq!(TrainConfig::distill().epochs(), 200);
        assert_eq!(TrainConfig::default().lr, 1e-4);
    }

    #[test]
    fn cosine_endpoints() {
        let cfg = TrainConfig {
            epochs: Some(20),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(20), 0.0);
        assert!((cfg.lr_at(10) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn distill_requires_targets() {
        let cfg = TrainConfig::distill();
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let cfg = TrainConfig {
            teacher_checkpoints: vec!["t.ckpt".into()],
            ..TrainConfig::distill()
        };
        assert!(cfg.validate().is_ok());
        let cfg = TrainConfig {
            pseudo_mode: PseudoMode::Precomputed,
            ..TrainConfig::distill()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.001, "momentum": 0.9}"#).is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"mode": "distill", "pseudo_mode": "precomputed"}"#).unwrap();
        assert_eq!(cfg.pseudo_mode, PseudoMode::Precomputed);
    }

    proptest! {
        #[test]
        fn cosine_is_monotone(epochs in 1usize..300, lr in 1e-6f64..1.0, floor_frac in 0.0f64..1.0) {
            let cfg = TrainConfig { epochs: Some(epochs), lr, lr_floor: lr * floor_frac, ..TrainConfig::default() };
            for e in 0..epochs {
                prop_assert!(cfg.lr_at(e + 1) <= cfg.lr_at(e));
            }
            prop_assert!((cfg.lr_at(epochs) - cfg.lr_floor).abs() <= 1e-15 * lr);
        }
    }
}
