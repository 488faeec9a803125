use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ArchConfig;

/// Hyperparameters of the student/autoencoder training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub iterations: usize,
    pub lr: f32,
    /// The learning rate drops to `lr_decayed` for iterations after this one.
    pub lr_decay_at: usize,
    pub lr_decayed: f32,
    pub weight_decay: f32,
    pub p_hard: f64,
    pub quantile_a: f64,
    pub quantile_b: f64,
    pub aug_range: (f32, f32),
    pub penalty_gray_prob: f64,
    /// Fraction of training images held out for map normalization (at least one).
    pub validation_fraction: f64,
    /// Exponential smoothing factor of the recorded loss curve.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            iterations: 70_000,
            lr: 1e-4,
            lr_decay_at: 66_500,
            lr_decayed: 1e-5,
            weight_decay: 1e-5,
            p_hard: 0.999,
            quantile_a: 0.9,
            quantile_b: 0.995,
            aug_range: (0.8, 1.2),
            penalty_gray_prob: 0.3,
            validation_fraction: 0.1,
            smoothing: 0.05,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Overrides the iteration count and moves the decay point to 95% of it.
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self.lr_decay_at = (0.95 * iterations as f64).round() as usize;
        self
    }

    /// Learning rate in effect for 1-based `iteration`.
    pub fn lr_at(&self, iteration: usize) -> f32 {
        if iteration > self.lr_decay_at {
            self.lr_decayed
        } else {
            self.lr
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let op = "train_config";
        if !(0.0..1.0).contains(&self.p_hard) {
            return Err(Error::invalid(
                op,
                format!("p_hard {} not in [0, 1)", self.p_hard),
            ));
        }
        if !(0.0 <= self.quantile_a && self.quantile_a < self.quantile_b && self.quantile_b <= 1.0)
        {
            return Err(Error::invalid(
                op,
                format!(
                    "need 0 <= a < b <= 1, got a={} b={}",
                    self.quantile_a, self.quantile_b
                ),
            ));
        }
        let (lo, hi) = self.aug_range;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid(op, "augmentation range is empty"));
        }
        if !(0.0..=1.0).contains(&self.penalty_gray_prob) {
            return Err(Error::invalid(op, "penalty_gray_prob not in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid(op, "validation_fraction not in [0, 1)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_paper_scale() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(1), 1e-4);
        assert_eq!(cfg.lr_at(66_500), 1e-4);
        assert_eq!(cfg.lr_at(66_501), 1e-5);
        assert_eq!(cfg.lr_at(70_000), 1e-5);
    }

    #[test]
    fn decay_point_scales_with_iterations() {
        assert_eq!(
            TrainConfig::default().with_iterations(70_000).lr_decay_at,
            66_500
        );
        assert_eq!(
            TrainConfig::default().with_iterations(3000).lr_decay_at,
            2850
        );
        assert_eq!(TrainConfig::default().with_iterations(0).lr_decay_at, 0);
    }

    #[test]
    fn invalid_quantiles_rejected() {
        let swapped = TrainConfig {
            quantile_a: 0.99,
            quantile_b: 0.95,
            ..TrainConfig::default()
        };
        assert!(swapped.validate().is_err());
        let all_hard = TrainConfig {
            p_hard: 1.0,
            ..TrainConfig::default()
        };
        assert!(all_hard.validate().is_err());
    }
}
