//! Training: spatial + frequency losses, Adam, the learning-rate
//! schedule, checkpointing, and the deterministic training loop.

mod adam;
mod checkpoint;
mod loop_;
mod loss;

pub use adam::{adam_step_buffer, Adam, AdamHyper};
pub use checkpoint::Checkpoint;
pub use loop_::{IterRecord, TrainSummary, Trainer};
pub use loss::{frequency_loss, next_pow2, spatial_loss, total_loss};

use crate::error::{Error, Result};

/// Optimization schedule and loop controls. Defaults follow the paper's
/// training recipe; `desk()` shrinks them to laptop scale.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_iters: u64,
    pub lr0: f64,
    pub halve_every: u64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// LR patch edge length; HR patches are `scale` times larger.
    pub patch_size: usize,
    /// Desk-scale override: disable flips/rotations/channel shuffling.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            total_iters: 800_000,
            lr0: 5e-4,
            halve_every: 200_000,
            lambda: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 10_000,
            patch_size: 64,
            augment: true,
        }
    }
}

impl TrainConfig {
    /// Laptop-scale smoke defaults.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 4,
            total_iters: 2_000,
            checkpoint_every: 500,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::config("lambda must be non-negative"));
        }
        if self.lr0 <= 0.0 {
            return Err(Error::config("initial learning rate must be positive"));
        }
        if self.halve_every == 0 {
            return Err(Error::config("halve_every must be positive"));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::config("batch and patch sizes must be positive"));
        }
        Ok(())
    }
}

/// Step-decay schedule: `lr0 * 0.5^floor(iter / halve_every)`.
pub fn lr_at(iter: u64, config: &TrainConfig) -> f64 {
    config.lr0 * 0.5f64.powi((iter / config.halve_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_reference_points() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 5e-4);
        assert_eq!(lr_at(199_999, &cfg), 5e-4);
        assert_eq!(lr_at(200_000, &cfg), 2.5e-4);
        assert_eq!(lr_at(400_000, &cfg), 1.25e-4);
        assert_eq!(lr_at(799_999, &cfg), 6.25e-5);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.lambda = -0.1;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.lr0 = 0.0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.halve_every = 0;
        assert!(cfg.validate().is_err());
    }
}
