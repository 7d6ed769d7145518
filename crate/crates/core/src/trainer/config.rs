use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AugmentParams, DownsampleKernel};
use crate::losses::{JointLossConfig, LossWeights, Reconstruction};
use crate::network::GeneratorConfig;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Pairs per optimizer step; clamped to `pairs`.
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    /// Number of LR/HR training pairs.
    pub pairs: usize,
    pub ratio: usize,
    pub kernel: DownsampleKernel,
    pub weights: LossWeights,
    pub use_discriminator: bool,
    pub use_self_attention: bool,
    pub progressive_mode: bool,
    pub use_uniform_loss: bool,
    pub use_repulsion_loss: bool,
    pub reconstruction: Reconstruction,
    pub augment: bool,
    pub seed: u64,
    /// Graph neighborhood size.
    pub k: usize,
    /// Feature channels.
    pub channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 12,
            lr_g: 1e-3,
            lr_d: 1e-4,
            pairs: 12,
            ratio: 4,
            kernel: DownsampleKernel::Random,
            weights: LossWeights::default(),
            use_discriminator: true,
            use_self_attention: true,
            progressive_mode: true,
            use_uniform_loss: true,
            use_repulsion_loss: true,
            reconstruction: Reconstruction::Emd,
            augment: true,
            seed: 0,
            k: 8,
            channels: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("epochs", self.epochs)?;
        positive("batch_size", self.batch_size)?;
        positive("pairs", self.pairs)?;
        positive("k", self.k)?;
        positive("channels", self.channels)?;
        if self.ratio < 2 || !self.ratio.is_power_of_two() {
            return Err(Error::config(
                "ratio",
                format!("must be a power of two >= 2, got {}", self.ratio),
            ));
        }
        for (field, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {lr}")));
            }
        }
        self.weights.validate()
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.min(self.pairs)
    }

    /// Whether the adversarial path runs at all.
    pub fn adversarial_active(&self) -> bool {
        self.use_discriminator && self.weights.adversarial > 0.0
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            ratio: self.ratio,
            k: self.k,
            channels: self.channels,
            progressive: self.progressive_mode,
        }
    }

    pub fn loss_config(&self) -> JointLossConfig {
        let mut weights = self.weights;
        if !self.use_discriminator {
            weights.adversarial = 0.0;
        }
        JointLossConfig {
            weights,
            reconstruction: self.reconstruction,
            use_uniform: self.use_uniform_loss,
            use_repulsion: self.use_repulsion_loss,
            ..Default::default()
        }
    }

    pub fn augment_params(&self) -> AugmentParams {
        if self.augment {
            AugmentParams::default()
        } else {
            AugmentParams::identity()
        }
    }
}
