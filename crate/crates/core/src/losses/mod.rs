//! Training losses and the weighted joint objective.

mod adversarial;
pub mod assignment;
mod emd;
mod repulsion;
mod uniform;

pub use adversarial::{adversarial_losses, discriminator_adversarial, generator_adversarial};
pub use emd::{chamfer_loss, emd, emd_assignment, emd_loss};
pub use repulsion::{repulsion_loss, RepulsionConfig};
pub use uniform::{disks, uniform_loss, uniformity_value, Disk, UniformLossConfig, DEFAULT_P_SET};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Weights of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub adversarial: f64,
    pub reconstruction: f64,
    pub uniform: f64,
    pub repulsion: f64,
    pub weight_decay: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adversarial: 0.005,
            reconstruction: 1.0,
            uniform: 0.1,
            repulsion: 0.01,
            weight_decay: 0.01,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            adversarial: 0.0,
            reconstruction: 0.0,
            uniform: 0.0,
            repulsion: 0.0,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("adversarial", self.adversarial),
            ("reconstruction", self.reconstruction),
            ("uniform", self.uniform),
            ("repulsion", self.repulsion),
            ("weight_decay", self.weight_decay),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(
                    &format!("weights.{name}"),
                    format!("must be a finite non-negative number, got {w}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconstruction {
    #[default]
    Emd,
    Cd,
}

impl std::str::FromStr for Reconstruction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emd" => Ok(Self::Emd),
            "cd" => Ok(Self::Cd),
            _ => Err(Error::InvalidArgument(format!(
                "unknown reconstruction loss `{s}` (expected emd or cd)"
            ))),
        }
    }
}

impl std::fmt::Display for Reconstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Emd => "emd",
            Self::Cd => "cd",
        })
    }
}

/// Everything the joint objective needs besides the clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLossConfig {
    pub weights: LossWeights,
    pub reconstruction: Reconstruction,
    pub use_uniform: bool,
    pub use_repulsion: bool,
    pub uniform: UniformLossConfig,
    pub repulsion: RepulsionConfig,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            reconstruction: Reconstruction::Emd,
            use_uniform: true,
            use_repulsion: true,
            uniform: UniformLossConfig::default(),
            repulsion: RepulsionConfig::default(),
        }
    }
}

/// Unweighted component values. A component that was switched off or has a
/// zero weight is not evaluated and reads exactly 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adversarial: f64,
    pub reconstruction: f64,
    pub uniform: f64,
    pub repulsion: f64,
    pub regularization: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct JointLoss {
    pub total: NodeId,
    pub breakdown: LossBreakdown,
}

/// Sum of squares of every trainable parameter bound on the tape.
pub fn weight_decay(g: &mut Graph) -> Result<NodeId> {
    let params: Vec<NodeId> = g.trainable().iter().map(|(_, id)| *id).collect();
    let mut total = g.constant(Tensor::scalar(0.0));
    for p in params {
        let s = g.square(p)?;
        let s = g.sum(s)?;
        total = g.add(total, s)?;
    }
    Ok(total)
}

/// `a L_G + b L_rec + u L_uni + l L_rep + w |theta|^2`, where theta is every
/// trainable parameter on the tape. `score_fake` is only consulted when the
/// adversarial weight is positive.
pub fn joint_loss(
    g: &mut Graph,
    generated: NodeId,
    target: NodeId,
    score_fake: Option<NodeId>,
    cfg: &JointLossConfig,
) -> Result<JointLoss> {
    let w = &cfg.weights;
    let mut b = LossBreakdown::default();
    let mut terms: Vec<(NodeId, f64)> = Vec::new();

    if w.adversarial > 0.0 {
        if let Some(s) = score_fake {
            let l = generator_adversarial(g, s)?;
            b.adversarial = g.scalar(l)?;
            terms.push((l, w.adversarial));
        }
    }
    if w.reconstruction > 0.0 {
        let l = match cfg.reconstruction {
            Reconstruction::Emd => emd_loss(g, generated, target)?,
            Reconstruction::Cd => chamfer_loss(g, generated, target)?,
        };
        b.reconstruction = g.scalar(l)?;
        terms.push((l, w.reconstruction));
    }
    if cfg.use_uniform && w.uniform > 0.0 {
        let l = uniform_loss(g, generated, &cfg.uniform)?;
        b.uniform = g.scalar(l)?;
        terms.push((l, w.uniform));
    }
    if cfg.use_repulsion && w.repulsion > 0.0 {
        let l = repulsion_loss(g, generated, cfg.repulsion)?;
        b.repulsion = g.scalar(l)?;
        terms.push((l, w.repulsion));
    }
    if w.weight_decay > 0.0 {
        let l = weight_decay(g)?;
        b.regularization = g.scalar(l)?;
        terms.push((l, w.weight_decay));
    }

    let mut total = g.constant(Tensor::scalar(0.0));
    for (node, weight) in terms {
        let scaled = g.scale(node, weight)?;
        total = g.add(total, scaled)?;
    }
    b.total = g.scalar(total)?;
    Ok(JointLoss { total, breakdown: b })
}
