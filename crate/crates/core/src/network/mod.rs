//! Generator and discriminator built on the autodiff tape.

mod discriminator;
mod generator;

pub use discriminator::Discriminator;
pub use generator::{
    stage_ratios, GraphFeatureExtractor, Generator, GeneratorConfig, UpExpansion,
};

use rand::Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::Result;

/// Slope used by every leaky ReLU in both networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Fully connected layer `x W + b` applied over the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    name: String,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            name: name.into(),
            weight: Tensor::xavier_uniform(&[fan_in, fan_out], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn zeros(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self {
            name: name.into(),
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, trainable: bool) -> Result<NodeId> {
        let w = g.bind(&format!("{}.w", self.name), &self.weight, trainable);
        let b = g.bind(&format!("{}.b", self.name), &self.bias, trainable);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{}.w", self.name), &self.weight);
        f(&format!("{}.b", self.name), &self.bias);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{}.w", self.name), &mut self.weight);
        f(&format!("{}.b", self.name), &mut self.bias);
    }
}

/// `Linear` followed by a leaky ReLU.
fn dense_leaky(layer: &Linear, g: &mut Graph, x: NodeId, trainable: bool) -> Result<NodeId> {
    let y = layer.forward(g, x, trainable)?;
    g.leaky_relu(y, LEAKY_SLOPE)
}
