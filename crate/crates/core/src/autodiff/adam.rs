use std::collections::BTreeMap;

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

/// A set of named tensors an optimizer can update.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    /// Squared L2 norm over every parameter.
    fn sum_squares(&self) -> f64 {
        let mut s = 0.0;
        self.visit(&mut |_, t| s += t.sum_squares());
        s
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }
}

/// Adam with bias correction. Moments are keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. A parameter without a gradient is treated as having a
    /// zero gradient.
    pub fn step(&mut self, params: &mut dyn Parameters, grads: &Gradients) -> Result<()> {
        let mut mismatch = None;
        params.visit(&mut |name, p| {
            if let Some(g) = grads.named(name) {
                if g.shape() != p.shape() && mismatch.is_none() {
                    mismatch = Some(Error::ShapeMismatch {
                        op: "adam",
                        left: p.shape().to_vec(),
                        right: g.shape().to_vec(),
                    });
                }
            }
        });
        if let Some(e) = mismatch {
            return Err(e);
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut(&mut |name, p| {
            let zeros = Tensor::zeros(p.shape());
            let g = grads.named(name).unwrap_or(&zeros);
            let m = ms.entry(name.to_string()).or_insert_with(|| zeros.clone());
            let v = vs.entry(name.to_string()).or_insert_with(|| zeros.clone());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                md[i] = b1 * md[i] + (1.0 - b1) * gi;
                vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        });
        Ok(())
    }

    /// First and second moments by parameter name.
    pub fn moments(&self) -> (&BTreeMap<String, Tensor>, &BTreeMap<String, Tensor>) {
        (&self.m, &self.v)
    }

    /// Rebuilds an optimizer from saved state.
    pub fn restore(
        lr: f64,
        step: u64,
        m: BTreeMap<String, Tensor>,
        v: BTreeMap<String, Tensor>,
    ) -> Self {
        Self {
            step,
            m,
            v,
            ..Self::new(lr)
        }
    }
}
