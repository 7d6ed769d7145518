use rand::Rng;

use super::{dense_leaky, Linear};
use crate::autodiff::{Graph, NodeId, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Scores how real a cloud looks, in `(0, 1)`.
///
/// Per-point MLP, max-pooled global feature concatenated back onto each
/// point, single-head self-attention with a residual connection, a second
/// MLP, max-pool, and a small dense head ending in a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    point: [Linear; 2],
    query: Linear,
    key: Linear,
    value: Linear,
    post: Linear,
    head: [Linear; 2],
    pub use_attention: bool,
}

impl Discriminator {
    fn build(channels: usize, use_attention: bool, mut make: impl FnMut(String, usize, usize) -> Linear) -> Self {
        let c = channels;
        let w = 2 * c;
        Self {
            point: [make("dis.pt0".into(), 3, c), make("dis.pt1".into(), c, c)],
            query: make("dis.q".into(), w, w),
            key: make("dis.k".into(), w, w),
            value: make("dis.v".into(), w, w),
            post: make("dis.post".into(), w, w),
            head: [make("dis.fc0".into(), w, c), make("dis.fc1".into(), c, 1)],
            use_attention,
        }
    }

    pub fn new(channels: usize, use_attention: bool, rng: &mut impl Rng) -> Self {
        Self::build(channels, use_attention, |n, i, o| Linear::new(n, i, o, rng))
    }

    pub fn zeros(channels: usize, use_attention: bool) -> Self {
        Self::build(channels, use_attention, Linear::zeros)
    }

    /// Scalar score node for an `N x 3` point node.
    pub fn forward(&self, g: &mut Graph, points: NodeId, trainable: bool) -> Result<NodeId> {
        let n = g.shape(points)[0];
        if n < 2 {
            return Err(Error::InsufficientPoints {
                required: 2,
                available: n,
            });
        }
        let h = dense_leaky(&self.point[0], g, points, trainable)?;
        let h = dense_leaky(&self.point[1], g, h, trainable)?;
        let c = g.shape(h)[1];
        let global = g.reduce_max(h, 0)?;
        let global = g.reshape(global, &[1, c])?;
        let global = g.gather(global, &vec![0; n], 0)?;
        let mut x = g.concat(&[h, global], 1)?;

        if self.use_attention {
            let q = self.query.forward(g, x, trainable)?;
            let k = self.key.forward(g, x, trainable)?;
            let v = self.value.forward(g, x, trainable)?;
            let kt = g.transpose(k)?;
            let s = g.matmul(q, kt)?;
            let d = g.shape(q)[1] as f64;
            let s = g.scale(s, 1.0 / d.sqrt())?;
            let a = g.softmax(s, 1)?;
            let av = g.matmul(a, v)?;
            x = g.add(x, av)?;
        }

        let h = dense_leaky(&self.post, g, x, trainable)?;
        let w = g.shape(h)[1];
        let pooled = g.reduce_max(h, 0)?;
        let pooled = g.reshape(pooled, &[1, w])?;
        let h = dense_leaky(&self.head[0], g, pooled, trainable)?;
        let logit = self.head[1].forward(g, h, trainable)?;
        let logit = g.reshape(logit, &[])?;
        g.sigmoid(logit)
    }

    pub fn score(&self, pc: &PointCloud) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_points(pc));
        let s = self.forward(&mut g, x, false)?;
        g.scalar(s)
    }

    fn layers(&self) -> [&Linear; 8] {
        [
            &self.point[0],
            &self.point[1],
            &self.query,
            &self.key,
            &self.value,
            &self.post,
            &self.head[0],
            &self.head[1],
        ]
    }
}

impl Parameters for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for l in self.layers() {
            l.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let [a, b] = &mut self.point;
        let [c, d] = &mut self.head;
        for l in [a, b, &mut self.query, &mut self.key, &mut self.value, &mut self.post, c, d] {
            l.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, rng: &mut impl Rng) -> PointCloud {
        PointCloud::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
    }

    #[test]
    fn score_is_in_unit_interval_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::new(32, true, &mut rng);
        let pc = cloud(40, &mut rng);
        let s = d.score(&pc).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(s, d.score(&pc).unwrap());
        assert_eq!(Discriminator::zeros(32, true).score(&pc).unwrap(), 0.5);
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for attention in [true, false] {
            let d = Discriminator::new(32, attention, &mut rng);
            let pc = cloud(50, &mut rng);
            let mut perm: Vec<usize> = (0..50).collect();
            perm.shuffle(&mut rng);
            let a = d.score(&pc).unwrap();
            let b = d.score(&pc.select(&perm).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_names_are_unique() {
        let d = Discriminator::zeros(8, true);
        let mut names = Vec::new();
        d.visit(&mut |n, _| names.push(n.to_string()));
        let count = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), count);
        assert_eq!(count, 16);
    }
}
