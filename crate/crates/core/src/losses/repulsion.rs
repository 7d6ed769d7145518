use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::geometry::knn_all;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepulsionConfig {
    /// Neighbors per point.
    pub k: usize,
    /// Hinge radius.
    pub h: f64,
}

impl Default for RepulsionConfig {
    fn default() -> Self {
        Self { k: 5, h: 0.03 }
    }
}

/// `1/(N K) * sum_i sum_k max(0, h - |x_i - x_ik|)` over each point's k
/// nearest neighbors. Neighborhoods come from the current values.
pub fn repulsion_loss(g: &mut Graph, x: NodeId, cfg: RepulsionConfig) -> Result<NodeId> {
    let n = g.shape(x)[0];
    if cfg.k == 0 || n <= cfg.k {
        return Err(Error::InsufficientPoints {
            required: cfg.k + 1,
            available: n,
        });
    }
    let pc = g.value(x).to_point_cloud()?;
    let nbrs: Vec<usize> = knn_all(&pc, cfg.k)?.into_iter().flatten().collect();
    let centers: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, cfg.k)).collect();
    let a = g.gather(x, &centers, 0)?;
    let b = g.gather(x, &nbrs, 0)?;
    let d = g.sub(a, b)?;
    let d = g.norm_last(d)?;
    let gap = g.affine(d, -1.0, cfg.h)?;
    let eta = g.relu(gap)?;
    let s = g.sum(eta)?;
    g.scale(s, 1.0 / (n * cfg.k) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn eval(points: Vec<f64>, cfg: RepulsionConfig) -> f64 {
        let mut g = Graph::new();
        let n = points.len() / 3;
        let x = g.constant(Tensor::new(vec![n, 3], points).unwrap());
        let l = repulsion_loss(&mut g, x, cfg).unwrap();
        g.scalar(l).unwrap()
    }

    #[test]
    fn hand_examples() {
        let cfg = RepulsionConfig { k: 1, h: 0.03 };
        assert_eq!(eval(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], cfg), 0.0);
        assert!((eval(vec![0.5; 6], cfg) - 0.03).abs() < 1e-15);
        let grid: Vec<f64> = (0..27)
            .flat_map(|i| [(i % 3) as f64 * 0.1, (i / 3 % 3) as f64 * 0.1, (i / 9) as f64 * 0.1])
            .collect();
        assert_eq!(eval(grid, RepulsionConfig::default()), 0.0);
    }

    #[test]
    fn needs_more_points_than_neighbors() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[5, 3]));
        assert!(repulsion_loss(&mut g, x, RepulsionConfig::default()).is_err());
    }
}
