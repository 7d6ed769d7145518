use rand::Rng;

use super::{dense_leaky, Linear};
use crate::autodiff::{Graph, NodeId, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{knn_all, PointCloud};

/// Architecture hyperparameters shared by training and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub ratio: usize,
    pub k: usize,
    pub channels: usize,
    /// `false` collapses the generator to one `x ratio` stage.
    pub progressive: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            ratio: 4,
            k: 8,
            channels: 32,
            progressive: true,
        }
    }
}

/// Per-stage expansion ratios: `log2(r)` stages of 2, or a single stage of `r`.
pub fn stage_ratios(ratio: usize, progressive: bool) -> Result<Vec<usize>> {
    if ratio < 2 || !ratio.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "upsampling ratio must be a power of two >= 2, got {ratio}"
        )));
    }
    Ok(if progressive {
        vec![2; ratio.trailing_zeros() as usize]
    } else {
        vec![ratio]
    })
}

/// Shared two-layer MLP over `(neighbor - center, center)` inputs, averaged
/// over the k neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatureExtractor {
    pub layers: [Linear; 2],
}

impl GraphFeatureExtractor {
    fn build(prefix: &str, channels: usize, mut make: impl FnMut(String, usize, usize) -> Linear) -> Self {
        Self {
            layers: [
                make(format!("{prefix}.psi0"), 6, channels),
                make(format!("{prefix}.psi1"), channels, channels),
            ],
        }
    }

    pub fn channels(&self) -> usize {
        self.layers[1].weight.shape()[1]
    }

    /// `points` is `N x 3`, `nbrs` holds k neighbor indices per point in row
    /// order. Returns `N x C`.
    pub fn forward(
        &self,
        g: &mut Graph,
        points: NodeId,
        nbrs: &[usize],
        k: usize,
        trainable: bool,
    ) -> Result<NodeId> {
        let n = g.shape(points)[0];
        if nbrs.len() != n * k {
            return Err(Error::ShapeMismatch {
                op: "graph_features",
                left: vec![n, k],
                right: vec![nbrs.len()],
            });
        }
        let centers_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        let neighbors = g.gather(points, nbrs, 0)?;
        let centers = g.gather(points, &centers_idx, 0)?;
        let rel = g.sub(neighbors, centers)?;
        let x = g.concat(&[rel, centers], 1)?;
        let h = dense_leaky(&self.layers[0], g, x, trainable)?;
        let h = dense_leaky(&self.layers[1], g, h, trainable)?;
        let c = self.channels();
        let h = g.reshape(h, &[n, k, c])?;
        g.reduce_mean(h, 1)
    }
}

/// Two parallel single-layer branches producing `3u` offsets per point.
#[derive(Debug, Clone, PartialEq)]
pub struct UpExpansion {
    pub neighbor: Linear,
    pub center: Linear,
    pub u: usize,
}

impl UpExpansion {
    fn build(prefix: &str, channels: usize, u: usize, mut make: impl FnMut(String, usize, usize) -> Linear) -> Self {
        Self {
            neighbor: make(format!("{prefix}.nbr"), channels, 3 * u),
            center: make(format!("{prefix}.ctr"), channels, 3 * u),
            u,
        }
    }

    /// Returns the `uN x 3` expanded points. Row `i*u + j` is point `i` plus
    /// its `j`-th offset.
    pub fn forward(
        &self,
        g: &mut Graph,
        points: NodeId,
        feats: NodeId,
        nbrs: &[usize],
        k: usize,
        trainable: bool,
    ) -> Result<NodeId> {
        let n = g.shape(points)[0];
        if g.shape(feats).len() != 2 || g.shape(feats)[0] != n || nbrs.len() != n * k {
            return Err(Error::ShapeMismatch {
                op: "up_expand",
                left: g.shape(points).to_vec(),
                right: g.shape(feats).to_vec(),
            });
        }
        let u = self.u;
        let nf = g.gather(feats, nbrs, 0)?;
        let nb = self.neighbor.forward(g, nf, trainable)?;
        let nb = g.reshape(nb, &[n, k, 3 * u])?;
        let nb = g.reduce_mean(nb, 1)?;
        let ct = self.center.forward(g, feats, trainable)?;
        let sum = g.add(nb, ct)?;
        let f = g.scale(sum, 0.5)?;
        let offsets = g.reshape(f, &[n * u, 3])?;
        let rep_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, u)).collect();
        let rep = g.gather(points, &rep_idx, 0)?;
        g.add(rep, offsets)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    features: GraphFeatureExtractor,
    expand: UpExpansion,
}

/// Progressive upsampling generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    stages: Vec<Stage>,
}

impl Generator {
    fn build(config: GeneratorConfig, mut make: impl FnMut(String, usize, usize) -> Linear) -> Result<Self> {
        if config.k == 0 || config.channels == 0 {
            return Err(Error::InvalidArgument("k and channels must be positive".into()));
        }
        let stages = stage_ratios(config.ratio, config.progressive)?
            .into_iter()
            .enumerate()
            .map(|(s, u)| {
                let prefix = format!("gen.s{s}");
                Stage {
                    features: GraphFeatureExtractor::build(&prefix, config.channels, &mut make),
                    expand: UpExpansion::build(&prefix, config.channels, u, &mut make),
                }
            })
            .collect();
        Ok(Self { config, stages })
    }

    /// Xavier-initialized weights, zero biases.
    pub fn new(config: GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        Self::build(config, |name, i, o| Linear::new(name, i, o, rng))
    }

    /// All-zero parameters: the generator replicates every input point.
    pub fn zeros(config: GeneratorConfig) -> Result<Self> {
        Self::build(config, Linear::zeros)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn feature_extractor(&self, stage: usize) -> &GraphFeatureExtractor {
        &self.stages[stage].features
    }

    pub fn expansion(&self, stage: usize) -> &UpExpansion {
        &self.stages[stage].expand
    }

    /// Runs every stage on the tape. Neighborhoods are recomputed from the
    /// current stage's point values and are not differentiated.
    pub fn forward(&self, g: &mut Graph, points: NodeId, trainable: bool) -> Result<NodeId> {
        let k = self.config.k;
        let mut x = points;
        for stage in &self.stages {
            let n = g.shape(x)[0];
            if n <= k {
                return Err(Error::InsufficientPoints {
                    required: k + 1,
                    available: n,
                });
            }
            let pc = g.value(x).to_point_cloud()?;
            let nbrs: Vec<usize> = knn_all(&pc, k)?.into_iter().flatten().collect();
            let feats = stage.features.forward(g, x, &nbrs, k, trainable)?;
            x = stage.expand.forward(g, x, feats, &nbrs, k, trainable)?;
        }
        Ok(x)
    }

    /// Upsamples a cloud without recording gradients.
    pub fn upsample(&self, pc: &PointCloud) -> Result<PointCloud> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_points(pc));
        let y = self.forward(&mut g, x, false)?;
        g.value(y).to_point_cloud()
    }
}

impl Parameters for Generator {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for s in &self.stages {
            for l in &s.features.layers {
                l.visit(f);
            }
            s.expand.neighbor.visit(f);
            s.expand.center.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for s in &mut self.stages {
            for l in &mut s.features.layers {
                l.visit_mut(f);
            }
            s.expand.neighbor.visit_mut(f);
            s.expand.center.visit_mut(f);
        }
    }
}
