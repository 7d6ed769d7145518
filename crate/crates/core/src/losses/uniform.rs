use std::f64::consts::PI;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{fps, NeighborIndex, PointCloud};

/// Disk-area fractions of a unit area.
pub const DEFAULT_P_SET: [f64; 5] = [0.004, 0.006, 0.008, 0.01, 0.012];

#[derive(Debug, Clone, PartialEq)]
pub struct UniformLossConfig {
    pub p_set: Vec<f64>,
    /// Neighbors taken per disk.
    pub k: usize,
    /// Seed disks as a fraction of the point count (at least one).
    pub seed_fraction: f64,
}

impl Default for UniformLossConfig {
    fn default() -> Self {
        Self {
            p_set: DEFAULT_P_SET.to_vec(),
            k: 5,
            seed_fraction: 0.05,
        }
    }
}

impl UniformLossConfig {
    pub fn seed_count(&self, n: usize) -> usize {
        ((self.seed_fraction * n as f64).floor() as usize).clamp(1, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_set.is_empty() || self.p_set.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidArgument("every p must lie in (0, 1)".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument("uniform loss needs k >= 2".into()));
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(Error::InvalidArgument("seed fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One seed disk: the seed index, the neighbors inside radius `sqrt(p)`
/// (nearest first, at most k), and the expected spacing for that count.
#[derive(Debug, Clone, PartialEq)]
pub struct Disk {
    pub seed: usize,
    pub neighbors: Vec<usize>,
    pub target: f64,
}

/// Seed disks for one area fraction `p`. Seeds are farthest point samples
/// started at index 0; a disk holding fewer than k points uses the count it
/// has in the expected spacing, and an empty disk is dropped.
pub fn disks(pc: &PointCloud, p: f64, cfg: &UniformLossConfig) -> Result<Vec<Disk>> {
    cfg.validate()?;
    if pc.len() <= cfg.k {
        return Err(Error::InsufficientPoints {
            required: cfg.k + 1,
            available: pc.len(),
        });
    }
    let radius = p.sqrt();
    let seeds = fps(pc, cfg.seed_count(pc.len()), 0)?;
    let index = NeighborIndex::new(pc.points());
    Ok(seeds
        .into_iter()
        .filter_map(|s| {
            let mut inside = index.within(pc.points()[s], radius, Some(s));
            inside.truncate(cfg.k);
            if inside.is_empty() {
                return None;
            }
            let target = (PI * radius * radius / inside.len() as f64).sqrt();
            Some(Disk {
                seed: s,
                neighbors: inside.into_iter().map(|c| c.0).collect(),
                target,
            })
        })
        .collect())
}

fn disk_term(g: &mut Graph, x: NodeId, disks: &[Disk]) -> Result<Option<NodeId>> {
    let mut seeds = Vec::new();
    let mut nbrs = Vec::new();
    let mut targets = Vec::new();
    for d in disks {
        for &j in &d.neighbors {
            seeds.push(d.seed);
            nbrs.push(j);
            targets.push(d.target);
        }
    }
    if nbrs.is_empty() {
        return Ok(None);
    }
    let a = g.gather(x, &seeds, 0)?;
    let b = g.gather(x, &nbrs, 0)?;
    let diff = g.sub(b, a)?;
    let dist = g.norm_last(diff)?;
    let inv: Vec<f64> = targets.iter().map(|t| 1.0 / t).collect();
    let t = g.constant(Tensor::vector(targets));
    let inv = g.constant(Tensor::vector(inv));
    let r = g.sub(dist, t)?;
    let r2 = g.square(r)?;
    let w = g.mul(r2, inv)?;
    Ok(Some(g.sum(w)?))
}

/// `sum_p sum_j sum_k (d_jk - t)^2 / t` with disks chosen on current values.
pub fn uniform_loss(g: &mut Graph, x: NodeId, cfg: &UniformLossConfig) -> Result<NodeId> {
    let pc = g.value(x).to_point_cloud()?;
    let mut total = g.constant(Tensor::scalar(0.0));
    for &p in &cfg.p_set {
        let d = disks(&pc, p, cfg)?;
        if let Some(term) = disk_term(g, x, &d)? {
            total = g.add(total, term)?;
        }
    }
    Ok(total)
}

/// The uniform loss for a single `p`, evaluated without a tape.
pub fn uniformity_value(pc: &PointCloud, p: f64, cfg: &UniformLossConfig) -> Result<f64> {
    let d = disks(pc, p, cfg)?;
    let pts = pc.points();
    Ok(d.iter()
        .map(|disk| {
            disk.neighbors
                .iter()
                .map(|&j| {
                    let r = crate::geometry::dist(pts[j], pts[disk.seed]) - disk.target;
                    r * r / disk.target
                })
                .sum::<f64>()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jittered_grid(side: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1.0 / side as f64;
        let mut pts = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let jx = rng.random_range(-0.05..0.05) * h;
                let jy = rng.random_range(-0.05..0.05) * h;
                pts.push([i as f64 * h + jx, j as f64 * h + jy, 0.0]);
            }
        }
        PointCloud::new(pts).unwrap()
    }

    fn clustered(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.2, 0.2, 0.0], [0.8, 0.7, 0.0], [0.3, 0.9, 0.0], [0.9, 0.1, 0.0]];
        PointCloud::new(
            (0..n)
                .map(|i| {
                    let c = centers[i % 4];
                    [
                        c[0] + rng.random_range(-1e-3..1e-3),
                        c[1] + rng.random_range(-1e-3..1e-3),
                        0.0,
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_spacing_gives_zero() {
        // A seed with k neighbors all at the expected spacing for p.
        let p = 0.01;
        let cfg = UniformLossConfig {
            p_set: vec![p],
            k: 4,
            seed_fraction: 0.2,
        };
        let t = (PI * p / 4.0).sqrt();
        let pc = PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [t, 0.0, 0.0],
            [-t, 0.0, 0.0],
            [0.0, t, 0.0],
            [0.0, -t, 0.0],
        ])
        .unwrap();
        let v = uniformity_value(&pc, p, &cfg).unwrap();
        assert!(v < 1e-24, "{v}");
    }

    #[test]
    fn clustered_is_worse_than_grid() {
        let grid = jittered_grid(20, 1);
        let clus = clustered(400, 2);
        let cfg = UniformLossConfig::default();
        for &p in &DEFAULT_P_SET {
            let a = uniformity_value(&grid, p, &cfg).unwrap();
            let b = uniformity_value(&clus, p, &cfg).unwrap();
            assert!(b > a, "p={p}: clustered {b} vs grid {a}");
        }
    }

    #[test]
    fn residual_grows_with_spread() {
        // (c t - t)^2 / t increases for c > 1.
        let t = 0.05;
        let mut prev = 0.0;
        for c in [1.1, 1.5, 2.0, 3.0] {
            let v = (c * t - t) * (c * t - t) / t;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn tape_matches_plain_evaluation() {
        let pc = jittered_grid(12, 3);
        let cfg = UniformLossConfig::default();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_points(&pc));
        let l = uniform_loss(&mut g, x, &cfg).unwrap();
        let plain: f64 = cfg
            .p_set
            .iter()
            .map(|&p| uniformity_value(&pc, p, &cfg).unwrap())
            .sum();
        assert!((g.scalar(l).unwrap() - plain).abs() < 1e-12);
    }
}
