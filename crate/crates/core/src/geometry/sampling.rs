//! Downsampling kernels and training pair construction.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{dist2, PointCloud};
use crate::error::{Error, Result};

/// Smallest low-resolution cloud the pair builder accepts.
pub const MIN_LR_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DownsampleKernel {
    /// Uniform random selection without replacement.
    Random,
    /// Farthest point sampling from a random start.
    Fps,
}

impl std::str::FromStr for DownsampleKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "fps" => Ok(Self::Fps),
            _ => Err(Error::InvalidArgument(format!(
                "unknown kernel `{s}` (expected random or fps)"
            ))),
        }
    }
}

impl std::fmt::Display for DownsampleKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Fps => "fps",
        })
    }
}

/// `n` points drawn uniformly from the unit sphere surface.
pub fn sample_unit_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let v: [f64; 3] = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-12 {
            points.push([v[0] / r, v[1] / r, v[2] / r]);
        }
    }
    PointCloud::new(points)
}

/// Greedy farthest point sampling, returned in selection order.
///
/// The first pick is `seed_index`; every later pick maximizes the distance to
/// the already selected set, ties going to the lower index.
pub fn fps(pc: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = pc.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "fps needs 1 <= m <= {n}, got m = {m}"
        )));
    }
    if seed_index >= n {
        return Err(Error::IndexOutOfRange {
            index: seed_index,
            len: n,
        });
    }
    let pts = pc.points();
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut selected = Vec::with_capacity(m);
    let mut current = seed_index;
    for _ in 0..m {
        selected.push(current);
        min_d2[current] = f64::NEG_INFINITY;
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, (p, md)) in pts.iter().zip(min_d2.iter_mut()).enumerate() {
            if *md == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(*p, c);
            if d < *md {
                *md = d;
            }
            if *md > best_d {
                best_d = *md;
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// `m` distinct indices drawn uniformly without replacement, sorted ascending.
pub fn random_subsample(pc: &PointCloud, m: usize, seed: u64) -> Result<Vec<usize>> {
    let n = pc.len();
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} of {n} points without replacement"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// A synthesized low/high resolution pair. The high resolution side is
/// always the full cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub lr: PointCloud,
    pub hr: PointCloud,
    pub lr_indices: Vec<usize>,
}

/// Downsamples `pc` by `ratio` into `count` training pairs.
///
/// Each pair gets its own sub-seed drawn from `seed`: the random kernel uses
/// it for selection, the FPS kernel for its start index, so pairs differ
/// under both kernels.
pub fn build_lr_hr_pairs(
    pc: &PointCloud,
    count: usize,
    kernel: DownsampleKernel,
    ratio: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if ratio < 2 || !ratio.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "ratio must be a power of two >= 2, got {ratio}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("pair count must be >= 1".into()));
    }
    let m = pc.len() / ratio;
    if m < MIN_LR_POINTS {
        return Err(Error::CloudTooSmall {
            points: pc.len(),
            ratio,
            minimum: MIN_LR_POINTS,
        });
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let sub_seed = master.next_u64();
            let lr_indices = match kernel {
                DownsampleKernel::Random => random_subsample(pc, m, sub_seed)?,
                DownsampleKernel::Fps => {
                    let start = ChaCha8Rng::seed_from_u64(sub_seed).random_range(0..pc.len());
                    fps(pc, m, start)?
                }
            };
            Ok(TrainingPair {
                lr: pc.select(&lr_indices)?,
                hr: pc.clone(),
                lr_indices,
            })
        })
        .collect()
}
