//! Random rigid-plus-scale augmentation with per-point jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    None,
    /// Rotation about the z axis by a uniform angle.
    Axis,
    /// Uniformly distributed over SO(3).
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation: RotationMode,
    /// Per-coordinate Gaussian jitter, clipped at three sigma.
    pub jitter_sigma: f64,
    /// Global shift drawn uniformly from `[-shift_range, shift_range]^3`.
    pub shift_range: f64,
    /// Global isotropic scale drawn uniformly from this interval.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation: RotationMode::Full,
            jitter_sigma: 0.005,
            shift_range: 0.1,
            scale_range: (0.8, 1.2),
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Parameters that leave every cloud untouched.
    pub fn identity() -> Self {
        Self {
            rotation: RotationMode::None,
            jitter_sigma: 0.0,
            shift_range: 0.0,
            scale_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.jitter_sigma >= 0.0) || !self.jitter_sigma.is_finite() {
            return Err(Error::InvalidArgument("jitter sigma must be >= 0".into()));
        }
        if !(self.shift_range >= 0.0) || !self.shift_range.is_finite() {
            return Err(Error::InvalidArgument("shift range must be >= 0".into()));
        }
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale range must be positive and ordered, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// The deterministic part of an augmentation: `p -> scale * (R p + shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentTransform {
    pub rotation: [[f64; 3]; 3],
    pub shift: Point3,
    pub scale: f64,
}

impl AugmentTransform {
    pub fn rotate(&self, p: Point3) -> Point3 {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    }

    fn finish(&self, p: Point3) -> Point3 {
        [
            (p[0] + self.shift[0]) * self.scale,
            (p[1] + self.shift[1]) * self.scale,
            (p[2] + self.shift[2]) * self.scale,
        ]
    }

    pub fn apply_point(&self, p: Point3) -> Point3 {
        self.finish(self.rotate(p))
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn sample_rotation(mode: RotationMode, rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    match mode {
        RotationMode::None => IDENTITY,
        RotationMode::Axis => {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = t.sin_cos();
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        }
        RotationMode::Full => {
            // Uniform unit quaternion (Shoemake).
            let u1: f64 = rng.random();
            let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let u3: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let a = (1.0 - u1).sqrt();
            let b = u1.sqrt();
            let (w, x, y, z) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
            [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ]
        }
    }
}

fn sample_transform(params: &AugmentParams, rng: &mut ChaCha8Rng) -> AugmentTransform {
    let rotation = sample_rotation(params.rotation, rng);
    let s = params.shift_range;
    let shift = if s > 0.0 {
        [0, 1, 2].map(|_| rng.random_range(-s..=s))
    } else {
        [0.0; 3]
    };
    let (lo, hi) = params.scale_range;
    let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    AugmentTransform {
        rotation,
        shift,
        scale,
    }
}

fn jittered(
    pc: &PointCloud,
    t: &AugmentTransform,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is positive"));
    let clip = 3.0 * sigma;
    let pts = pc
        .iter()
        .map(|p| {
            let mut q = t.rotate(*p);
            if let Some(n) = &normal {
                for c in q.iter_mut() {
                    *c += n.sample(rng).clamp(-clip, clip);
                }
            }
            t.finish(q)
        })
        .collect();
    PointCloud::new(pts)
}

/// Applies rotation, jitter, shift and scale, in that order.
pub fn augment(pc: &PointCloud, params: &AugmentParams) -> Result<PointCloud> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let t = sample_transform(params, &mut rng);
    jittered(pc, &t, params.jitter_sigma, &mut rng)
}

/// Augments a low resolution input and moves its target with the same
/// rotation, shift and scale (no jitter on the target) so the pair stays
/// aligned. The input result equals `augment(lr, params)`.
pub fn augment_pair(
    lr: &PointCloud,
    hr: &PointCloud,
    params: &AugmentParams,
) -> Result<(PointCloud, PointCloud, AugmentTransform)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let t = sample_transform(params, &mut rng);
    let lr_out = jittered(lr, &t, params.jitter_sigma, &mut rng)?;
    let hr_out = hr.map_points(|p| t.apply_point(p))?;
    Ok((lr_out, hr_out, t))
}
