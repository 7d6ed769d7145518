//! Point containers and the geometric substrate used to build training pairs.

mod augment;
mod knn;
mod normalize;
mod sampling;
pub mod xyz;

pub use augment::{augment, augment_pair, AugmentParams, AugmentTransform, RotationMode};
pub use knn::{knn, knn_all, NeighborIndex, BRUTE_FORCE_LIMIT};
pub use normalize::{normalize_unit_sphere, NormalizationTransform};
pub use sampling::{
    build_lr_hr_pairs, fps, random_subsample, sample_unit_sphere, DownsampleKernel, TrainingPair, MIN_LR_POINTS,
};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// An ordered, non-empty set of points with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFiniteCoordinate { index });
        }
        Ok(Self { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(data: &[f64]) -> Result<Self> {
        if !data.len().is_multiple_of(3) {
            return Err(Error::InvalidArgument(format!(
                "flat buffer length {} is not a multiple of 3",
                data.len()
            )));
        }
        Self::new(data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// The sub-cloud at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self.points.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.points.len(),
            })?;
            out.push(*p);
        }
        Self::new(out)
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    /// Largest distance from `center` to any point.
    pub fn radius_about(&self, center: Point3) -> f64 {
        self.points
            .iter()
            .map(|p| dist(*p, center))
            .fold(0.0, f64::max)
    }

    /// Every point repeated `times` times consecutively.
    pub fn repeat_each(&self, times: usize) -> Self {
        let points = self
            .points
            .iter()
            .flat_map(|p| std::iter::repeat_n(*p, times))
            .collect();
        Self { points }
    }

    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        Self::new(self.points.iter().map(|p| f(*p)).collect())
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Squared Euclidean distance. Every exact neighbor query in the crate goes
/// through this one expression so accelerated and brute-force paths agree
/// bit for bit.
#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}
