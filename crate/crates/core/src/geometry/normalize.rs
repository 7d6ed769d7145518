use super::{sub, Point3, PointCloud};
use crate::error::Result;

/// Maps a cloud into the unit sphere: `p -> (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub center: Point3,
    pub scale: f64,
    /// Set when every point coincides and `scale` was forced to 1.
    pub degenerate: bool,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
            degenerate: false,
        }
    }

    pub fn apply_point(&self, p: Point3) -> Point3 {
        let d = sub(p, self.center);
        [d[0] / self.scale, d[1] / self.scale, d[2] / self.scale]
    }

    pub fn invert_point(&self, p: Point3) -> Point3 {
        [
            p[0] * self.scale + self.center[0],
            p[1] * self.scale + self.center[1],
            p[2] * self.scale + self.center[2],
        ]
    }

    pub fn apply(&self, pc: &PointCloud) -> Result<PointCloud> {
        pc.map_points(|p| self.apply_point(p))
    }

    pub fn invert(&self, pc: &PointCloud) -> Result<PointCloud> {
        pc.map_points(|p| self.invert_point(p))
    }
}

/// Centers the cloud on its centroid and divides by the largest point norm.
pub fn normalize_unit_sphere(pc: &PointCloud) -> Result<(PointCloud, NormalizationTransform)> {
    let center = pc.centroid();
    let radius = pc.radius_about(center);
    let (scale, degenerate) = if radius > 0.0 {
        (radius, false)
    } else {
        (1.0, true)
    };
    let t = NormalizationTransform {
        center,
        scale,
        degenerate,
    };
    Ok((t.apply(pc)?, t))
}
