//! Area-weighted surface sampling, with an optional blue-noise mode based on
//! weighted sample elimination.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::{NeighborIndex, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Uniform,
    /// Oversample by [`POISSON_OVERSAMPLE`] then eliminate down to `n`.
    Poisson,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "poisson" => Ok(Self::Poisson),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sampling mode `{s}` (expected uniform or poisson)"
            ))),
        }
    }
}

pub const POISSON_OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Point3,
    pub face_index: usize,
    /// Weights of the face's three vertices; non-negative, summing to one.
    pub barycentric: [f64; 3],
}

/// `n` samples with faces chosen proportionally to area and positions
/// uniform within each face.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..total);
            let face = cumulative
                .partition_point(|&c| c <= t)
                .min(cumulative.len() - 1);
            let s = rng.random::<f64>().sqrt();
            let r: f64 = rng.random();
            let barycentric = [1.0 - s, s * (1.0 - r), s * r];
            let [a, b, c] = mesh.triangle(face);
            let point = [0, 1, 2].map(|d| {
                barycentric[0] * a[d] + barycentric[1] * b[d] + barycentric[2] * c[d]
            });
            SurfaceSample {
                point,
                face_index: face,
                barycentric,
            }
        })
        .collect();
    Ok(samples)
}

pub fn sample_mesh_uniform(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    sample_mesh(mesh, n, SamplingMode::Uniform, seed)
}

pub fn sample_mesh(
    mesh: &TriangleMesh,
    n: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    match mode {
        SamplingMode::Uniform => {
            PointCloud::new(sample_surface(mesh, n, seed)?.into_iter().map(|s| s.point).collect())
        }
        SamplingMode::Poisson => {
            let dense: Vec<Point3> = sample_surface(mesh, n * POISSON_OVERSAMPLE, seed)?
                .into_iter()
                .map(|s| s.point)
                .collect();
            let keep = eliminate(&dense, n, mesh.total_area());
            PointCloud::new(keep.into_iter().map(|i| dense[i]).collect())
        }
    }
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    weight: f64,
    index: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Max weight first, lower index first among equal weights.
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted sample elimination on a surface of the given area. Returns the
/// surviving indices in ascending order.
fn eliminate(points: &[Point3], target: usize, area: f64) -> Vec<usize> {
    const ALPHA: i32 = 8;
    const BETA: f64 = 0.65;
    const GAMMA: f64 = 1.5;
    let m = points.len();
    if target >= m {
        return (0..m).collect();
    }
    let r_max = (area / (2.0 * 3f64.sqrt() * target as f64)).sqrt();
    let r_min = r_max * (1.0 - (target as f64 / m as f64).powf(GAMMA)) * BETA;
    let reach = 2.0 * r_max;
    let weight_of = |d2: f64| {
        let d = d2.sqrt().max(r_min);
        (1.0 - d / reach).powi(ALPHA)
    };

    let index = NeighborIndex::new(points);
    let neighbors: Vec<Vec<(usize, f64)>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| index.within(*p, reach, Some(i)))
        .collect();
    let mut weights: Vec<f64> = neighbors
        .iter()
        .map(|ns| ns.iter().map(|&(_, d2)| weight_of(d2)).sum())
        .collect();
    let mut heap: BinaryHeap<HeapEntry> = weights
        .iter()
        .enumerate()
        .map(|(index, &weight)| HeapEntry { weight, index })
        .collect();
    let mut removed = vec![false; m];
    let mut live = m;
    while live > target {
        let Some(top) = heap.pop() else { break };
        if removed[top.index] || top.weight.to_bits() != weights[top.index].to_bits() {
            continue;
        }
        removed[top.index] = true;
        live -= 1;
        for &(j, d2) in &neighbors[top.index] {
            if !removed[j] {
                weights[j] -= weight_of(d2);
                heap.push(HeapEntry {
                    weight: weights[j],
                    index: j,
                });
            }
        }
    }
    (0..m).filter(|&i| !removed[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;
    use crate::mesh::{fixtures, parse_off, point_to_mesh_distance};

    #[test]
    fn right_triangle_centroid() {
        let m = TriangleMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pc = sample_mesh_uniform(&m, 10_000, 1).unwrap();
        let c = pc.centroid();
        assert!((c[0] - 1.0 / 3.0).abs() < 0.01);
        assert!((c[1] - 1.0 / 3.0).abs() < 0.01);
        assert_eq!(c[2], 0.0);
    }

    #[test]
    fn area_weighting() {
        // Face 0 has area 1, face 1 has area 3.
        let m = TriangleMesh::new(
            vec![
                [0.0; 3],
                [2.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [10.0, 0.0, 0.0],
                [16.0, 0.0, 0.0],
                [10.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let s = sample_surface(&m, 10_000, 2).unwrap();
        let hits = s.iter().filter(|s| s.face_index == 1).count() as f64 / 1e4;
        assert!((0.73..=0.77).contains(&hits), "fraction {hits}");
    }

    #[test]
    fn samples_lie_on_surface_and_reconstruct() {
        let m = parse_off(fixtures::TETRA_OFF.as_bytes()).unwrap();
        for s in sample_surface(&m, 500, 3).unwrap() {
            let b = s.barycentric;
            assert!(b.iter().all(|&w| w >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let [x, y, z] = m.triangle(s.face_index);
            let p = [0, 1, 2].map(|d| b[0] * x[d] + b[1] * y[d] + b[2] * z[d]);
            assert!(dist(p, s.point) < 1e-9);
            assert!(point_to_mesh_distance(s.point, &m) < 1e-9);
        }
        let one = sample_mesh_uniform(&m, 1, 9).unwrap();
        assert!(point_to_mesh_distance(one.points()[0], &m) < 1e-9);
    }

    #[test]
    fn poisson_mode_spreads_points() {
        let m = parse_off(fixtures::TETRA_OFF.as_bytes()).unwrap();
        let n = 400;
        let uni = sample_mesh(&m, n, SamplingMode::Uniform, 5).unwrap();
        let poi = sample_mesh(&m, n, SamplingMode::Poisson, 5).unwrap();
        assert_eq!(poi.len(), n);
        for p in poi.iter() {
            assert!(point_to_mesh_distance(*p, &m) < 1e-9);
        }
        let min_spacing = |pc: &PointCloud| {
            let idx = NeighborIndex::new(pc.points());
            pc.iter()
                .enumerate()
                .map(|(i, p)| idx.nearest(*p, 1, Some(i))[0].1.sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        assert!(min_spacing(&poi) > 2.0 * min_spacing(&uni));
        assert_eq!(poi, sample_mesh(&m, n, SamplingMode::Poisson, 5).unwrap());
    }

    #[test]
    fn rejects_zero_count() {
        let m = parse_off(fixtures::TETRA_OFF.as_bytes()).unwrap();
        assert!(sample_mesh_uniform(&m, 0, 0).is_err());
    }
}
