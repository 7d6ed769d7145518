//! Exact k-nearest-neighbor search.
//!
//! Small clouds are searched by brute force. Larger ones are bucketed into a
//! uniform grid and searched ring by ring; a ring is only accepted once every
//! point that could still beat the current k-th candidate has been visited,
//! so the result is identical to the brute-force answer, ties included.

use rayon::prelude::*;

use super::{dist2, Point3, PointCloud};
use crate::error::{Error, Result};

/// Below this many points the index skips the grid entirely.
pub const BRUTE_FORCE_LIMIT: usize = 512;

/// Approximate number of points per occupied grid cell.
const POINTS_PER_CELL: f64 = 2.0;

#[derive(Debug, Clone)]
struct Grid {
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: points of cell `c` are `order[starts[c]..starts[c + 1]]`.
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl Grid {
    fn build(points: &[Point3]) -> Option<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        if !(extent > 0.0) {
            return None;
        }
        let per_axis = (points.len() as f64 / POINTS_PER_CELL).cbrt().ceil().max(1.0);
        let cell = extent / per_axis;
        let dims = [0, 1, 2].map(|d| (((hi[d] - lo[d]) / cell).floor() as usize + 1).max(1));
        let n_cells = dims[0] * dims[1] * dims[2];

        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            starts: vec![0; n_cells + 1],
            order: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(*p))).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 0..n_cells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.order[fill[c]] = i;
            fill[c] += 1;
        }
        Some(grid)
    }

    fn cell_of(&self, p: Point3) -> [usize; 3] {
        [0, 1, 2].map(|d| {
            let t = ((p[d] - self.origin[d]) / self.cell).floor();
            if t <= 0.0 {
                0
            } else {
                (t as usize).min(self.dims[d] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn max_ring(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// Calls `f` for every point index in cells at Chebyshev distance exactly
    /// `ring` from `center`.
    fn visit_ring(&self, center: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as isize;
        let range = |d: usize| {
            let c = center[d] as isize;
            let lo = (c - r).max(0);
            let hi = (c + r).min(self.dims[d] as isize - 1);
            lo..=hi
        };
        for z in range(2) {
            let dz = (z - center[2] as isize).abs();
            for y in range(1) {
                let dy = (y - center[1] as isize).abs();
                for x in range(0) {
                    let dx = (x - center[0] as isize).abs();
                    if dx.max(dy).max(dz) != r {
                        continue;
                    }
                    let c = self.flat([x as usize, y as usize, z as usize]);
                    for &i in &self.order[self.starts[c]..self.starts[c + 1]] {
                        f(i);
                    }
                }
            }
        }
    }
}

/// Neighbor search structure over a borrowed point slice.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    points: &'a [Point3],
    grid: Option<Grid>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let grid = if points.len() < BRUTE_FORCE_LIMIT {
            None
        } else {
            Grid::build(points)
        };
        Self { points, grid }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` points closest to `query` as `(index, squared distance)`,
    /// ordered by distance then index. `exclude` removes one index from
    /// consideration (the query point itself for self-queries). Returns
    /// fewer than `k` entries only if the index holds too few points.
    pub fn nearest(&self, query: Point3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut cands: Vec<(usize, f64)> = match &self.grid {
            None => self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != exclude)
                .map(|(i, p)| (i, dist2(query, *p)))
                .collect(),
            Some(grid) => {
                let center = grid.cell_of(query);
                let mut found = Vec::new();
                let mut ring = 0;
                loop {
                    grid.visit_ring(center, ring, |i| {
                        if Some(i) != exclude {
                            found.push((i, dist2(query, self.points[i])));
                        }
                    });
                    if ring >= grid.max_ring() {
                        break;
                    }
                    // Every unvisited point is at least `ring * cell` away.
                    let bound = ring as f64 * grid.cell;
                    let bound2 = bound * bound;
                    if found.iter().filter(|c| c.1 < bound2).count() >= k {
                        break;
                    }
                    ring += 1;
                }
                found
            }
        };
        sort_candidates(&mut cands);
        cands.truncate(k);
        cands
    }

    /// All points within `radius` of `query` (inclusive), ordered by distance
    /// then index.
    pub fn within(&self, query: Point3, radius: f64, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let r2 = radius * radius;
        let mut out: Vec<(usize, f64)> = match &self.grid {
            None => self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != exclude)
                .map(|(i, p)| (i, dist2(query, *p)))
                .filter(|c| c.1 <= r2)
                .collect(),
            Some(grid) => {
                let center = grid.cell_of(query);
                let rings = ((radius / grid.cell).ceil() as usize + 1).min(grid.max_ring());
                let mut found = Vec::new();
                for ring in 0..=rings {
                    grid.visit_ring(center, ring, |i| {
                        if Some(i) != exclude {
                            let d2 = dist2(query, self.points[i]);
                            if d2 <= r2 {
                                found.push((i, d2));
                            }
                        }
                    });
                }
                found
            }
        };
        sort_candidates(&mut out);
        out
    }
}

fn sort_candidates(c: &mut [(usize, f64)]) {
    c.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Indices of the `k` nearest neighbors of point `query_index`, excluding
/// itself, ordered by distance with ties broken by lower index.
pub fn knn(pc: &PointCloud, k: usize, query_index: usize) -> Result<Vec<usize>> {
    check_k(pc, k)?;
    let p = *pc.points().get(query_index).ok_or(Error::IndexOutOfRange {
        index: query_index,
        len: pc.len(),
    })?;
    let index = NeighborIndex::new(pc.points());
    Ok(index
        .nearest(p, k, Some(query_index))
        .into_iter()
        .map(|c| c.0)
        .collect())
}

/// kNN for every point; row `i` of the result holds the neighbors of point `i`.
pub fn knn_all(pc: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    check_k(pc, k)?;
    let index = NeighborIndex::new(pc.points());
    Ok(pc
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| index.nearest(*p, k, Some(i)).into_iter().map(|c| c.0).collect())
        .collect())
}

fn check_k(pc: &PointCloud, k: usize) -> Result<()> {
    if k >= pc.len() {
        return Err(Error::InsufficientPoints {
            required: k,
            available: pc.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3], q: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(usize, f64)> = (0..points.len())
            .filter(|&i| i != q)
            .map(|i| (i, dist2(points[q], points[i])))
            .collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        all.into_iter().take(k).map(|c| c.0).collect()
    }

    #[test]
    fn collinear_example() {
        let pc = PointCloud::new((0..4).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
        assert_eq!(knn(&pc, 2, 0).unwrap(), vec![1, 2]);
    }

    #[test]
    fn two_points_k1() {
        let pc = PointCloud::new(vec![[0.0; 3], [1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(knn(&pc, 1, 0).unwrap(), vec![1]);
        assert_eq!(knn(&pc, 1, 1).unwrap(), vec![0]);
    }

    #[test]
    fn insufficient_points() {
        let pc = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            knn(&pc, 2, 0),
            Err(Error::InsufficientPoints { .. })
        ));
        assert!(knn(&pc, 1, 5).is_err());
    }

    #[test]
    fn ties_break_by_lower_index() {
        // Four points at unit distance from the origin.
        let pc = PointCloud::new(vec![
            [0.0; 3],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(knn(&pc, 2, 0).unwrap(), vec![1, 2]);
    }

    #[test]
    fn grid_matches_brute_force_on_large_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[600usize, 1500] {
            // A surface-like cloud with duplicates to exercise ties.
            let mut pts: Vec<Point3> = (0..n)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let r = (1.0 - z * z).sqrt();
                    [r * t.cos(), r * t.sin(), z]
                })
                .collect();
            for i in 0..20 {
                pts[n - 1 - i] = pts[i];
            }
            let pc = PointCloud::new(pts.clone()).unwrap();
            let all = knn_all(&pc, 8).unwrap();
            for q in (0..n).step_by(7) {
                assert_eq!(all[q], brute(&pts, q, 8), "query {q}");
            }
            // External queries, including points outside the bounding box.
            let index = NeighborIndex::new(&pts);
            for _ in 0..50 {
                let q = [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ];
                let got = index.nearest(q, 3, None);
                let mut want: Vec<(usize, f64)> =
                    pts.iter().enumerate().map(|(i, p)| (i, dist2(q, *p))).collect();
                sort_candidates(&mut want);
                want.truncate(3);
                assert_eq!(got, want);
                let r = 0.3;
                let got = index.within(q, r, None);
                let want: Vec<(usize, f64)> = {
                    let mut w: Vec<(usize, f64)> = pts
                        .iter()
                        .enumerate()
                        .map(|(i, p)| (i, dist2(q, *p)))
                        .filter(|c| c.1 <= r * r)
                        .collect();
                    sort_candidates(&mut w);
                    w
                };
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn identical_points_fall_back_to_brute_force() {
        let pc = PointCloud::new(vec![[0.5; 3]; 600]).unwrap();
        assert_eq!(knn(&pc, 3, 10).unwrap(), vec![0, 1, 2]);
    }
}
