//! Exact point-to-triangle and point-to-mesh distance.

use rayon::prelude::*;

use super::TriangleMesh;
use crate::geometry::{add, dist2, dot, scale, sub, Point3};

/// Closest point to `p` on triangle `(a, b, c)`, by Voronoi region of the
/// triangle (vertex, edge or interior).
pub fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

fn triangle_dist2(p: Point3, t: &[Point3; 3]) -> f64 {
    dist2(p, closest_point_on_triangle(p, t[0], t[1], t[2]))
}

/// Minimum distance from `p` to any triangle of `mesh`, by exhaustive scan.
pub fn point_to_mesh_distance(p: Point3, mesh: &TriangleMesh) -> f64 {
    (0..mesh.faces().len())
        .map(|f| triangle_dist2(p, &mesh.triangle(f)))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn grow(&mut self, p: Point3) {
        for d in 0..3 {
            self.lo[d] = self.lo[d].min(p[d]);
            self.hi[d] = self.hi[d].max(p[d]);
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn dist2(&self, p: Point3) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            let e = (self.lo[d] - p[d]).max(0.0).max(p[d] - self.hi[d]);
            s += e * e;
        }
        s
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, faces: Vec<usize> },
    Inner { bounds: Aabb, children: Box<[Node; 2]> },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Point-to-surface distance queries accelerated by a bounding volume
/// hierarchy over the faces. Results equal [`point_to_mesh_distance`].
#[derive(Debug, Clone)]
pub struct MeshDistance {
    triangles: Vec<[Point3; 3]>,
    root: Node,
}

impl MeshDistance {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[Point3; 3]> =
            (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Point3> = triangles
            .iter()
            .map(|t| scale(add(add(t[0], t[1]), t[2]), 1.0 / 3.0))
            .collect();
        let faces: Vec<usize> = (0..triangles.len()).collect();
        let root = Self::build(&triangles, &centroids, faces);
        Self { triangles, root }
    }

    fn build(tris: &[[Point3; 3]], centroids: &[Point3], mut faces: Vec<usize>) -> Node {
        let mut bounds = Aabb::empty();
        for &f in &faces {
            for v in tris[f] {
                bounds.grow(v);
            }
        }
        if faces.len() <= LEAF_SIZE {
            return Node::Leaf { bounds, faces };
        }
        let mut cb = Aabb::empty();
        for &f in &faces {
            cb.grow(centroids[f]);
        }
        let axis = (0..3)
            .max_by(|&a, &b| (cb.hi[a] - cb.lo[a]).total_cmp(&(cb.hi[b] - cb.lo[b])))
            .unwrap_or(0);
        faces.sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let right = faces.split_off(faces.len() / 2);
        Node::Inner {
            bounds,
            children: Box::new([
                Self::build(tris, centroids, faces),
                Self::build(tris, centroids, right),
            ]),
        }
    }

    pub fn distance(&self, p: Point3) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if node.bounds().dist2(p) > best {
                continue;
            }
            match node {
                Node::Leaf { faces, .. } => {
                    for &f in faces {
                        best = best.min(triangle_dist2(p, &self.triangles[f]));
                    }
                }
                Node::Inner { children, .. } => {
                    let [l, r] = &**children;
                    let (near, far) = if l.bounds().dist2(p) <= r.bounds().dist2(p) {
                        (l, r)
                    } else {
                        (r, l)
                    };
                    stack.push(far);
                    stack.push(near);
                }
            }
        }
        best.sqrt()
    }

    pub fn distances(&self, points: &[Point3]) -> Vec<f64> {
        points.par_iter().map(|p| self.distance(*p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{fixtures, parse_off, parse_ply, sample_surface};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn basic_cases() {
        let m = unit_triangle();
        assert_eq!(point_to_mesh_distance([0.0; 3], &m), 0.0);
        assert_eq!(point_to_mesh_distance([1.0, 0.0, 0.0], &m), 0.0);
        assert!((point_to_mesh_distance([0.0, 0.0, 1.0], &m) - 1.0).abs() < 1e-15);
        assert!((point_to_mesh_distance([0.25, 0.25, -2.0], &m) - 2.0).abs() < 1e-15);
        // Edge region: closest to the hypotenuse midpoint.
        let d = point_to_mesh_distance([1.0, 1.0, 0.0], &m);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        // Vertex region.
        let d = point_to_mesh_distance([-1.0, -1.0, 0.0], &m);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        // Edge region along x axis.
        let d = point_to_mesh_distance([0.5, -3.0, 4.0], &m);
        assert!((d - 5.0).abs() < 1e-15);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = parse_ply(fixtures::CUBE_PLY.as_bytes()).unwrap();
        let bvh = MeshDistance::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let p = [0, 1, 2].map(|_| rng.random_range(-1.0..2.0));
            assert_eq!(bvh.distance(p), point_to_mesh_distance(p, &m));
        }
    }

    #[test]
    fn dense_sampling_oracle() {
        // Exact distance never exceeds the distance to the nearest surface
        // sample, and exceeds it by at most the sampling resolution.
        let m = parse_off(fixtures::TETRA_OFF.as_bytes()).unwrap();
        let samples = sample_surface(&m, 10_000, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let p = [0, 1, 2].map(|_| rng.random_range(-0.5..1.5));
            let exact = point_to_mesh_distance(p, &m);
            let approx = samples
                .iter()
                .map(|s| dist2(p, s.point))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!(exact <= approx + 1e-12);
            assert!(approx - exact < 0.05, "exact {exact} sampled {approx}");
        }
    }

    #[test]
    fn rigid_transform_invariance() {
        let m = parse_off(fixtures::TETRA_OFF.as_bytes()).unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let rot = |p: Point3| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.0, p[2] + 0.5];
        let moved = m.map_vertices(rot).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = [0, 1, 2].map(|_| rng.random_range(-2.0..2.0));
            let a = point_to_mesh_distance(p, &m);
            let b = point_to_mesh_distance(rot(p), &moved);
            assert!((a - b).abs() < 1e-9);
        }
    }
}
