use super::assignment::{self, CostMatrix};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::geometry::{dist, NeighborIndex, Point3, PointCloud};

fn check_sizes(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![a, 3],
            right: vec![b, 3],
        });
    }
    Ok(())
}

/// Matching from `a` to `b` minimizing the summed Euclidean distance.
pub fn emd_assignment(a: &[Point3], b: &[Point3]) -> Vec<usize> {
    let c = CostMatrix::from_fn(a.len(), |i, j| dist(a[i], b[j]));
    assignment::solve(&c)
}

/// Earth mover's distance: mean matched distance under the optimal bijection.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_sizes("emd", a.len(), b.len())?;
    let m = emd_assignment(a.points(), b.points());
    Ok(m.iter()
        .enumerate()
        .map(|(i, &j)| dist(a.points()[i], b.points()[j]))
        .sum::<f64>()
        / a.len() as f64)
}

/// EMD on the tape. The assignment is solved on the current values and held
/// fixed, so the gradient for each point is the unit vector away from its match.
pub fn emd_loss(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let (na, nb) = (g.shape(a)[0], g.shape(b)[0]);
    check_sizes("emd", na, nb)?;
    let pa = g.value(a).to_point_cloud()?;
    let pb = g.value(b).to_point_cloud()?;
    let m = emd_assignment(pa.points(), pb.points());
    let matched = g.gather(b, &m, 0)?;
    let d = g.sub(a, matched)?;
    let n = g.norm_last(d)?;
    g.mean(n)
}

/// Symmetric Chamfer distance on the tape, usable as a reconstruction loss:
/// half the sum of the two directed mean nearest-neighbor distances.
pub fn chamfer_loss(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let pa = g.value(a).to_point_cloud()?;
    let pb = g.value(b).to_point_cloud()?;
    let directed = |g: &mut Graph, x: NodeId, px: &PointCloud, y: NodeId, py: &PointCloud| {
        let index = NeighborIndex::new(py.points());
        let nn: Vec<usize> = px.iter().map(|&p| index.nearest(p, 1, None)[0].0).collect();
        let matched = g.gather(y, &nn, 0)?;
        let d = g.sub(x, matched)?;
        let n = g.norm_last(d)?;
        g.mean(n)
    };
    let ab = directed(g, a, &pa, b, &pb)?;
    let ba = directed(g, b, &pb, a, &pa)?;
    let s = g.add(ab, ba)?;
    g.scale(s, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn pc(p: &[Point3]) -> PointCloud {
        PointCloud::new(p.to_vec()).unwrap()
    }

    #[test]
    fn hand_examples() {
        let a = pc(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = pc(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert!((emd(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(emd(&a, &a).unwrap(), 0.0);
        let swapped = pc(&[[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(emd(&a, &swapped).unwrap(), 0.0);
        assert!(emd(&a, &pc(&[[0.0; 3]])).is_err());
    }

    #[test]
    fn tape_value_matches_plain_value() {
        let a = pc(&[[0.0, 0.1, 0.0], [2.0, 0.0, 0.3], [1.0, 1.0, 1.0]]);
        let b = pc(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let mut g = Graph::new();
        let x = g.variable(Tensor::from_points(&a));
        let y = g.constant(Tensor::from_points(&b));
        let l = emd_loss(&mut g, x, y).unwrap();
        assert!((g.scalar(l).unwrap() - emd(&a, &b).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn chamfer_single_pair() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_points(&pc(&[[0.0; 3]])));
        let y = g.constant(Tensor::from_points(&pc(&[[3.0, 4.0, 0.0]])));
        let l = chamfer_loss(&mut g, x, y).unwrap();
        assert_eq!(g.scalar(l).unwrap(), 5.0);
    }
}
