use pcup_core::autodiff::{Graph, Tensor};
use pcup_core::geometry::xyz::{parse_xyz, to_xyz_string};
use pcup_core::geometry::{
    augment, dist, fps, knn_all, normalize_unit_sphere, AugmentParams, PointCloud, RotationMode,
};
use pcup_core::losses::{emd, repulsion_loss, RepulsionConfig};
use pcup_core::metrics::{chamfer, hausdorff};
use proptest::prelude::*;

fn cloud(min: usize, max: usize, extent: f64) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(prop::array::uniform3(-extent..extent), min..=max)
        .prop_map(|pts| PointCloud::new(pts).unwrap())
}

fn pair(min: usize, max: usize) -> impl Strategy<Value = (PointCloud, PointCloud)> {
    (min..=max).prop_flat_map(|n| (cloud(n, n, 1.0), cloud(n, n, 1.0)))
}

fn repulsion(pc: &PointCloud) -> f64 {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_points(pc));
    let l = repulsion_loss(&mut g, x, RepulsionConfig::default()).unwrap();
    g.scalar(l).unwrap()
}

fn rigid(seed: u64) -> AugmentParams {
    AugmentParams {
        rotation: RotationMode::Full,
        jitter_sigma: 0.0,
        shift_range: 0.5,
        scale_range: (1.0, 1.0),
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_and_hausdorff_are_symmetric(a in cloud(1, 60, 1.0), b in cloud(1, 60, 1.0)) {
        prop_assert_eq!(chamfer(&a, &b), chamfer(&b, &a));
        prop_assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
        prop_assert!(chamfer(&a, &b) <= hausdorff(&a, &b) + 1e-15);
        prop_assert_eq!(chamfer(&a, &a), 0.0);
    }

    #[test]
    fn emd_is_symmetric_and_bounded((a, b) in pair(1, 40)) {
        let ab = emd(&a, &b).unwrap();
        let ba = emd(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0), "{} vs {}", ab, ba);
        // The identity matching is feasible, and every point must travel at
        // least to its nearest neighbor.
        let identity = a.iter().zip(b.iter()).map(|(p, q)| dist(*p, *q)).sum::<f64>() / a.len() as f64;
        prop_assert!(ab <= identity + 1e-12);
        let nearest = pcup_core::metrics::nearest_distances(&a, &b).iter().sum::<f64>() / a.len() as f64;
        prop_assert!(ab + 1e-12 >= nearest);
    }

    #[test]
    fn emd_of_a_permutation_is_zero(a in cloud(1, 40, 1.0), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..a.len()).collect();
        let mut state = seed;
        for i in (1..idx.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(emd(&a, &a.select(&idx).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn repulsion_is_rigid_invariant(a in cloud(8, 60, 0.1), seed in any::<u64>()) {
        let moved = augment(&a, &rigid(seed)).unwrap();
        let (l0, l1) = (repulsion(&a), repulsion(&moved));
        prop_assert!((l0 - l1).abs() <= 1e-12, "{} vs {}", l0, l1);
    }

    #[test]
    fn normalization_round_trips(a in cloud(1, 80, 50.0)) {
        let (unit, t) = normalize_unit_sphere(&a).unwrap();
        let r = unit.radius_about([0.0; 3]);
        prop_assert!(t.degenerate || (r - 1.0).abs() < 1e-12);
        let back = t.invert(&unit).unwrap();
        for (p, q) in a.iter().zip(back.iter()) {
            prop_assert!(dist(*p, *q) <= 1e-12 * t.scale.max(1.0));
        }
    }

    #[test]
    fn fps_picks_distinct_points_with_shrinking_gaps(a in cloud(2, 80, 1.0), m in 1usize..20) {
        let m = m.min(a.len());
        let picks = fps(&a, m, 0).unwrap();
        prop_assert_eq!(picks[0], 0);
        let mut seen = picks.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), m);
        // The distance from each new pick to the earlier ones never grows.
        let gap = |k: usize| picks[..k].iter().map(|&j| dist(a.points()[picks[k]], a.points()[j])).fold(f64::INFINITY, f64::min);
        for k in 2..m {
            prop_assert!(gap(k) <= gap(k - 1) + 1e-15);
        }
    }

    #[test]
    fn knn_excludes_self_and_is_sorted(a in cloud(2, 80, 1.0), k in 1usize..8) {
        let k = k.min(a.len() - 1);
        for (i, row) in knn_all(&a, k).unwrap().iter().enumerate() {
            prop_assert_eq!(row.len(), k);
            prop_assert!(!row.contains(&i));
            let d: Vec<f64> = row.iter().map(|&j| dist(a.points()[i], a.points()[j])).collect();
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn xyz_text_keeps_nine_significant_digits(a in cloud(1, 40, 1e3)) {
        let back = parse_xyz(to_xyz_string(&a).as_bytes()).unwrap();
        for (p, q) in a.iter().zip(back.iter()) {
            for d in 0..3 {
                prop_assert!((p[d] - q[d]).abs() <= 5e-9 * p[d].abs());
            }
        }
    }
}
