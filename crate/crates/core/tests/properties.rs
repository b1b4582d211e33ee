//! Property tests over the pure geometric kernels.

use nalgebra::Vector3;
use proptest::prelude::*;
use thicket_core::depth::{dilate, inflation_radius, CameraIntrinsics, DepthImage, NO_RETURN};
use thicket_core::kdtree::KdTree;
use thicket_core::wrap_angle;

fn point_strategy() -> impl Strategy<Value = Vector3<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

proptest! {
    #[test]
    fn knn_matches_exhaustive_scan(
        points in prop::collection::vec(point_strategy(), 1..120),
        query in point_strategy(),
        k in 1usize..8,
    ) {
        let tree = KdTree::build(&points).unwrap();
        let got = tree.knn(&query, k);
        let mut want: Vec<(f64, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((query - p).norm_squared(), i as u32))
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.truncate(k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.0, points[w.1 as usize]);
            prop_assert_eq!(g.1, w.0.sqrt());
        }
        // Distances never decrease along the result.
        for pair in got.windows(2) {
            prop_assert!(pair[0].1 <= pair[1].1);
        }
    }

    #[test]
    fn has_within_matches_exhaustive_scan(
        points in prop::collection::vec(point_strategy(), 0..80),
        query in point_strategy(),
        radius in 0.0..5.0f64,
    ) {
        let tree = KdTree::build(&points).unwrap();
        let want = points.iter().any(|p| (query - p).norm() <= radius);
        prop_assert_eq!(tree.has_within(&query, radius), want);
    }

    #[test]
    fn inflation_kernel_is_odd_and_positive(
        d_s in 0.0..1.0f64,
        v_f in 0.01..20.0f64,
        dt in 0.001..0.2f64,
        f_pix in 1.0..500.0f64,
    ) {
        let kernel = inflation_radius(d_s, v_f, dt, f_pix).unwrap();
        prop_assert!(kernel % 2 == 1);
        prop_assert!(kernel >= 1);
    }

    #[test]
    fn dilation_never_shrinks_the_obstacle_footprint(
        cells in prop::collection::vec(prop::option::of(0.5..9.5f64), 48),
        kernel in (0usize..3).prop_map(|k| 2 * k + 1),
    ) {
        let intrinsics = CameraIntrinsics::new(10.0, 10.0, 3.5, 2.5, 8, 6).unwrap();
        let depths: Vec<f64> = cells.iter().map(|c| c.unwrap_or(NO_RETURN)).collect();
        let image = DepthImage::new(intrinsics, depths, nalgebra::Isometry3::identity(), 0.0, 10.0).unwrap();
        let out = dilate(&image, kernel).unwrap();
        for (before, after) in image.depths.iter().zip(&out.depths) {
            if *before > 0.0 {
                prop_assert!(*after > 0.0, "valid pixel became no-return");
                prop_assert!(*after <= *before + 1e-12, "dilation moved a surface farther away");
            }
        }
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -1e3..1e3f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        // Same heading: difference is a whole number of turns.
        let turns = (a - w) / (2.0 * std::f64::consts::PI);
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }
}
