//! Analytic depth-camera rendering against the scene primitives.

use alloc::vec::Vec;

use nalgebra::{Isometry3, Vector3};

use crate::depth::{CameraIntrinsics, DepthImage, NO_RETURN};
use crate::rng::SplitMix64;
use crate::sim::Scene;

/// Render one depth frame from the given camera pose. Rays are scaled so
/// the hit parameter equals the optical-axis depth, matching the pinhole
/// deprojection. Gaussian noise, when enabled, perturbs valid returns and
/// is clamped into `(0, max_range]`; per-seed output is bit-stable.
pub fn render_depth(
    scene: &Scene,
    pose: &Isometry3<f64>,
    intrinsics: CameraIntrinsics,
    max_range: f64,
    noise_sigma: f64,
    seed: u64,
    timestamp: f64,
) -> DepthImage {
    let origin = pose.translation.vector;
    let mut depths = Vec::with_capacity(intrinsics.width * intrinsics.height);
    let mut rng = SplitMix64::substream(seed, 0x52454e44);
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            // Unit forward depth: t is z in the camera frame.
            let dir_cam = Vector3::new(
                (u as f64 - intrinsics.cx) / intrinsics.fx,
                (v as f64 - intrinsics.cy) / intrinsics.fy,
                1.0,
            );
            let dir = pose.rotation * dir_cam;
            let mut nearest = f64::INFINITY;
            for obstacle in &scene.obstacles {
                if let Some(t) = obstacle.raycast(&origin, &dir) {
                    if t < nearest {
                        nearest = t;
                    }
                }
            }
            let mut depth = if nearest <= max_range { nearest } else { NO_RETURN };
            if depth > 0.0 && noise_sigma > 0.0 {
                depth = (depth + noise_sigma * rng.normal()).clamp(1e-2, max_range);
            }
            depths.push(depth);
        }
    }
    DepthImage { intrinsics, depths, pose: *pose, timestamp, max_range }
}
