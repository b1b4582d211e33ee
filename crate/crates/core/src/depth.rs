//! Depth images and the image-space operations feeding perception.
//!
//! Depth grids are row-major `f64` metres with `-1.0` marking pixels with
//! no return. A no-return pixel is free space out to the camera's maximum
//! range: obstacle points are only ever extracted from valid returns.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Sentinel depth for pixels with no return.
pub const NO_RETURN: f64 = -1.0;

/// Pinhole intrinsics. `cx`/`cy` follow the pixel-centre convention: pixel
/// `u` spans `[u - 0.5, u + 0.5]` and deprojects at its centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive"));
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(Error::InvalidArgument("principal point outside image"));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, width, height })
    }

    /// Square-pixel intrinsics from a horizontal field of view.
    pub fn with_hfov(width: usize, height: usize, hfov_rad: f64) -> Self {
        let fx = width as f64 / 2.0 / (hfov_rad / 2.0).tan();
        CameraIntrinsics {
            fx,
            fy: fx,
            cx: width as f64 / 2.0 - 0.5,
            cy: height as f64 / 2.0 - 0.5,
            width,
            height,
        }
    }

    /// Rescale for a resized image.
    pub fn scaled(&self, new_width: usize, new_height: usize) -> Self {
        let sx = new_width as f64 / self.width as f64;
        let sy = new_height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width: new_width,
            height: new_height,
        }
    }
}

/// A depth frame with the camera pose (camera to world) it was taken from.
#[derive(Debug, Clone)]
pub struct DepthImage {
    pub intrinsics: CameraIntrinsics,
    pub depths: Vec<f64>,
    pub pose: Isometry3<f64>,
    pub timestamp: f64,
    pub max_range: f64,
}

impl DepthImage {
    pub fn new(
        intrinsics: CameraIntrinsics,
        depths: Vec<f64>,
        pose: Isometry3<f64>,
        timestamp: f64,
        max_range: f64,
    ) -> Result<Self> {
        if depths.len() != intrinsics.width * intrinsics.height {
            return Err(Error::InvalidArgument("depth grid does not match intrinsics"));
        }
        Ok(DepthImage { intrinsics, depths, pose, timestamp, max_range })
    }

    /// All-no-return frame.
    pub fn empty(intrinsics: CameraIntrinsics, pose: Isometry3<f64>, timestamp: f64, max_range: f64) -> Self {
        let depths = vec![NO_RETURN; intrinsics.width * intrinsics.height];
        DepthImage { intrinsics, depths, pose, timestamp, max_range }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.intrinsics.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.at(u, v) > 0.0
    }

    /// Project a world point into the image. Returns the nearest pixel and
    /// the forward (optical-axis) depth, or `None` when the point lies
    /// behind the camera or outside the image bounds.
    pub fn project_world(&self, p: &Vector3<f64>) -> Option<(usize, usize, f64)> {
        let q = self.pose.inverse_transform_point(&nalgebra::Point3::from(*p));
        if q.z <= 0.0 {
            return None;
        }
        let u = self.intrinsics.fx * q.x / q.z + self.intrinsics.cx;
        let v = self.intrinsics.fy * q.y / q.z + self.intrinsics.cy;
        let (ui, vi) = (u.round(), v.round());
        if ui < 0.0 || vi < 0.0 || ui >= self.intrinsics.width as f64 || vi >= self.intrinsics.height as f64 {
            return None;
        }
        Some((ui as usize, vi as usize, q.z))
    }
}

/// Camera pose for a quadrotor at `position` heading `yaw`: optical axis
/// along the heading, image x to the right, image y down.
pub fn camera_pose(position: &Vector3<f64>, yaw: f64) -> Isometry3<f64> {
    let (s, c) = (yaw.sin(), yaw.cos());
    // Columns: right, down, forward in world coordinates.
    let rot = Matrix3::new(s, 0.0, c, -c, 0.0, s, 0.0, -1.0, 0.0);
    Isometry3::from_parts(
        Translation3::from(*position),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot)),
    )
}

/// Reduce resolution by block minimum over valid depths. Minimum (not
/// average) keeps the nearest surface: averaging across a depth edge would
/// invent a phantom mid-range return.
pub fn downsample(input: &DepthImage, target_w: usize, target_h: usize) -> Result<DepthImage> {
    let (w, h) = (input.intrinsics.width, input.intrinsics.height);
    if target_w == 0 || target_h == 0 || target_w > w || target_h > h {
        return Err(Error::InvalidArgument("downsample target must be within input dimensions"));
    }
    let mut depths = vec![NO_RETURN; target_w * target_h];
    for tv in 0..target_h {
        let v0 = tv * h / target_h;
        let v1 = ((tv + 1) * h).div_ceil(target_h).min(h);
        for tu in 0..target_w {
            let u0 = tu * w / target_w;
            let u1 = ((tu + 1) * w).div_ceil(target_w).min(w);
            let mut best = f64::INFINITY;
            for v in v0..v1 {
                for u in u0..u1 {
                    let d = input.at(u, v);
                    if d > 0.0 && d < best {
                        best = d;
                    }
                }
            }
            if best.is_finite() {
                depths[tv * target_w + tu] = best;
            }
        }
    }
    Ok(DepthImage {
        intrinsics: input.intrinsics.scaled(target_w, target_h),
        depths,
        pose: input.pose,
        timestamp: input.timestamp,
        max_range: input.max_range,
    })
}

/// Inflation kernel width in pixels: always odd, always at least one.
/// Derived from the safety distance `d_s`, the forward speed, the control
/// time step, and the focal length in pixels.
pub fn inflation_radius(d_s: f64, v_f: f64, dt: f64, f_pix: f64) -> Result<usize> {
    if !(v_f > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("inflation needs positive speed and time step"));
    }
    if !(f_pix > 0.0 && d_s >= 0.0) {
        return Err(Error::InvalidArgument("inflation needs f_pix > 0 and d_s >= 0"));
    }
    let half = (0.5 * d_s / (v_f * dt) * f_pix).floor();
    if !half.is_finite() || half > usize::MAX as f64 / 4.0 {
        return Err(Error::InvalidArgument("inflation kernel overflows"));
    }
    Ok(2 * half as usize + 1)
}

/// Morphological inflation: each pixel takes the minimum valid depth in the
/// `kernel x kernel` window around it, expanding obstacle footprints and
/// closing gaps narrower than the kernel. Windows with no valid return stay
/// no-return.
pub fn dilate(input: &DepthImage, kernel: usize) -> Result<DepthImage> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::InvalidArgument("dilation kernel must be odd and positive"));
    }
    let (w, h) = (input.intrinsics.width, input.intrinsics.height);
    let r = kernel / 2;
    // Separable min filter: rows then columns.
    let mut rows = vec![NO_RETURN; w * h];
    for v in 0..h {
        for u in 0..w {
            let lo = u.saturating_sub(r);
            let hi = (u + r).min(w - 1);
            let mut best = f64::INFINITY;
            for x in lo..=hi {
                let d = input.at(x, v);
                if d > 0.0 && d < best {
                    best = d;
                }
            }
            rows[v * w + u] = if best.is_finite() { best } else { NO_RETURN };
        }
    }
    let mut depths = vec![NO_RETURN; w * h];
    for v in 0..h {
        let lo = v.saturating_sub(r);
        let hi = (v + r).min(h - 1);
        for u in 0..w {
            let mut best = f64::INFINITY;
            for y in lo..=hi {
                let d = rows[y * w + u];
                if d > 0.0 && d < best {
                    best = d;
                }
            }
            depths[v * w + u] = if best.is_finite() { best } else { NO_RETURN };
        }
    }
    Ok(DepthImage { intrinsics: input.intrinsics, depths, pose: input.pose, timestamp: input.timestamp, max_range: input.max_range })
}

/// Boundary pixels of (dilated) obstacle regions, each carrying its own
/// obstacle-side depth.
#[derive(Debug, Clone)]
pub struct EdgeMask {
    pub width: usize,
    pub height: usize,
    /// `NO_RETURN` where unflagged, the obstacle-side depth where flagged.
    pub depth: Vec<f64>,
}

impl EdgeMask {
    #[inline]
    pub fn flagged(&self, u: usize, v: usize) -> bool {
        self.depth[v * self.width + u] > 0.0
    }

    pub fn count(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }
}

/// Flag pixels that sit strictly nearer than a 4-neighbour by more than
/// `tau`. Only the obstacle side of a discontinuity is flagged, so a
/// region's edge is a one-pixel ring carrying the nearer depth; no-return
/// neighbours count as `max_range`.
pub fn edge_filter(dilated: &DepthImage, tau: f64) -> EdgeMask {
    let (w, h) = (dilated.intrinsics.width, dilated.intrinsics.height);
    let eff = |u: usize, v: usize| {
        let d = dilated.at(u, v);
        if d > 0.0 {
            d
        } else {
            dilated.max_range
        }
    };
    let mut depth = vec![NO_RETURN; w * h];
    for v in 0..h {
        for u in 0..w {
            let own = eff(u, v);
            let mut edge = false;
            if u > 0 && eff(u - 1, v) - own > tau {
                edge = true;
            }
            if !edge && u + 1 < w && eff(u + 1, v) - own > tau {
                edge = true;
            }
            if !edge && v > 0 && eff(u, v - 1) - own > tau {
                edge = true;
            }
            if !edge && v + 1 < h && eff(u, v + 1) - own > tau {
                edge = true;
            }
            if edge {
                depth[v * w + u] = dilated.at(u, v);
            }
        }
    }
    EdgeMask { width: w, height: h, depth }
}

/// Deproject valid pixels into world-frame points. With a mask, only the
/// flagged pixels are lifted, at the mask's stored depth.
pub fn deproject(image: &DepthImage, mask: Option<&EdgeMask>) -> Vec<Vector3<f64>> {
    let intr = &image.intrinsics;
    let mut points = Vec::new();
    for v in 0..intr.height {
        for u in 0..intr.width {
            let d = match mask {
                Some(m) => m.depth[v * intr.width + u],
                None => image.at(u, v),
            };
            if d <= 0.0 {
                continue;
            }
            let cam = nalgebra::Point3::new(
                (u as f64 - intr.cx) * d / intr.fx,
                (v as f64 - intr.cy) * d / intr.fy,
                d,
            );
            points.push(image.pose.transform_point(&cam).coords);
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(intr: CameraIntrinsics, depth: f64) -> DepthImage {
        DepthImage {
            depths: vec![depth; intr.width * intr.height],
            intrinsics: intr,
            pose: Isometry3::identity(),
            timestamp: 0.0,
            max_range: 10.0,
        }
    }

    #[test]
    fn downsample_rescales_intrinsics() {
        let intr = CameraIntrinsics::new(337.0, 337.0, 319.5, 239.5, 640, 480).unwrap();
        let img = flat(intr, 5.0);
        let out = downsample(&img, 64, 48).unwrap();
        assert!((out.intrinsics.fx - 33.7).abs() < 1e-12);
        assert!((out.intrinsics.cx - 31.95).abs() < 1e-12);
        assert!(out.depths.iter().all(|d| (*d - 5.0).abs() < 1e-12));
    }

    #[test]
    fn downsample_takes_block_minimum() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 1.0, 1.0, 4, 2).unwrap();
        let mut img = flat(intr, NO_RETURN);
        // One 2x2 block holds {4.0, 6.0, no-return, no-return}.
        img.depths[0] = 4.0;
        img.depths[1] = 6.0;
        let out = downsample(&img, 2, 1).unwrap();
        assert_eq!(out.at(0, 0), 4.0);
        assert_eq!(out.at(1, 0), NO_RETURN);
    }

    #[test]
    fn downsample_rejects_upscale() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 1.0, 1.0, 4, 4).unwrap();
        assert!(downsample(&flat(intr, 1.0), 8, 4).is_err());
    }

    #[test]
    fn inflation_radius_reference_values() {
        assert_eq!(inflation_radius(0.15, 5.0, 0.033, 33.7).unwrap(), 31);
        // Floor term zero: kernel collapses to a single pixel.
        assert_eq!(inflation_radius(0.01, 10.0, 0.1, 10.0).unwrap(), 1);
        assert!(inflation_radius(0.15, 0.0, 0.033, 33.7).is_err());
        assert!(inflation_radius(0.15, 5.0, -1.0, 33.7).is_err());
    }

    #[test]
    fn inflation_radius_monotone_in_speed() {
        let mut prev = usize::MAX;
        for i in 1..=60 {
            let v = 0.25 * i as f64;
            let r = inflation_radius(0.15, v, 0.033, 33.7).unwrap();
            assert!(r <= prev, "kernel grew when speed rose: v={v}");
            prev = r;
        }
    }

    #[test]
    fn dilate_kernel_one_is_identity() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 5, 5).unwrap();
        let mut img = flat(intr, 10.0);
        img.depths[12] = 2.0;
        let out = dilate(&img, 1).unwrap();
        assert_eq!(out.depths, img.depths);
    }

    #[test]
    fn dilate_grows_single_pixel_to_block() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 5, 5).unwrap();
        let mut img = flat(intr, 10.0);
        img.depths[2 * 5 + 2] = 2.0;
        let out = dilate(&img, 3).unwrap();
        for v in 0..5 {
            for u in 0..5 {
                let inside = (1..=3).contains(&u) && (1..=3).contains(&v);
                assert_eq!(out.at(u, v), if inside { 2.0 } else { 10.0 }, "({u},{v})");
            }
        }
    }

    #[test]
    fn dilate_fills_narrow_gaps() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 4.0, 1.0, 9, 3).unwrap();
        let mut img = flat(intr, 5.0);
        // Two obstacles at 2 m separated by a single free column.
        for v in 0..3 {
            img.depths[v * 9 + 3] = 2.0;
            img.depths[v * 9 + 5] = 2.0;
        }
        let out = dilate(&img, 3).unwrap();
        for v in 0..3 {
            assert_eq!(out.at(4, v), 2.0, "gap column stayed open");
        }
        // Exhaustive check against a direct window scan.
        for v in 0..3 {
            for u in 0..9 {
                let mut want = f64::INFINITY;
                for dv in -1i64..=1 {
                    for du in -1i64..=1 {
                        let (x, y) = (u as i64 + du, v as i64 + dv);
                        if (0..9).contains(&x) && (0..3).contains(&y) {
                            let d = img.at(x as usize, y as usize);
                            if d > 0.0 {
                                want = want.min(d);
                            }
                        }
                    }
                }
                assert_eq!(out.at(u, v), want);
            }
        }
    }

    #[test]
    fn dilate_rejects_even_kernel() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 1.0, 1.0, 4, 4).unwrap();
        assert!(dilate(&flat(intr, 1.0), 2).is_err());
    }

    #[test]
    fn dilate_is_extensive() {
        // The set of valid (obstacle) pixels never shrinks.
        let intr = CameraIntrinsics::new(10.0, 10.0, 4.0, 3.0, 9, 7).unwrap();
        let mut img = flat(intr, NO_RETURN);
        for (u, v, d) in [(1, 1, 3.0), (7, 2, 4.5), (4, 5, 6.0)] {
            img.depths[v * 9 + u] = d;
        }
        for kernel in [1, 3, 5] {
            let out = dilate(&img, kernel).unwrap();
            for i in 0..img.depths.len() {
                if img.depths[i] > 0.0 {
                    assert!(out.depths[i] > 0.0);
                }
            }
        }
    }

    #[test]
    fn edge_filter_constant_image_is_empty() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 4.0, 3.0, 9, 7).unwrap();
        assert_eq!(edge_filter(&flat(intr, 5.0), 0.3).count(), 0);
    }

    #[test]
    fn edge_filter_marks_one_pixel_ring() {
        let intr = CameraIntrinsics::new(20.0, 20.0, 7.0, 5.0, 15, 11).unwrap();
        let mut img = flat(intr, 10.0);
        for v in 3..8 {
            for u in 4..11 {
                img.depths[v * 15 + u] = 2.0;
            }
        }
        let mask = edge_filter(&img, 0.3);
        for v in 0..11 {
            for u in 0..15 {
                let inside = (3..8).contains(&v) && (4..11).contains(&u);
                let interior = (4..7).contains(&v) && (5..10).contains(&u);
                let on_ring = inside && !interior;
                assert_eq!(mask.flagged(u, v), on_ring, "({u},{v})");
                if on_ring {
                    assert_eq!(mask.depth[v * 15 + u], 2.0);
                }
            }
        }
        // Ring pixel count for a 7x5 rectangle.
        assert_eq!(mask.count(), 2 * 7 + 2 * 5 - 4);
    }

    #[test]
    fn deproject_principal_point_is_on_axis() {
        let intr = CameraIntrinsics::new(30.0, 30.0, 2.0, 2.0, 5, 5).unwrap();
        let mut img = flat(intr, NO_RETURN);
        img.depths[2 * 5 + 2] = 3.0;
        let pts = deproject(&img, None);
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn deproject_applies_pose() {
        let intr = CameraIntrinsics::new(30.0, 30.0, 2.0, 2.0, 5, 5).unwrap();
        let pose = camera_pose(&Vector3::new(1.0, 2.0, 1.5), 0.0);
        let mut img = flat(intr, NO_RETURN);
        img.pose = pose;
        img.depths[2 * 5 + 2] = 4.0;
        let pts = deproject(&img, None);
        // Heading +x from (1,2,1.5): the on-axis return lands 4 m ahead.
        assert!((pts[0] - Vector3::new(5.0, 2.0, 1.5)).norm() < 1e-12);
    }

    #[test]
    fn project_world_roundtrips_deprojection() {
        let intr = CameraIntrinsics::with_hfov(64, 48, 87f64.to_radians());
        let pose = camera_pose(&Vector3::new(0.5, -1.0, 2.0), 0.7);
        let mut img = DepthImage::empty(intr, pose, 0.0, 10.0);
        img.depths[20 * 64 + 40] = 5.0;
        let pts = deproject(&img, None);
        let (u, v, z) = img.project_world(&pts[0]).unwrap();
        assert_eq!((u, v), (40, 20));
        assert!((z - 5.0).abs() < 1e-9);
    }

    #[test]
    fn project_world_rejects_behind_and_outside() {
        let intr = CameraIntrinsics::with_hfov(64, 48, 87f64.to_radians());
        let img = DepthImage::empty(intr, camera_pose(&Vector3::zeros(), 0.0), 0.0, 10.0);
        // Behind the camera (heading +x).
        assert!(img.project_world(&Vector3::new(-1.0, 0.0, 0.0)).is_none());
        // Far outside the horizontal field of view.
        assert!(img.project_world(&Vector3::new(0.1, 5.0, 0.0)).is_none());
    }

    #[test]
    fn camera_pose_axes() {
        let pose = camera_pose(&Vector3::zeros(), 0.0);
        let fwd = pose.transform_vector(&Vector3::new(0.0, 0.0, 1.0));
        let right = pose.transform_vector(&Vector3::new(1.0, 0.0, 0.0));
        let down = pose.transform_vector(&Vector3::new(0.0, 1.0, 0.0));
        assert!((fwd - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((right - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((down - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
