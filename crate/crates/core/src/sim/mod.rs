//! Deterministic desk-scale world: primitive obstacles with exact signed
//! distances, seeded forest generation, analytic depth rendering, and the
//! closed-loop trial runner.

mod render;
mod trial;

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::rng::SplitMix64;
use crate::{Error, Result};

pub use render::render_depth;
pub use trial::{
    run_benchmark, run_cell, run_trial, trial_seed, AblationSpec, CellResult, TickRecord,
    TrialConfig, TrialOutcome, TrialResult,
};

#[allow(unused_imports)]
use num_traits::Float;

/// Axis-aligned world region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(Error::InvalidArgument("degenerate bounds"));
        }
        Ok(Aabb { min, max })
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn area_xy(&self) -> f64 {
        let e = self.extent();
        e.x * e.y
    }
}

/// World obstacle primitives. Cylinders stand vertically with their base
/// at the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obstacle {
    Cylinder { x: f64, y: f64, radius: f64, height: f64 },
    Sphere { center: Vector3<f64>, radius: f64 },
    Box { center: Vector3<f64>, half_extents: Vector3<f64> },
}

impl Obstacle {
    /// Exact signed distance: negative inside, zero on the surface.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Obstacle::Cylinder { x, y, radius, height } => {
                let dr = (Vector3::new(p.x - x, p.y - y, 0.0)).norm() - radius;
                let dz = (p.z - height / 2.0).abs() - height / 2.0;
                let out = Vector3::new(dr.max(0.0), dz.max(0.0), 0.0).norm();
                out + dr.max(dz).min(0.0)
            }
            Obstacle::Sphere { center, radius } => (p - center).norm() - radius,
            Obstacle::Box { center, half_extents } => {
                let q = (p - center).abs() - half_extents;
                let out = q.map(|c| c.max(0.0)).norm();
                out + q.max().min(0.0)
            }
        }
    }

    /// Smallest `t > 0` with `origin + t * dir` on the surface. `dir` need
    /// not be normalised: the caller picks its parameterisation (the depth
    /// renderer uses rays scaled so `t` is the optical-axis depth).
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Obstacle::Sphere { center, radius } => {
                let oc = origin - center;
                Self::quadratic_hit(dir.norm_squared(), oc.dot(dir), oc.norm_squared() - radius * radius)
            }
            Obstacle::Cylinder { x, y, radius, height } => {
                let oc = Vector3::new(origin.x - x, origin.y - y, 0.0);
                let d2 = Vector3::new(dir.x, dir.y, 0.0);
                let side = Self::quadratic_hit(d2.norm_squared(), oc.dot(&d2), oc.norm_squared() - radius * radius)
                    .filter(|t| {
                        let z = origin.z + t * dir.z;
                        (0.0..=height).contains(&z)
                    });
                // End caps.
                let mut best = side;
                if dir.z.abs() > 0.0 {
                    for plane in [0.0, height] {
                        let t = (plane - origin.z) / dir.z;
                        if t > 0.0 {
                            let hx = origin.x + t * dir.x - x;
                            let hy = origin.y + t * dir.y - y;
                            if hx * hx + hy * hy <= radius * radius
                                && best.is_none_or(|b| t < b)
                            {
                                best = Some(t);
                            }
                        }
                    }
                }
                best
            }
            Obstacle::Box { center, half_extents } => {
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                for i in 0..3 {
                    let lo = center[i] - half_extents[i];
                    let hi = center[i] + half_extents[i];
                    if dir[i].abs() < 1e-300 {
                        if origin[i] < lo || origin[i] > hi {
                            return None;
                        }
                    } else {
                        let (mut t0, mut t1) = ((lo - origin[i]) / dir[i], (hi - origin[i]) / dir[i]);
                        if t0 > t1 {
                            core::mem::swap(&mut t0, &mut t1);
                        }
                        t_enter = t_enter.max(t0);
                        t_exit = t_exit.min(t1);
                    }
                }
                if t_exit < t_enter.max(0.0) {
                    None
                } else if t_enter > 0.0 {
                    Some(t_enter)
                } else if t_exit > 0.0 {
                    Some(t_exit)
                } else {
                    None
                }
            }
        }
    }

    fn quadratic_hit(a: f64, b: f64, c: f64) -> Option<f64> {
        if a <= 0.0 {
            return None;
        }
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t0 = (-b - sq) / a;
        if t0 > 0.0 {
            return Some(t0);
        }
        let t1 = (-b + sq) / a;
        (t1 > 0.0).then_some(t1)
    }
}

/// One benchmark world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
    pub bounds: Aabb,
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub seed: u64,
}

impl Scene {
    /// Signed distance to the nearest obstacle surface; infinite in an
    /// empty scene.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// True when a vehicle of the given radius at `p` touches any obstacle.
pub fn check_collision(scene: &Scene, p: &Vector3<f64>, quad_radius: f64) -> bool {
    scene.signed_distance(p) < quad_radius
}

/// Clearance a generated tree must keep from the start and goal.
pub const FOREST_ENDPOINT_CLEARANCE: f64 = 1.5;

/// Generate a seeded cylinder forest at the given trunk density with the
/// default trunk radii. Start and goal sit on the centreline, inset 15% of
/// the x-extent from each side (35 m apart in the default 50 m bounds), at
/// mid flight-band height. Every trunk keeps
/// [`FOREST_ENDPOINT_CLEARANCE`] from both endpoints.
pub fn generate_forest(bounds: Aabb, density: f64, seed: u64) -> Result<Scene> {
    generate_forest_with_radii(bounds, density, (0.15, 0.40), seed)
}

/// [`generate_forest`] with an explicit uniform trunk-radius range.
pub fn generate_forest_with_radii(
    bounds: Aabb,
    density: f64,
    radius_range: (f64, f64),
    seed: u64,
) -> Result<Scene> {
    if !(density >= 0.0) {
        return Err(Error::InvalidArgument("density must be non-negative"));
    }
    if !(radius_range.0 > 0.0 && radius_range.1 >= radius_range.0) {
        return Err(Error::InvalidArgument("trunk radius range must be positive and ordered"));
    }
    let count = (bounds.area_xy() * density).round() as usize;
    let extent = bounds.extent();
    let inset = 0.15 * extent.x;
    let mid_y = (bounds.min.y + bounds.max.y) / 2.0;
    let mid_z = (bounds.min.z + bounds.max.z) / 2.0;
    let start = Vector3::new(bounds.min.x + inset, mid_y, mid_z);
    let goal = Vector3::new(bounds.max.x - inset, mid_y, mid_z);

    let mut rng = SplitMix64::substream(seed, 0x464f5245);
    let mut obstacles = Vec::with_capacity(count);
    let mut rejections = 0usize;
    while obstacles.len() < count {
        let x = rng.uniform_in(bounds.min.x, bounds.max.x);
        let y = rng.uniform_in(bounds.min.y, bounds.max.y);
        let radius = rng.uniform_in(radius_range.0, radius_range.1);
        let clear = |p: &Vector3<f64>| {
            Vector3::new(p.x - x, p.y - y, 0.0).norm() - radius >= FOREST_ENDPOINT_CLEARANCE
        };
        if clear(&start) && clear(&goal) {
            obstacles.push(Obstacle::Cylinder { x, y, radius, height: bounds.max.z });
        } else {
            rejections += 1;
            if rejections > 10_000 {
                return Err(Error::SceneGeneration("endpoint clearance unsatisfiable"));
            }
        }
    }
    Ok(Scene { obstacles, bounds, start, goal, seed })
}
