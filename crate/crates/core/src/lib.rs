//! Mapless collision avoidance for quadrotors from a single depth camera.
//!
//! The crate turns one depth frame plus a handful of straight-line waypoints
//! directly into a dynamically feasible control action, with no occupancy
//! map, ESDF, or trajectory-tracking layer in between:
//!
//! * [`kdtree`] — exact 3-D k-nearest-neighbour index rebuilt per frame.
//! * [`depth`] — depth images, block-min downsampling, morphological
//!   inflation and edge extraction, pixel deprojection.
//! * [`perception`] — the dual-tree snapshot (obstacle tree + edge tree),
//!   multi-frame keyframes, and coarse waypoint adjustment.
//! * [`dynamics`] — point-mass quadrotor model with first-order actuator
//!   lag, RK4 integration, and analytic step Jacobians.
//! * [`mpc`] — the receding-horizon problem: softplus collision cost,
//!   reference tracking, warm starting, projected-descent solver.
//! * [`sim`] — deterministic scene generation, analytic depth rendering,
//!   closed-loop trials, and the benchmark matrix.
//!
//! Everything is `no_std`-compatible (`alloc` required, enable the `libm`
//! feature); wall-clock timings in diagnostics are only collected when the
//! default `std` feature is on.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("thicket-core needs either the `std` or the `libm` feature");

pub mod depth;
pub mod dynamics;
pub mod kdtree;
pub mod mpc;
pub mod perception;
pub mod rng;
pub mod sim;

mod time;

use core::fmt;

pub use depth::{CameraIntrinsics, DepthImage, EdgeMask};
pub use dynamics::{ControlInput, ModelParams, QuadState};
pub use kdtree::KdTree;
pub use mpc::{MpcConfig, MpcSolution, Planner, VelocityWeight, Waypoint, WaypointSequence};
pub use perception::{CloudFrame, DualTrees, PerceptionConfig};
pub use sim::{Aabb, Obstacle, Scene, TrialConfig, TrialOutcome, TrialResult};

/// Errors surfaced by construction and pipeline entry points.
///
/// Query paths are infallible by design; everything that can reject its
/// input does so up front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An input contained NaN or infinite coordinates.
    NonFinite(&'static str),
    /// An argument violated a documented precondition.
    InvalidArgument(&'static str),
    /// Scene generation could not satisfy the start/goal clearance
    /// constraint within the rejection budget.
    SceneGeneration(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite input: {what}"),
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::SceneGeneration(what) => write!(f, "scene generation failed: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

/// Wrap an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    #[allow(unused_imports)]
    use num_traits::Float;
    if a.is_finite() {
        let two_pi = 2.0 * core::f64::consts::PI;
        let mut r = a % two_pi;
        if r <= -core::f64::consts::PI {
            r += two_pi;
        } else if r > core::f64::consts::PI {
            r -= two_pi;
        }
        r
    } else {
        a
    }
}
