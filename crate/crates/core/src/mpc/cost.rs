//! The four cost terms of the horizon objective.
//!
//! Collision terms use a softplus barrier around each of the `M` nearest
//! obstacle points, weighted by the obstacle-directed (or absolute) speed:
//! the barrier sharpness makes cost negligible beyond the repulsion radius
//! while growing near-linearly inside it.

use alloc::vec::Vec;

use nalgebra::{SVector, Vector3};

use crate::dynamics::{ControlInput, QuadState, STATE_DIM};
use crate::mpc::{MpcConfig, VelocityWeight, Waypoint};
use crate::wrap_angle;

#[allow(unused_imports)]
use num_traits::Float;

/// Distance floor substituted when a query point coincides with an
/// obstacle point.
pub const DEGENERATE_DISTANCE: f64 = 1e-6;

/// `ln(1 + e^z)` without overflow; for large `z` this is `z` up to an
/// exponentially small remainder.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `e^z / (1 + e^z)` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-obstacle velocity weights. `Norm` uses the speed magnitude and
/// yields a radially symmetric cost field; `Directional` uses the velocity
/// component toward each obstacle, clamped at zero, which shapes repulsion
/// along the direction of motion and vanishes for receding geometry.
pub fn velocity_weights(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    obstacles: &[(Vector3<f64>, f64)],
    mode: VelocityWeight,
) -> Vec<f64> {
    obstacles
        .iter()
        .map(|(o, _)| match mode {
            VelocityWeight::Norm => v.norm(),
            VelocityWeight::Directional => {
                let to_obs = o - p;
                let d = to_obs.norm();
                if d > 0.0 {
                    (v.dot(&to_obs) / d).max(0.0)
                } else {
                    v.norm()
                }
            }
        })
        .collect()
}

/// Collision cost with externally fixed weights. This is the kernel shared
/// by the live cost and by finite-difference checks that hold the weights
/// constant.
pub fn collision_cost_frozen(
    p: &Vector3<f64>,
    weights: &[f64],
    obstacles: &[(Vector3<f64>, f64)],
    cfg: &MpcConfig,
) -> (f64, bool) {
    let mut cost = 0.0;
    let mut degenerate = false;
    for (w, (o, _)) in weights.iter().zip(obstacles) {
        let mut d = (p - o).norm();
        if d == 0.0 {
            d = DEGENERATE_DISTANCE;
            degenerate = true;
        }
        cost += w * softplus(cfg.barrier_beta * (cfg.repulsion_radius - d));
    }
    (cfg.collision_weight * cost, degenerate)
}

/// Proximity penalty at one horizon state against its fixed obstacle set.
/// Returns the cost and whether any distance hit the degenerate floor.
pub fn collision_cost(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    obstacles: &[(Vector3<f64>, f64)],
    cfg: &MpcConfig,
) -> (f64, bool) {
    let w = velocity_weights(p, v, obstacles, cfg.velocity_weight);
    collision_cost_frozen(p, &w, obstacles, cfg)
}

/// Position gradient of the collision cost, with the velocity weights held
/// constant. The direction of each term points from the obstacle toward
/// the state (repulsive); the sign in front makes the summed vector the
/// true downhill gradient of the cost.
pub fn collision_cost_gradient(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    obstacles: &[(Vector3<f64>, f64)],
    cfg: &MpcConfig,
) -> (Vector3<f64>, bool) {
    let weights = velocity_weights(p, v, obstacles, cfg.velocity_weight);
    let mut grad = Vector3::zeros();
    let mut degenerate = false;
    for (w, (o, _)) in weights.iter().zip(obstacles) {
        let diff = p - o;
        let mut d = diff.norm();
        if d == 0.0 {
            d = DEGENERATE_DISTANCE;
            degenerate = true;
        }
        let z = cfg.barrier_beta * (cfg.repulsion_radius - d);
        grad += diff * (-cfg.barrier_beta * w * sigmoid(z) / d);
    }
    (grad * cfg.collision_weight, degenerate)
}

/// Residual of a state against a reference waypoint; the acceleration
/// reference is zero and yaw differences are wrapped.
pub fn state_residual(x: &QuadState, r: &Waypoint) -> SVector<f64, STATE_DIM> {
    let mut res: SVector<f64, STATE_DIM> = SVector::zeros();
    res.fixed_rows_mut::<3>(0).copy_from(&(x.position - r.position));
    res[3] = wrap_angle(x.yaw - r.yaw);
    res.fixed_rows_mut::<3>(4).copy_from(&(x.velocity - r.velocity));
    res.fixed_rows_mut::<3>(7).copy_from(&x.accel);
    res
}

fn quadratic(res: &SVector<f64, STATE_DIM>, q: &[f64; STATE_DIM]) -> f64 {
    res.iter().zip(q).map(|(r, w)| w * r * r).sum()
}

/// Terminal pull toward the goal state.
pub fn terminal_cost(x: &QuadState, goal: &Waypoint, q_goal: &[f64; STATE_DIM]) -> f64 {
    quadratic(&state_residual(x, goal), q_goal)
}

/// Reference-tracking penalty for one horizon step.
pub fn waypoint_cost(x: &QuadState, r: &Waypoint, q_wp: &[f64; STATE_DIM]) -> f64 {
    quadratic(&state_residual(x, r), q_wp)
}

/// Input magnitude penalty.
pub fn smoothness_cost(u: &ControlInput, q_u: &[f64; 4]) -> f64 {
    let uv = u.to_vector();
    uv.iter().zip(q_u).map(|(c, w)| w * c * c).sum()
}

/// Objective value split by term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    pub collision: f64,
    pub goal: f64,
    pub waypoint: f64,
    pub smoothness: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.collision + self.goal + self.waypoint + self.smoothness
    }
}

/// Horizon objective with per-step obstacle sets held fixed. Returns the
/// breakdown and the count of degenerate (zero-distance) contacts.
pub fn total_cost_fixed(
    states: &[QuadState],
    inputs: &[ControlInput],
    refs: &[Waypoint],
    obstacles: &[Vec<(Vector3<f64>, f64)>],
    cfg: &MpcConfig,
) -> (CostBreakdown, usize) {
    let mut b = CostBreakdown::default();
    let mut degenerate = 0;
    for (h, x) in states.iter().enumerate() {
        let (c, flag) = collision_cost(&x.position, &x.velocity, &obstacles[h], cfg);
        b.collision += c;
        degenerate += flag as usize;
        b.waypoint += waypoint_cost(x, &refs[h], &cfg.q_wp);
        b.smoothness += smoothness_cost(&inputs[h], &cfg.q_u);
    }
    if let (Some(x_last), Some(goal)) = (states.last(), refs.last()) {
        b.goal = terminal_cost(x_last, goal, &cfg.q_goal);
    }
    (b, degenerate)
}

/// Horizon objective with obstacles queried live from the snapshot, `M`
/// nearest per state.
pub fn total_cost(
    states: &[QuadState],
    inputs: &[ControlInput],
    refs: &[Waypoint],
    trees: &crate::perception::DualTrees,
    cfg: &MpcConfig,
) -> (CostBreakdown, usize) {
    let obstacles: Vec<Vec<(Vector3<f64>, f64)>> = states
        .iter()
        .map(|x| crate::perception::query_obstacles(trees, &x.position, cfg.m_nearest, true))
        .collect();
    total_cost_fixed(states, inputs, refs, &obstacles, cfg)
}
