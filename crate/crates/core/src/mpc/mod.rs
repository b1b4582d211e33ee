//! Receding-horizon planning: straight-line waypoint sampling, warm
//! starting from the coarse-adjusted path, and the per-tick control step.
//!
//! Each tick re-solves a fixed one-second horizon and applies only the
//! first input. The coarse-adjusted waypoints do double duty: they anchor
//! the tracking costs and, more importantly, seed the solver inside the
//! collision-free basin so the stiff barrier does not trap it.

pub mod cost;
mod solve;

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::depth::{downsample, DepthImage};
use crate::dynamics::{ControlInput, ModelParams, QuadState, STATE_DIM};
use crate::perception::{
    build_dual_trees, coarse_adjust, CoarseAdjustStats, DualTrees, KeyframeManager,
    PerceptionConfig,
};
use crate::time::Stopwatch;
use crate::{Error, Result};

pub use cost::{
    collision_cost, collision_cost_frozen, collision_cost_gradient, smoothness_cost,
    terminal_cost, total_cost, velocity_weights, waypoint_cost, CostBreakdown,
};
pub use solve::{solve, solve_fixed};

#[allow(unused_imports)]
use num_traits::Float;

/// How the per-obstacle velocity weight is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityWeight {
    /// Speed magnitude; the cost field is radially symmetric.
    Norm,
    /// Speed component toward the obstacle, clamped at zero; repulsion is
    /// shaped along the direction of motion.
    Directional,
}

/// One reference: position, yaw, velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub velocity: Vector3<f64>,
}

/// Ordered reference sequence; the last entry doubles as the goal state.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointSequence {
    refs: Vec<Waypoint>,
}

impl WaypointSequence {
    pub fn new(refs: Vec<Waypoint>) -> Self {
        WaypointSequence { refs }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Waypoint> {
        self.refs.iter()
    }

    pub fn iter_mut(&mut self) -> core::slice::IterMut<'_, Waypoint> {
        self.refs.iter_mut()
    }

    pub fn as_slice(&self) -> &[Waypoint] {
        &self.refs
    }

    pub fn goal(&self) -> Option<&Waypoint> {
        self.refs.last()
    }
}

/// Horizon problem parameters and cost weights.
///
/// Weight vectors run over the state layout `(p, yaw, v, a)`; position
/// weights are deliberately small relative to velocity weights because the
/// references pace the remaining distance to the goal, which is usually
/// far beyond one horizon's reach — the cruise speed is owned by the
/// velocity references and the goal approach by the terminal term.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Number of waypoints sampled toward the goal each tick.
    pub n_waypoints: usize,
    /// Nearest obstacle points per horizon state.
    pub m_nearest: usize,
    /// Distance below which obstacles start to repel, metres.
    pub repulsion_radius: f64,
    /// Softplus barrier sharpness.
    pub barrier_beta: f64,
    /// Scale of the collision term.
    pub collision_weight: f64,
    pub q_goal: [f64; STATE_DIM],
    pub q_wp: [f64; STATE_DIM],
    pub q_u: [f64; 4],
    pub max_iter: usize,
    /// Stop when the per-iteration cost decrease falls below this.
    pub cost_tol: f64,
    pub velocity_weight: VelocityWeight,
    /// Anchor the per-step obstacle queries at the reference (guess)
    /// positions instead of the warm-start rollout.
    pub query_at_guess: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 30,
            dt: 0.033,
            n_waypoints: 30,
            m_nearest: 3,
            repulsion_radius: 1.0,
            barrier_beta: 32.0,
            collision_weight: 1.0,
            q_goal: [0.2, 0.2, 0.2, 0.2, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            q_wp: [0.02, 0.02, 0.02, 0.4, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0],
            q_u: [0.03, 0.03, 0.03, 0.02],
            max_iter: 10,
            cost_tol: 1e-6,
            velocity_weight: VelocityWeight::Directional,
            query_at_guess: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.n_waypoints == 0 {
            return Err(Error::InvalidArgument("horizon and waypoint count must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive"));
        }
        if self.m_nearest == 0 {
            return Err(Error::InvalidArgument("m_nearest must be at least 1"));
        }
        if !(self.repulsion_radius > 0.0 && self.barrier_beta > 0.0) {
            return Err(Error::InvalidArgument("repulsion radius and beta must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1"));
        }
        if !(self.cost_tol >= 0.0) {
            return Err(Error::InvalidArgument("cost_tol must be non-negative"));
        }
        let weights = self
            .q_goal
            .iter()
            .chain(self.q_wp.iter())
            .chain(self.q_u.iter())
            .chain([&self.collision_weight]);
        for w in weights {
            if !(*w >= 0.0) {
                return Err(Error::InvalidArgument("cost weights must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Solver output for one tick.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub inputs: Vec<ControlInput>,
    /// States from rolling `inputs` out of the initial state; dynamics hold
    /// exactly by construction.
    pub states: Vec<QuadState>,
    pub cost: CostBreakdown,
    /// Accepted descent iterations.
    pub iterations: usize,
    pub solve_time_ms: f64,
    /// Full control-step time including perception, set by the pipeline.
    pub total_time_ms: f64,
    /// Smallest obstacle distance over the horizon states.
    pub min_obstacle_distance: f64,
    /// Objective evaluations spent, line search included.
    pub cost_evals: usize,
    /// The last outer pass found no strict decrease.
    pub stalled: bool,
    /// The warm start was non-finite and a hover guess was used.
    pub used_fallback: bool,
    /// Contacts that hit the degenerate-distance floor.
    pub degenerate_contacts: usize,
    pub coarse: CoarseAdjustStats,
}

/// Uniformly sample `n` waypoints from the current position to the goal.
/// Yaw faces the goal so the camera keeps obstacles in view; velocity
/// references point along the line at the desired speed.
pub fn sample_waypoints(
    current: &QuadState,
    goal: &Vector3<f64>,
    v_des: f64,
    n: usize,
) -> Result<WaypointSequence> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two waypoints"));
    }
    let delta = goal - current.position;
    let dist = delta.norm();
    if !(dist > 1e-9) {
        return Err(Error::InvalidArgument("goal coincides with current position"));
    }
    let dir = delta / dist;
    let yaw = dir.y.atan2(dir.x);
    let velocity = dir * v_des;
    let refs = (1..=n)
        .map(|i| Waypoint {
            position: current.position + delta * (i as f64 / n as f64),
            yaw,
            velocity,
        })
        .collect();
    Ok(WaypointSequence::new(refs))
}

/// Map `n` waypoints onto `horizon` per-step references. Identity when the
/// counts match; otherwise each step takes the waypoint nearest in arc
/// length, so resampled references always lie on the waypoint polyline.
pub fn map_horizon_refs(waypoints: &WaypointSequence, horizon: usize) -> Vec<Waypoint> {
    let n = waypoints.len();
    if n == 0 {
        return Vec::new();
    }
    (1..=horizon)
        .map(|h| {
            let i = (h * n).div_ceil(horizon).clamp(1, n);
            waypoints.as_slice()[i - 1]
        })
        .collect()
}

/// Initial guess from the (adjusted) references: positions are taken as
/// given, velocities and accelerations by finite differences, inputs by
/// inverting the actuator gain and clamping to the box.
pub fn warm_start(
    refs: &[Waypoint],
    x_init: &QuadState,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> (Vec<QuadState>, Vec<ControlInput>) {
    let h_len = refs.len();
    let dt = cfg.dt;
    let mut velocities: Vec<Vector3<f64>> = Vec::with_capacity(h_len);
    for h in 0..h_len {
        let v = if h + 1 < h_len {
            (refs[h + 1].position - refs[h].position) / dt
        } else if h_len >= 2 {
            (refs[h_len - 1].position - refs[h_len - 2].position) / dt
        } else {
            (refs[0].position - x_init.position) / dt
        };
        velocities.push(v);
    }
    let mut accels: Vec<Vector3<f64>> = Vec::with_capacity(h_len);
    for h in 0..h_len {
        let mut a = if h + 1 < h_len {
            (velocities[h + 1] - velocities[h]) / dt
        } else {
            Vector3::zeros()
        };
        for i in 0..3 {
            a[i] = a[i].clamp(params.u_min[i], params.u_max[i]);
        }
        accels.push(a);
    }
    let states: Vec<QuadState> = (0..h_len)
        .map(|h| QuadState {
            position: refs[h].position,
            yaw: refs[h].yaw,
            velocity: velocities[h],
            accel: accels[h],
        })
        .collect();
    let inputs: Vec<ControlInput> = (0..h_len)
        .map(|h| {
            ControlInput {
                accel_cmd: accels[h].component_div(&params.accel_gain),
                yaw_cmd: refs[h].yaw,
            }
            .clamped(params)
        })
        .collect();
    (states, inputs)
}

/// The per-tick pipeline with its keyframe memory.
#[derive(Debug)]
pub struct Planner {
    pub mpc: MpcConfig,
    pub perception: PerceptionConfig,
    pub model: ModelParams,
    keyframes: KeyframeManager,
}

impl Planner {
    pub fn new(mpc: MpcConfig, perception: PerceptionConfig, model: ModelParams) -> Result<Self> {
        mpc.validate()?;
        perception.validate()?;
        model.validate()?;
        Ok(Planner { mpc, perception, model, keyframes: KeyframeManager::new() })
    }

    pub fn keyframe_count(&self) -> usize {
        self.keyframes.len()
    }

    /// One control tick: sample waypoints toward the goal, build the dual
    /// trees from the frame, coarse-adjust, warm-start, solve, and return
    /// the first input together with the full diagnostics.
    pub fn control_step(
        &mut self,
        x_now: &QuadState,
        frame: &DepthImage,
        goal: &Vector3<f64>,
        v_des: f64,
    ) -> Result<(ControlInput, MpcSolution, DualTrees)> {
        let sw = Stopwatch::start();
        let (tw, th) = (self.perception.target_width, self.perception.target_height);
        let owned;
        let frame = if frame.intrinsics.width == tw && frame.intrinsics.height == th {
            frame
        } else {
            owned = downsample(frame, tw, th)?;
            &owned
        };

        let waypoints = sample_waypoints(x_now, goal, v_des, self.mpc.n_waypoints)?;
        let trees = build_dual_trees(frame, x_now, &self.perception, &mut self.keyframes)?;
        let (adjusted, coarse) = if self.perception.edge_tree {
            coarse_adjust(&waypoints, &trees, &trees.dilated_frame)
        } else {
            (waypoints, CoarseAdjustStats::default())
        };
        let refs = map_horizon_refs(&adjusted, self.mpc.horizon);
        let (_state_guess, input_guess) = warm_start(&refs, x_now, &self.mpc, &self.model);
        let mut solution = solve(x_now, &refs, &trees, &input_guess, &self.mpc, &self.model);
        solution.coarse = coarse;
        solution.total_time_ms = sw.elapsed_ms();
        let first = solution.inputs[0];
        Ok((first, solution, trees))
    }
}
