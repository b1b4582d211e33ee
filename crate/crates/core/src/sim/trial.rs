//! Closed-loop trials and the benchmark matrix.
//!
//! A trial is strictly sequential: render a frame from the (optionally
//! noised) pose, run one control step, apply the first input to the
//! ground-truth model, and check the outcome. All randomness flows from
//! tagged substreams of the trial seed, so a trial reproduces bit-exactly.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::depth::{camera_pose, CameraIntrinsics};
use crate::dynamics::{rk4_step, ControlInput, ModelParams, QuadState};
use crate::mpc::{CostBreakdown, MpcConfig, Planner};
use crate::perception::PerceptionConfig;
use crate::rng::SplitMix64;
use crate::sim::{check_collision, render_depth, Scene};
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Per-trial protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub v_des: f64,
    /// Reaching this distance from the goal counts as success.
    pub success_radius: f64,
    pub quad_radius: f64,
    /// Wall of simulated seconds; defaults to three times the straight-line
    /// flight time when unset.
    pub timeout: Option<f64>,
    pub control_rate_hz: f64,
    pub depth_noise_sigma: f64,
    pub pos_noise_sigma: f64,
    /// Fractional ground-truth parameter perturbation (0 disables).
    pub model_perturbation: f64,
    pub camera_hfov_deg: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            v_des: 3.0,
            success_radius: 5.0,
            quad_radius: 0.1,
            timeout: None,
            control_rate_hz: 30.0,
            depth_noise_sigma: 0.0,
            pos_noise_sigma: 0.0,
            model_perturbation: 0.0,
            camera_hfov_deg: 87.0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_des > 0.0 && self.control_rate_hz > 0.0) {
            return Err(Error::InvalidArgument("speed and control rate must be positive"));
        }
        if !(self.success_radius > 0.0 && self.quad_radius > 0.0) {
            return Err(Error::InvalidArgument("radii must be positive"));
        }
        if self.depth_noise_sigma < 0.0 || self.pos_noise_sigma < 0.0 || self.model_perturbation < 0.0 {
            return Err(Error::InvalidArgument("noise levels must be non-negative"));
        }
        if !(self.camera_hfov_deg > 0.0 && self.camera_hfov_deg < 180.0) {
            return Err(Error::InvalidArgument("camera field of view out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Success,
    Collision,
    Timeout,
}

/// Diagnostics for one control tick.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub t: f64,
    /// Ground-truth state when the tick's control was computed.
    pub state: QuadState,
    /// The applied first input.
    pub input: ControlInput,
    pub solve_ms: f64,
    pub control_ms: f64,
    pub iterations: usize,
    pub cost: CostBreakdown,
    pub min_obstacle_distance: f64,
    pub used_fallback: bool,
}

/// Closed-loop trial outcome and trace.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub outcome: TrialOutcome,
    pub ticks: Vec<TickRecord>,
    /// Smallest centre-to-surface distance seen; infinite in empty scenes.
    pub min_clearance: f64,
    pub mean_forward_speed: f64,
    /// Simulated seconds until termination.
    pub elapsed: f64,
}

impl TrialResult {
    pub fn success(&self) -> bool {
        self.outcome == TrialOutcome::Success
    }

    pub fn collided(&self) -> bool {
        self.outcome == TrialOutcome::Collision
    }

    pub fn timed_out(&self) -> bool {
        self.outcome == TrialOutcome::Timeout
    }

    pub fn solver_fallbacks(&self) -> usize {
        self.ticks.iter().filter(|t| t.used_fallback).count()
    }
}

/// Run one closed-loop trial. Deterministic for a fixed `(scene, seed)`
/// pair; solver fallbacks are recorded, not fatal.
pub fn run_trial(
    scene: &Scene,
    trial: &TrialConfig,
    mpc: &MpcConfig,
    perception: &PerceptionConfig,
    model: &ModelParams,
    seed: u64,
) -> Result<TrialResult> {
    trial.validate()?;
    let dt = 1.0 / trial.control_rate_hz;
    let straight = (scene.goal - scene.start).norm();
    let timeout = trial.timeout.unwrap_or(3.0 * straight / trial.v_des);
    let max_ticks = (timeout / dt).ceil() as usize;

    let ground_truth = if trial.model_perturbation > 0.0 {
        model.perturbed(trial.model_perturbation, &mut SplitMix64::substream(seed, 0x4d4f444c))
    } else {
        model.clone()
    };
    let mut planner = Planner::new(mpc.clone(), perception.clone(), model.clone())?;
    let intrinsics = CameraIntrinsics::with_hfov(
        perception.target_width,
        perception.target_height,
        trial.camera_hfov_deg.to_radians(),
    );

    let to_goal = scene.goal - scene.start;
    let mut x = QuadState::at_rest(scene.start, to_goal.y.atan2(to_goal.x));
    let mut pos_noise = SplitMix64::substream(seed, 0x504f5345);

    let mut ticks: Vec<TickRecord> = Vec::new();
    let mut min_clearance = f64::INFINITY;
    let mut outcome = TrialOutcome::Timeout;
    let mut elapsed = timeout;

    for tick in 0..max_ticks {
        let t = tick as f64 * dt;
        min_clearance = min_clearance.min(scene.signed_distance(&x.position));
        if check_collision(scene, &x.position, trial.quad_radius) {
            outcome = TrialOutcome::Collision;
            elapsed = t;
            break;
        }
        if (x.position - scene.goal).norm() <= trial.success_radius {
            outcome = TrialOutcome::Success;
            elapsed = t;
            break;
        }

        // The planner sees the noised estimate; physics stays exact.
        let mut x_hat = x;
        if trial.pos_noise_sigma > 0.0 {
            x_hat.position += Vector3::new(pos_noise.normal(), pos_noise.normal(), pos_noise.normal())
                * trial.pos_noise_sigma;
        }
        let pose = camera_pose(&x_hat.position, x_hat.yaw);
        let frame = render_depth(
            scene,
            &pose,
            intrinsics,
            perception.max_range,
            trial.depth_noise_sigma,
            seed ^ (tick as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            t,
        );
        let (input, solution, _trees) = planner.control_step(&x_hat, &frame, &scene.goal, trial.v_des)?;
        ticks.push(TickRecord {
            t,
            state: x,
            input,
            solve_ms: solution.solve_time_ms,
            control_ms: solution.total_time_ms,
            iterations: solution.iterations,
            cost: solution.cost,
            min_obstacle_distance: solution.min_obstacle_distance,
            used_fallback: solution.used_fallback,
        });
        x = rk4_step(&x, &input, dt, &ground_truth);
    }

    let mean_forward_speed = if ticks.is_empty() {
        0.0
    } else {
        ticks.iter().map(|r| r.state.forward_speed()).sum::<f64>() / ticks.len() as f64
    };
    Ok(TrialResult { outcome, ticks, min_clearance, mean_forward_speed, elapsed })
}

/// One benchmark column: a named combination of perception toggles, the
/// nearest-point budget, and input noise.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub name: String,
    pub edge_tree: bool,
    pub multi_frame: bool,
    pub m_nearest: Option<usize>,
    pub depth_noise: Option<f64>,
    pub pos_noise: Option<f64>,
}

impl AblationSpec {
    fn named(name: &str) -> Self {
        AblationSpec {
            name: String::from(name),
            edge_tree: true,
            multi_frame: true,
            m_nearest: None,
            depth_noise: None,
            pos_noise: None,
        }
    }

    /// Clean input, everything enabled.
    pub fn baseline() -> Self {
        Self::named("baseline")
    }

    /// Gaussian depth and position noise at the given sigma.
    pub fn noisy(sigma: f64) -> Self {
        AblationSpec { depth_noise: Some(sigma), pos_noise: Some(sigma), ..Self::named("noisy") }
    }

    /// Coarse adjustment and edge tree disabled.
    pub fn without_edge_tree() -> Self {
        AblationSpec { edge_tree: false, ..Self::named("no_edge") }
    }

    /// Keyframe memory disabled.
    pub fn single_frame() -> Self {
        AblationSpec { multi_frame: false, ..Self::named("single_frame") }
    }

    /// Only the single nearest obstacle point per state.
    pub fn single_nearest() -> Self {
        AblationSpec { m_nearest: Some(1), ..Self::named("single_nearest") }
    }

    pub fn apply(
        &self,
        trial: &TrialConfig,
        mpc: &MpcConfig,
        perception: &PerceptionConfig,
    ) -> (TrialConfig, MpcConfig, PerceptionConfig) {
        let mut t = trial.clone();
        let mut m = mpc.clone();
        let mut p = perception.clone();
        p.edge_tree &= self.edge_tree;
        p.multi_frame &= self.multi_frame;
        if let Some(mn) = self.m_nearest {
            m.m_nearest = mn;
        }
        if let Some(s) = self.depth_noise {
            t.depth_noise_sigma = s;
        }
        if let Some(s) = self.pos_noise {
            t.pos_noise_sigma = s;
        }
        (t, m, p)
    }
}

/// Aggregated outcomes for one `(speed, ablation)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub speed: f64,
    pub ablation: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Pooled per-tick forward speeds.
    pub mean_speed: f64,
    pub p25_speed: f64,
    pub p75_speed: f64,
    pub mean_solve_ms: f64,
    pub mean_iters: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// The trial seed depends on the speed and trial index but not on the
/// ablation, so ablation columns face identical worlds and noise draws.
pub fn trial_seed(base_seed: u64, speed: f64, trial_idx: usize) -> u64 {
    base_seed ^ speed.to_bits().rotate_left(17) ^ (trial_idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Run all trials of one cell. Trial `i` flies scene `i % scenes.len()`.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    scenes: &[Scene],
    speed: f64,
    ablation: &AblationSpec,
    trials_per_cell: usize,
    trial: &TrialConfig,
    mpc: &MpcConfig,
    perception: &PerceptionConfig,
    model: &ModelParams,
    base_seed: u64,
) -> Result<CellResult> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one scene"));
    }
    let (mut t, m, p) = ablation.apply(trial, mpc, perception);
    t.v_des = speed;
    let mut successes = 0;
    let mut speeds: Vec<f64> = Vec::new();
    let mut solve_ms_sum = 0.0;
    let mut iter_sum = 0usize;
    let mut tick_count = 0usize;
    for i in 0..trials_per_cell {
        let scene = &scenes[i % scenes.len()];
        let result = run_trial(scene, &t, &m, &p, model, trial_seed(base_seed, speed, i))?;
        successes += result.success() as usize;
        for rec in &result.ticks {
            speeds.push(rec.state.forward_speed());
            solve_ms_sum += rec.solve_ms;
            iter_sum += rec.iterations;
        }
        tick_count += result.ticks.len();
    }
    speeds.sort_by(f64::total_cmp);
    let ticks = tick_count.max(1) as f64;
    Ok(CellResult {
        speed,
        ablation: ablation.name.clone(),
        trials: trials_per_cell,
        successes,
        success_rate: if trials_per_cell == 0 { 0.0 } else { successes as f64 / trials_per_cell as f64 },
        mean_speed: speeds.iter().sum::<f64>() / speeds.len().max(1) as f64,
        p25_speed: percentile(&speeds, 0.25),
        p75_speed: percentile(&speeds, 0.75),
        mean_solve_ms: solve_ms_sum / ticks,
        mean_iters: iter_sum as f64 / ticks,
    })
}

/// Run the full `speeds x ablations` matrix serially. Cells are
/// independent; callers that want parallelism can fan out over
/// [`run_cell`] and merge in any order.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    scenes: &[Scene],
    speeds: &[f64],
    ablations: &[AblationSpec],
    trials_per_cell: usize,
    trial: &TrialConfig,
    mpc: &MpcConfig,
    perception: &PerceptionConfig,
    model: &ModelParams,
    base_seed: u64,
) -> Result<Vec<CellResult>> {
    let mut cells = Vec::with_capacity(speeds.len() * ablations.len());
    for speed in speeds {
        for ablation in ablations {
            cells.push(run_cell(
                scenes,
                *speed,
                ablation,
                trials_per_cell,
                trial,
                mpc,
                perception,
                model,
                base_seed,
            )?);
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Aabb, Obstacle};
    use alloc::vec;

    fn empty_scene() -> Scene {
        Scene {
            obstacles: vec![],
            bounds: Aabb::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(20.0, 5.0, 3.0)).unwrap(),
            start: Vector3::new(0.0, 0.0, 1.5),
            goal: Vector3::new(12.0, 0.0, 1.5),
            seed: 1,
        }
    }

    fn quick_trial() -> TrialConfig {
        TrialConfig { success_radius: 1.0, ..TrialConfig::default() }
    }

    #[test]
    fn empty_scene_flies_straight_to_success() {
        let result = run_trial(
            &empty_scene(),
            &quick_trial(),
            &MpcConfig::default(),
            &PerceptionConfig::default(),
            &ModelParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(result.outcome, TrialOutcome::Success);
        assert_eq!(result.min_clearance, f64::INFINITY);
        assert!(result.mean_forward_speed > 1.0, "{}", result.mean_forward_speed);
        for rec in &result.ticks {
            assert!(rec.state.position.y.abs() < 0.2, "drifted off the line");
            assert!((rec.state.position.z - 1.5).abs() < 0.2, "drifted off altitude");
        }
    }

    #[test]
    fn start_inside_obstacle_is_immediate_collision() {
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Cylinder { x: 0.0, y: 0.0, radius: 0.5, height: 3.0 });
        let result = run_trial(
            &scene,
            &quick_trial(),
            &MpcConfig::default(),
            &PerceptionConfig::default(),
            &ModelParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(result.outcome, TrialOutcome::Collision);
        assert!(result.ticks.is_empty());
        assert!(result.min_clearance < 0.0);
    }

    #[test]
    fn unreachable_goal_times_out() {
        let scene = empty_scene();
        let trial = TrialConfig { timeout: Some(0.2), success_radius: 0.5, ..TrialConfig::default() };
        let result = run_trial(
            &scene,
            &trial,
            &MpcConfig::default(),
            &PerceptionConfig::default(),
            &ModelParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(result.outcome, TrialOutcome::Timeout);
    }

    #[test]
    fn trials_reproduce_bit_identically() {
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Cylinder { x: 6.0, y: 0.2, radius: 0.3, height: 3.0 });
        let trial = TrialConfig {
            success_radius: 1.0,
            depth_noise_sigma: 0.05,
            pos_noise_sigma: 0.05,
            ..TrialConfig::default()
        };
        let run = || {
            run_trial(
                &scene,
                &trial,
                &MpcConfig::default(),
                &PerceptionConfig::default(),
                &ModelParams::default(),
                11,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.ticks.len(), b.ticks.len());
        for (ra, rb) in a.ticks.iter().zip(&b.ticks) {
            assert_eq!(ra.state, rb.state);
            assert_eq!(ra.input, rb.input);
            assert_eq!(ra.iterations, rb.iterations);
        }
    }

    #[test]
    fn perturbed_ground_truth_still_flies() {
        let trial = TrialConfig {
            success_radius: 1.0,
            model_perturbation: 0.2,
            ..TrialConfig::default()
        };
        let run = || {
            run_trial(
                &empty_scene(),
                &trial,
                &MpcConfig::default(),
                &PerceptionConfig::default(),
                &ModelParams::default(),
                21,
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a.outcome, TrialOutcome::Success);
        // The perturbation draw is part of the seeded stream.
        let b = run();
        assert_eq!(a.ticks.len(), b.ticks.len());
        for (ra, rb) in a.ticks.iter().zip(&b.ticks) {
            assert_eq!(ra.state, rb.state);
        }
    }

    #[test]
    fn benchmark_shape_and_empty_matrix() {
        let scenes = vec![empty_scene()];
        let speeds = [2.0, 3.0];
        let ablations = [AblationSpec::baseline()];
        let cells = run_benchmark(
            &scenes,
            &speeds,
            &ablations,
            0,
            &quick_trial(),
            &MpcConfig::default(),
            &PerceptionConfig::default(),
            &ModelParams::default(),
            5,
        )
        .unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert_eq!(c.trials, 0);
            assert_eq!(c.success_rate, 0.0);
        }
    }

    #[test]
    fn benchmark_empty_scenes_all_succeed() {
        let scenes = vec![empty_scene()];
        let cells = run_benchmark(
            &scenes,
            &[3.0],
            &[AblationSpec::baseline(), AblationSpec::single_nearest()],
            2,
            &quick_trial(),
            &MpcConfig::default(),
            &PerceptionConfig::default(),
            &ModelParams::default(),
            5,
        )
        .unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert_eq!(c.success_rate, 1.0, "{}", c.ablation);
            assert!(c.mean_speed > 0.5);
        }
    }

    #[test]
    fn ablation_seeds_match_across_columns() {
        assert_eq!(trial_seed(9, 3.0, 4), trial_seed(9, 3.0, 4));
        assert_ne!(trial_seed(9, 3.0, 4), trial_seed(9, 5.0, 4));
        assert_ne!(trial_seed(9, 3.0, 4), trial_seed(9, 3.0, 5));
    }

    #[test]
    fn outcomes_are_mutually_exclusive() {
        for outcome in [TrialOutcome::Success, TrialOutcome::Collision, TrialOutcome::Timeout] {
            let r = TrialResult {
                outcome,
                ticks: vec![],
                min_clearance: f64::INFINITY,
                mean_forward_speed: 0.0,
                elapsed: 0.0,
            };
            let flags = [r.success(), r.collided(), r.timed_out()];
            assert_eq!(flags.iter().filter(|f| **f).count(), 1);
        }
    }
}
