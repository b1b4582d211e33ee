//! Gauss-Newton shooting solver with box-projected inputs.
//!
//! States are eliminated by shooting — every iterate is rolled out through
//! the integrator, so dynamics hold exactly at all times. Each iteration
//! runs an iLQR-style backward pass over the analytic step sensitivities
//! (exact Hessians for the quadratic terms, a positive-semidefinite
//! Gauss-Newton approximation for the collision barrier) and a forward
//! line search that clamps inputs to the box and only accepts a cost
//! decrease, so the method stays a descent method within its fixed
//! iteration budget.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::dynamics::{self, ControlInput, ModelParams, QuadState, INPUT_DIM, STATE_DIM};
use crate::mpc::cost::{
    self, collision_cost_gradient, sigmoid, total_cost_fixed, velocity_weights,
    DEGENERATE_DISTANCE,
};
use crate::mpc::{MpcConfig, MpcSolution, Waypoint};
use crate::perception::{query_obstacles, DualTrees};
use crate::time::Stopwatch;

#[allow(unused_imports)]
use num_traits::Float;

type ObstacleSets = Vec<Vec<(Vector3<f64>, f64)>>;
type StateVec = SVector<f64, STATE_DIM>;
type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
type GainMat = SMatrix<f64, INPUT_DIM, STATE_DIM>;
type InputVec = SVector<f64, INPUT_DIM>;
type InputMat = SMatrix<f64, INPUT_DIM, INPUT_DIM>;

/// Objective gradient with respect to the inputs: one forward pass with
/// step sensitivities, one backward adjoint sweep. Collision terms
/// contribute their position gradient with frozen velocity weights.
/// Retained for diagnostics and derivative checks; the solver itself runs
/// the second-order recursion below.
#[cfg(test)]
pub(crate) fn gradient_for_tests(
    x_init: &QuadState,
    inputs: &[ControlInput],
    refs: &[Waypoint],
    obstacles: &ObstacleSets,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Vec<InputVec> {
    let h_len = inputs.len();
    let mut states = Vec::with_capacity(h_len);
    let mut a_mats = Vec::with_capacity(h_len);
    let mut b_mats = Vec::with_capacity(h_len);
    let mut x = *x_init;
    for u in inputs {
        let (next, a, b) = dynamics::rk4_step_with_sensitivity(&x, u, cfg.dt, params);
        states.push(next);
        a_mats.push(a);
        b_mats.push(b);
        x = next;
    }
    let stage_x_grad = |h: usize| state_cost_gradient(&states[h], h, h_len, refs, &obstacles[h], cfg);
    let stage_u_grad = |h: usize| {
        let uv = inputs[h].to_vector();
        InputVec::from_fn(|i, _| 2.0 * cfg.q_u[i] * uv[i])
    };
    let mut grads = vec![InputVec::zeros(); h_len];
    let mut lambda = stage_x_grad(h_len - 1);
    grads[h_len - 1] = stage_u_grad(h_len - 1) + b_mats[h_len - 1].transpose() * lambda;
    for h in (0..h_len - 1).rev() {
        lambda = a_mats[h + 1].transpose() * lambda + stage_x_grad(h);
        grads[h] = stage_u_grad(h) + b_mats[h].transpose() * lambda;
    }
    grads
}

/// Gradient of all state-attached cost at step `h` (tracking, terminal on
/// the last step, collision with frozen velocity weights).
fn state_cost_gradient(
    x: &QuadState,
    h: usize,
    h_len: usize,
    refs: &[Waypoint],
    obstacles: &[(Vector3<f64>, f64)],
    cfg: &MpcConfig,
) -> StateVec {
    let mut g = StateVec::zeros();
    let res = cost::state_residual(x, &refs[h]);
    for i in 0..STATE_DIM {
        g[i] += 2.0 * cfg.q_wp[i] * res[i];
        if h == h_len - 1 {
            g[i] += 2.0 * cfg.q_goal[i] * res[i];
        }
    }
    let (cg, _) = collision_cost_gradient(&x.position, &x.velocity, obstacles, cfg);
    g[0] += cg.x;
    g[1] += cg.y;
    g[2] += cg.z;
    g
}

/// Hessian of the state-attached cost at step `h`. Quadratic terms are
/// exact; the collision barrier keeps only its positive-semidefinite
/// radial part (Gauss-Newton).
fn state_cost_hessian(
    x: &QuadState,
    h: usize,
    h_len: usize,
    obstacles: &[(Vector3<f64>, f64)],
    cfg: &MpcConfig,
) -> StateMat {
    let mut hess = StateMat::zeros();
    for i in 0..STATE_DIM {
        hess[(i, i)] = 2.0 * cfg.q_wp[i];
        if h == h_len - 1 {
            hess[(i, i)] += 2.0 * cfg.q_goal[i];
        }
    }
    let weights = velocity_weights(&x.position, &x.velocity, obstacles, cfg.velocity_weight);
    for (w, (o, _)) in weights.iter().zip(obstacles) {
        let diff = x.position - o;
        let d = diff.norm().max(DEGENERATE_DISTANCE);
        let z = cfg.barrier_beta * (cfg.repulsion_radius - d);
        let s = sigmoid(z);
        let curv = cfg.collision_weight * w * cfg.barrier_beta * cfg.barrier_beta * s * (1.0 - s);
        let dir = diff / d;
        for r in 0..3 {
            for c in 0..3 {
                hess[(r, c)] += curv * dir[r] * dir[c];
            }
        }
    }
    hess
}

struct BackwardPass {
    feedforward: Vec<InputVec>,
    feedback: Vec<GainMat>,
}

/// iLQR backward recursion. Returns `None` when the regularised input
/// Hessian loses positive definiteness at the given `mu`.
#[allow(clippy::too_many_arguments)]
fn backward_pass(
    states: &[QuadState],
    inputs: &[ControlInput],
    a_mats: &[StateMat],
    b_mats: &[SMatrix<f64, STATE_DIM, INPUT_DIM>],
    refs: &[Waypoint],
    obstacles: &ObstacleSets,
    cfg: &MpcConfig,
    mu: f64,
) -> Option<BackwardPass> {
    let h_len = inputs.len();
    let mut feedforward = vec![InputVec::zeros(); h_len];
    let mut feedback = vec![GainMat::zeros(); h_len];
    let mut s_vec = StateVec::zeros();
    let mut s_mat = StateMat::zeros();
    let r_hess = InputMat::from_fn(|i, j| if i == j { 2.0 * cfg.q_u[i] } else { 0.0 });

    for h in (0..h_len).rev() {
        // Value expansion of everything attached to the post-step state.
        let g_y = state_cost_gradient(&states[h], h, h_len, refs, &obstacles[h], cfg) + s_vec;
        let h_y = state_cost_hessian(&states[h], h, h_len, &obstacles[h], cfg) + s_mat;

        let uv = inputs[h].to_vector();
        let q_u = InputVec::from_fn(|i, _| 2.0 * cfg.q_u[i] * uv[i]) + b_mats[h].transpose() * g_y;
        let q_uu = r_hess + b_mats[h].transpose() * h_y * b_mats[h];
        let q_ux = b_mats[h].transpose() * h_y * a_mats[h];

        // Scale-invariant Levenberg regularisation.
        let reg = mu * (q_uu.trace() / INPUT_DIM as f64).max(1e-300);
        let q_uu_reg = q_uu + InputMat::identity() * reg;
        let chol = q_uu_reg.cholesky()?;
        let k_ff = -chol.solve(&q_u);
        let k_fb = -chol.solve(&q_ux);

        feedforward[h] = k_ff;
        feedback[h] = k_fb;

        let q_x = a_mats[h].transpose() * g_y;
        let q_xx = a_mats[h].transpose() * h_y * a_mats[h];
        s_vec = q_x
            + k_fb.transpose() * q_uu * k_ff
            + k_fb.transpose() * q_u
            + q_ux.transpose() * k_ff;
        s_mat = q_xx
            + k_fb.transpose() * q_uu * k_fb
            + k_fb.transpose() * q_ux
            + q_ux.transpose() * k_fb;
        // Keep the propagated Hessian symmetric against rounding drift.
        s_mat = (s_mat + s_mat.transpose()) * 0.5;
    }
    Some(BackwardPass { feedforward, feedback })
}

/// Closed-loop forward rollout of the candidate policy with box clamping.
fn forward_pass(
    x_init: &QuadState,
    states: &[QuadState],
    inputs: &[ControlInput],
    pass: &BackwardPass,
    alpha: f64,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> (Vec<ControlInput>, Vec<QuadState>) {
    let h_len = inputs.len();
    let mut new_inputs = Vec::with_capacity(h_len);
    let mut new_states = Vec::with_capacity(h_len);
    let mut prev = *x_init;
    for h in 0..h_len {
        let nominal_prev = if h == 0 { *x_init } else { states[h - 1] };
        let mut dx = prev.to_vector() - nominal_prev.to_vector();
        dx[3] = crate::wrap_angle(dx[3]);
        let u = inputs[h].to_vector() + pass.feedforward[h] * alpha + pass.feedback[h] * dx;
        let u = ControlInput::from_vector(&u).clamped(params);
        let x = dynamics::rk4_step(&prev, &u, cfg.dt, params);
        new_inputs.push(u);
        new_states.push(x);
        prev = x;
    }
    (new_inputs, new_states)
}

/// Minimise the horizon objective from the warm start. Obstacle
/// correspondences are queried once at the warm-start rollout and held
/// fixed, so the landscape cannot shift under the iterates; the returned
/// cost is never above the warm-start cost.
pub fn solve(
    x_init: &QuadState,
    refs: &[Waypoint],
    trees: &DualTrees,
    warm_inputs: &[ControlInput],
    cfg: &MpcConfig,
    params: &ModelParams,
) -> MpcSolution {
    let clamped: Vec<ControlInput> = warm_inputs.iter().map(|u| u.clamped(params)).collect();
    let obstacles: ObstacleSets = if cfg.query_at_guess {
        refs.iter()
            .map(|r| query_obstacles(trees, &r.position, cfg.m_nearest, true))
            .collect()
    } else {
        dynamics::rollout(x_init, &clamped, cfg.dt, params)
            .iter()
            .map(|x| query_obstacles(trees, &x.position, cfg.m_nearest, true))
            .collect()
    };
    let mut solution = solve_fixed(x_init, refs, obstacles, &clamped, cfg, params);
    solution.min_obstacle_distance = solution
        .states
        .iter()
        .filter_map(|x| query_obstacles(trees, &x.position, 1, true).first().map(|o| o.1))
        .fold(f64::INFINITY, f64::min);
    solution
}

/// [`solve`] against an explicit per-step obstacle set; the entry point
/// for matched-objective comparisons of different warm starts.
pub fn solve_fixed(
    x_init: &QuadState,
    refs: &[Waypoint],
    mut obstacles: ObstacleSets,
    warm_inputs: &[ControlInput],
    cfg: &MpcConfig,
    params: &ModelParams,
) -> MpcSolution {
    let sw = Stopwatch::start();
    debug_assert_eq!(refs.len(), warm_inputs.len());
    debug_assert_eq!(refs.len(), obstacles.len());

    let mut inputs: Vec<ControlInput> = warm_inputs.iter().map(|u| u.clamped(params)).collect();
    let mut states = dynamics::rollout(x_init, &inputs, cfg.dt, params);
    let (mut breakdown, mut degenerate) =
        total_cost_fixed(&states, &inputs, refs, &obstacles, cfg);

    let mut used_fallback = false;
    let mut cost_evals = 1;
    if !breakdown.total().is_finite() {
        // Hover guess: zero inputs, correspondences cleared of any
        // non-finite garbage the warm start may have queried with.
        used_fallback = true;
        inputs = vec![ControlInput::zero().clamped(params); refs.len()];
        states = dynamics::rollout(x_init, &inputs, cfg.dt, params);
        for set in obstacles.iter_mut() {
            set.retain(|(o, d)| o.iter().all(|c| c.is_finite()) && d.is_finite());
        }
        let (b, d) = total_cost_fixed(&states, &inputs, refs, &obstacles, cfg);
        breakdown = b;
        degenerate = d;
        cost_evals += 1;
    }

    let decrease_floor = cfg.cost_tol;
    let mut cost_now = breakdown.total();
    let mut iterations = 0;
    let mut stalled = false;
    let mut mu = 1e-6;
    // Sensitivities are only rebuilt after an accepted step.
    let mut sens: Option<(Vec<StateMat>, Vec<SMatrix<f64, STATE_DIM, INPUT_DIM>>)> = None;

    if cost_now.is_finite() {
        // Levenberg-Marquardt style: every direction attempt counts as an
        // iteration, rejected trials raise the regularisation.
        while iterations < cfg.max_iter {
            iterations += 1;
            if sens.is_none() {
                let mut a_mats = Vec::with_capacity(inputs.len());
                let mut b_mats = Vec::with_capacity(inputs.len());
                let mut x = *x_init;
                for u in &inputs {
                    let (next, a, b) = dynamics::rk4_step_with_sensitivity(&x, u, cfg.dt, params);
                    a_mats.push(a);
                    b_mats.push(b);
                    x = next;
                }
                sens = Some((a_mats, b_mats));
            }
            let (a_mats, b_mats) = sens.as_ref().expect("sensitivities present");

            let Some(pass) =
                backward_pass(&states, &inputs, a_mats, b_mats, refs, &obstacles, cfg, mu)
            else {
                mu = (mu * 10.0).min(1e8);
                stalled = true;
                continue;
            };
            // Stationary warm start: nothing to improve.
            let step_norm = pass
                .feedforward
                .iter()
                .map(|k| k.amax())
                .fold(0.0, f64::max);
            if step_norm < 1e-10 {
                iterations -= 1;
                break;
            }
            let mut improved = None;
            for alpha in [1.0, 0.5, 0.25, 0.125] {
                let (cand_u, cand_x) =
                    forward_pass(x_init, &states, &inputs, &pass, alpha, cfg, params);
                let (b, d) = total_cost_fixed(&cand_x, &cand_u, refs, &obstacles, cfg);
                cost_evals += 1;
                if b.total().is_finite() && b.total() < cost_now {
                    improved = Some((cand_u, cand_x, b, d));
                    break;
                }
            }
            if let Some((cand_u, cand_x, b, d)) = improved {
                let decrease = cost_now - b.total();
                inputs = cand_u;
                states = cand_x;
                breakdown = b;
                degenerate = d;
                cost_now = b.total();
                sens = None;
                stalled = false;
                mu = (mu * 0.5).max(1e-9);
                if decrease < decrease_floor {
                    break;
                }
            } else {
                stalled = true;
                mu *= 10.0;
                if mu > 1e8 {
                    break;
                }
            }
        }
    }

    // Nearest fixed-correspondence distance; `solve` refines this against
    // the live trees.
    let min_obstacle_distance = states
        .iter()
        .zip(&obstacles)
        .flat_map(|(x, set)| set.iter().map(move |(o, _)| (x.position - o).norm()))
        .fold(f64::INFINITY, f64::min);

    MpcSolution {
        inputs,
        states,
        cost: breakdown,
        iterations,
        solve_time_ms: sw.elapsed_ms(),
        total_time_ms: 0.0,
        min_obstacle_distance,
        cost_evals,
        stalled,
        used_fallback,
        degenerate_contacts: degenerate,
        coarse: Default::default(),
    }
}
