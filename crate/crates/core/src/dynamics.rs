//! Point-mass quadrotor model with first-order actuator lag.
//!
//! The same integrator serves as the controller's prediction model and the
//! simulator's ground truth, so closed-loop failures can be attributed to
//! planning rather than model mismatch. Commanded acceleration is net of
//! gravity (the low-level controller compensates), so hover is zero input.

use alloc::vec::Vec;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::wrap_angle;

pub const STATE_DIM: usize = 10;
pub const INPUT_DIM: usize = 4;

// State vector layout.
const P: usize = 0;
const PHI: usize = 3;
const V: usize = 4;
const A: usize = 7;

/// Full state: inertial position, yaw, velocity, and achieved acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub position: Vector3<f64>,
    /// Yaw in `(-pi, pi]`.
    pub yaw: f64,
    pub velocity: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl QuadState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        QuadState { position, yaw: wrap_angle(yaw), velocity: Vector3::zeros(), accel: Vector3::zeros() }
    }

    pub fn to_vector(&self) -> SVector<f64, STATE_DIM> {
        let mut x: SVector<f64, STATE_DIM> = SVector::zeros();
        x.fixed_rows_mut::<3>(P).copy_from(&self.position);
        x[PHI] = self.yaw;
        x.fixed_rows_mut::<3>(V).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(A).copy_from(&self.accel);
        x
    }

    pub fn from_vector(x: &SVector<f64, STATE_DIM>) -> Self {
        QuadState {
            position: x.fixed_rows::<3>(P).into(),
            yaw: x[PHI],
            velocity: x.fixed_rows::<3>(V).into(),
            accel: x.fixed_rows::<3>(A).into(),
        }
    }

    /// World-frame unit vector of the current heading, horizontal plane.
    pub fn forward_axis(&self) -> Vector3<f64> {
        #[allow(unused_imports)]
        use num_traits::Float;
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Velocity component along the heading.
    pub fn forward_speed(&self) -> f64 {
        self.velocity.dot(&self.forward_axis())
    }
}

/// Commanded net acceleration plus yaw setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub accel_cmd: Vector3<f64>,
    pub yaw_cmd: f64,
}

impl ControlInput {
    pub fn zero() -> Self {
        ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: 0.0 }
    }

    pub fn to_vector(&self) -> SVector<f64, INPUT_DIM> {
        SVector::from([self.accel_cmd.x, self.accel_cmd.y, self.accel_cmd.z, self.yaw_cmd])
    }

    pub fn from_vector(u: &SVector<f64, INPUT_DIM>) -> Self {
        ControlInput { accel_cmd: Vector3::new(u[0], u[1], u[2]), yaw_cmd: u[3] }
    }

    /// Componentwise projection onto the input box.
    pub fn clamped(&self, params: &ModelParams) -> Self {
        let mut u = self.to_vector();
        for i in 0..INPUT_DIM {
            u[i] = u[i].clamp(params.u_min[i], params.u_max[i]);
        }
        ControlInput::from_vector(&u)
    }
}

/// Model constants: body-frame linear damping, actuator gains and time
/// constants, and the input box. Yaw command bounds default to infinite;
/// the yaw time constant already limits the achievable rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub damping: Vector3<f64>,
    pub accel_gain: Vector3<f64>,
    pub accel_tau: Vector3<f64>,
    pub yaw_gain: f64,
    pub yaw_tau: f64,
    pub u_min: [f64; INPUT_DIM],
    pub u_max: [f64; INPUT_DIM],
    pub gravity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            damping: Vector3::new(0.10, 0.10, 0.20),
            accel_gain: Vector3::new(1.0, 1.0, 1.0),
            accel_tau: Vector3::new(0.15, 0.15, 0.15),
            yaw_gain: 1.0,
            yaw_tau: 0.3,
            u_min: [-12.0, -12.0, -8.0, f64::NEG_INFINITY],
            u_max: [12.0, 12.0, 15.0, f64::INFINITY],
            gravity: 9.81,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.accel_tau.min() > 0.0 && self.yaw_tau > 0.0) {
            return Err(crate::Error::InvalidArgument("time constants must be positive"));
        }
        for i in 0..INPUT_DIM {
            if !(self.u_min[i] < self.u_max[i]) {
                return Err(crate::Error::InvalidArgument("u_min must be below u_max"));
            }
        }
        Ok(())
    }

    /// Scale every dynamic constant by an independent factor in
    /// `[1-frac, 1+frac]`; used by the simulator's model-mismatch mode.
    pub fn perturbed(&self, frac: f64, rng: &mut crate::rng::SplitMix64) -> Self {
        let mut s = self.clone();
        let mut jitter = |x: f64| x * (1.0 + rng.uniform_in(-frac, frac));
        for i in 0..3 {
            s.damping[i] = jitter(s.damping[i]);
            s.accel_gain[i] = jitter(s.accel_gain[i]);
            s.accel_tau[i] = jitter(s.accel_tau[i]);
        }
        s.yaw_gain = jitter(s.yaw_gain);
        s.yaw_tau = jitter(s.yaw_tau);
        s
    }
}

fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    #[allow(unused_imports)]
    use num_traits::Float;
    let (s, c) = (yaw.sin(), yaw.cos());
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn yaw_rotation_deriv(yaw: f64) -> Matrix3<f64> {
    #[allow(unused_imports)]
    use num_traits::Float;
    let (s, c) = (yaw.sin(), yaw.cos());
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Continuous-time state derivative.
pub fn derivative(x: &QuadState, u: &ControlInput, params: &ModelParams) -> SVector<f64, STATE_DIM> {
    let rot = yaw_rotation(x.yaw);
    let drag = rot.transpose() * Matrix3::from_diagonal(&params.damping) * rot * x.velocity;
    let mut dx: SVector<f64, STATE_DIM> = SVector::zeros();
    dx.fixed_rows_mut::<3>(P).copy_from(&x.velocity);
    dx[PHI] = (params.yaw_gain * u.yaw_cmd - x.yaw) / params.yaw_tau;
    dx.fixed_rows_mut::<3>(V).copy_from(&(x.accel - drag));
    let da = (params.accel_gain.component_mul(&u.accel_cmd) - x.accel)
        .component_div(&params.accel_tau);
    dx.fixed_rows_mut::<3>(A).copy_from(&da);
    dx
}

/// `d(derivative)/dx` at the given state.
fn jacobian_x(x: &QuadState, params: &ModelParams) -> SMatrix<f64, STATE_DIM, STATE_DIM> {
    let rot = yaw_rotation(x.yaw);
    let rot_d = yaw_rotation_deriv(x.yaw);
    let damp = Matrix3::from_diagonal(&params.damping);
    let drag_v = rot.transpose() * damp * rot;
    let drag_phi = (rot_d.transpose() * damp * rot + rot.transpose() * damp * rot_d) * x.velocity;

    let mut j: SMatrix<f64, STATE_DIM, STATE_DIM> = SMatrix::zeros();
    j.fixed_view_mut::<3, 3>(P, V).copy_from(&Matrix3::identity());
    j[(PHI, PHI)] = -1.0 / params.yaw_tau;
    j.fixed_view_mut::<3, 3>(V, V).copy_from(&(-drag_v));
    j.fixed_view_mut::<3, 1>(V, PHI).copy_from(&(-drag_phi));
    j.fixed_view_mut::<3, 3>(V, A).copy_from(&Matrix3::identity());
    for i in 0..3 {
        j[(A + i, A + i)] = -1.0 / params.accel_tau[i];
    }
    j
}

/// `d(derivative)/du`; constant in the state.
fn jacobian_u(params: &ModelParams) -> SMatrix<f64, STATE_DIM, INPUT_DIM> {
    let mut g = SMatrix::zeros();
    for i in 0..3 {
        g[(A + i, i)] = params.accel_gain[i] / params.accel_tau[i];
    }
    g[(PHI, 3)] = params.yaw_gain / params.yaw_tau;
    g
}

/// One classic fourth-order Runge-Kutta step; yaw is re-wrapped afterwards.
pub fn rk4_step(x: &QuadState, u: &ControlInput, dt: f64, params: &ModelParams) -> QuadState {
    let x0 = x.to_vector();
    let k1 = derivative(x, u, params);
    let k2 = derivative(&QuadState::from_vector(&(x0 + k1 * (dt / 2.0))), u, params);
    let k3 = derivative(&QuadState::from_vector(&(x0 + k2 * (dt / 2.0))), u, params);
    let k4 = derivative(&QuadState::from_vector(&(x0 + k3 * dt)), u, params);
    let mut next = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    next[PHI] = wrap_angle(next[PHI]);
    QuadState::from_vector(&next)
}

/// RK4 step together with its sensitivities `A = d(next)/dx` and
/// `B = d(next)/du`, chained analytically through the four stages.
pub fn rk4_step_with_sensitivity(
    x: &QuadState,
    u: &ControlInput,
    dt: f64,
    params: &ModelParams,
) -> (QuadState, SMatrix<f64, STATE_DIM, STATE_DIM>, SMatrix<f64, STATE_DIM, INPUT_DIM>) {
    let eye = SMatrix::<f64, STATE_DIM, STATE_DIM>::identity();
    let g = jacobian_u(params);
    let x0 = x.to_vector();

    let k1 = derivative(x, u, params);
    let s1 = QuadState::from_vector(&(x0 + k1 * (dt / 2.0)));
    let k2 = derivative(&s1, u, params);
    let s2 = QuadState::from_vector(&(x0 + k2 * (dt / 2.0)));
    let k3 = derivative(&s2, u, params);
    let s3 = QuadState::from_vector(&(x0 + k3 * dt));
    let k4 = derivative(&s3, u, params);

    let j1 = jacobian_x(x, params);
    let j2 = jacobian_x(&s1, params);
    let j3 = jacobian_x(&s2, params);
    let j4 = jacobian_x(&s3, params);

    let dk1 = j1;
    let dk2 = j2 * (eye + dk1 * (dt / 2.0));
    let dk3 = j3 * (eye + dk2 * (dt / 2.0));
    let dk4 = j4 * (eye + dk3 * dt);
    let a = eye + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (dt / 6.0);

    let bk1 = g;
    let bk2 = j2 * bk1 * (dt / 2.0) + g;
    let bk3 = j3 * bk2 * (dt / 2.0) + g;
    let bk4 = j4 * bk3 * dt + g;
    let b = (bk1 + bk2 * 2.0 + bk3 * 2.0 + bk4) * (dt / 6.0);

    let mut next = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    next[PHI] = wrap_angle(next[PHI]);
    (QuadState::from_vector(&next), a, b)
}

/// Integrate an input sequence; element `h` is the state after `h+1` steps.
pub fn rollout(
    x0: &QuadState,
    inputs: &[ControlInput],
    dt: f64,
    params: &ModelParams,
) -> Vec<QuadState> {
    let mut states = Vec::with_capacity(inputs.len());
    let mut x = *x0;
    for u in inputs {
        x = rk4_step(&x, u, dt, params);
        states.push(x);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn params_no_drag() -> ModelParams {
        ModelParams { damping: Vector3::zeros(), ..ModelParams::default() }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let x = QuadState { position: Vector3::new(1.0, 2.0, 3.0), yaw: 0.4, velocity: Vector3::zeros(), accel: Vector3::zeros() };
        let u = ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: 0.4 };
        let dx = derivative(&x, &u, &ModelParams::default());
        assert!(dx.norm() < 1e-15);
    }

    #[test]
    fn acceleration_feeds_velocity_without_drag() {
        let x = QuadState { position: Vector3::zeros(), yaw: 0.0, velocity: Vector3::zeros(), accel: Vector3::new(1.0, 0.0, 0.0) };
        let dx = derivative(&x, &ControlInput::zero(), &params_no_drag());
        assert_eq!(dx.fixed_rows::<3>(V).clone_owned(), Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn drag_conjugation_matches_hand_rotation() {
        // yaw = pi/2, body-x damping only, world velocity +y: the body x
        // axis points along world +y, so drag acts on world y.
        let params = ModelParams {
            damping: Vector3::new(1.0, 0.0, 0.0),
            ..ModelParams::default()
        };
        let x = QuadState {
            position: Vector3::zeros(),
            yaw: core::f64::consts::FRAC_PI_2,
            velocity: Vector3::new(0.0, 1.0, 0.0),
            accel: Vector3::zeros(),
        };
        let dx = derivative(&x, &ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: x.yaw }, &params);
        let vdot = dx.fixed_rows::<3>(V).clone_owned();
        assert!((vdot - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12, "{vdot:?}");
    }

    #[test]
    fn rk4_exact_on_constant_acceleration() {
        let params = params_no_drag();
        let a = Vector3::new(0.5, -0.25, 1.0);
        let mut x = QuadState {
            position: Vector3::zeros(),
            yaw: 0.0,
            velocity: Vector3::new(1.0, 0.0, 0.0),
            accel: a,
        };
        // accel_cmd keeps the actuator channel at equilibrium.
        let u = ControlInput { accel_cmd: a, yaw_cmd: 0.0 };
        let dt = 0.033;
        for step in 1..=30 {
            x = rk4_step(&x, &u, dt, &params);
            let t = step as f64 * dt;
            let expect = Vector3::new(1.0, 0.0, 0.0) * t + a * (0.5 * t * t);
            assert!((x.position - expect).norm() < 1e-12, "step {step}");
        }
    }

    #[test]
    fn yaw_step_response_matches_exponential() {
        let params = ModelParams::default();
        let u = ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: 1.0 };
        let mut x = QuadState::at_rest(Vector3::zeros(), 0.0);
        let dt = 0.033;
        for step in 1..=60 {
            x = rk4_step(&x, &u, dt, &params);
            let t = step as f64 * dt;
            let expect = 1.0 - (-t / params.yaw_tau).exp();
            assert!((x.yaw - expect).abs() < 1e-6, "step {step}: {} vs {expect}", x.yaw);
        }
    }

    #[test]
    fn halving_dt_gives_fourth_order_convergence() {
        let params = ModelParams::default();
        let u = ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: 1.0 };
        let horizon = 0.33;
        let err = |dt: f64| {
            let steps = (horizon / dt).round() as usize;
            let mut x = QuadState::at_rest(Vector3::zeros(), 0.0);
            for _ in 0..steps {
                x = rk4_step(&x, &u, dt, &params);
            }
            (x.yaw - (1.0 - (-horizon / params.yaw_tau).exp())).abs()
        };
        let ratio = err(0.033) / err(0.0165);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rollout_equals_manual_fold() {
        let params = ModelParams::default();
        let mut rng = SplitMix64::new(17);
        let x0 = QuadState {
            position: Vector3::new(0.1, -0.2, 1.0),
            yaw: 0.3,
            velocity: Vector3::new(2.0, 0.5, -0.1),
            accel: Vector3::new(0.2, 0.0, 0.1),
        };
        let inputs: Vec<ControlInput> = (0..20)
            .map(|_| ControlInput {
                accel_cmd: Vector3::new(rng.uniform_in(-5.0, 5.0), rng.uniform_in(-5.0, 5.0), rng.uniform_in(-3.0, 3.0)),
                yaw_cmd: rng.uniform_in(-1.0, 1.0),
            })
            .collect();
        let states = rollout(&x0, &inputs, 0.033, &params);
        let mut x = x0;
        for (h, u) in inputs.iter().enumerate() {
            x = rk4_step(&x, u, 0.033, &params);
            assert_eq!(states[h], x);
        }
    }

    #[test]
    fn actuator_reaches_commanded_steady_state() {
        let params = ModelParams::default();
        let cmd = Vector3::new(2.0, -1.0, 0.5);
        let u = ControlInput { accel_cmd: cmd, yaw_cmd: 0.0 };
        let mut x = QuadState::at_rest(Vector3::zeros(), 0.0);
        let dt = 0.01;
        let target = params.accel_gain.component_mul(&cmd);
        // After ten time constants the residual is e^-10 of the command;
        // twenty push it below the tolerance outright.
        let steps_10 = (10.0 * params.accel_tau.max() / dt) as usize;
        for _ in 0..steps_10 {
            x = rk4_step(&x, &u, dt, &params);
        }
        assert!((x.accel - target).norm() < 1e-4 * cmd.norm());
        for _ in 0..steps_10 {
            x = rk4_step(&x, &u, dt, &params);
        }
        assert!((x.accel - target).norm() < 1e-6);
    }

    #[test]
    fn speed_non_increasing_under_pure_drag() {
        let params = ModelParams::default();
        let mut rng = SplitMix64::new(23);
        for _ in 0..50 {
            let mut x = QuadState {
                position: Vector3::zeros(),
                yaw: rng.uniform_in(-3.0, 3.0),
                velocity: Vector3::new(
                    rng.uniform_in(-20.0, 20.0),
                    rng.uniform_in(-20.0, 20.0),
                    rng.uniform_in(-5.0, 5.0),
                ),
                accel: Vector3::zeros(),
            };
            let u = ControlInput { accel_cmd: Vector3::zeros(), yaw_cmd: x.yaw };
            for _ in 0..30 {
                let before = x.velocity.norm();
                x = rk4_step(&x, &u, 0.033, &params);
                assert!(x.velocity.norm() <= before + 1e-9);
            }
        }
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let params = ModelParams::default();
        let x = QuadState {
            position: Vector3::new(0.3, -0.1, 1.2),
            yaw: 0.7,
            velocity: Vector3::new(3.0, -1.0, 0.4),
            accel: Vector3::new(1.0, 0.5, -0.2),
        };
        let u = ControlInput { accel_cmd: Vector3::new(2.0, -3.0, 1.0), yaw_cmd: 0.2 };
        let dt = 0.033;
        let (_, a, b) = rk4_step_with_sensitivity(&x, &u, dt, &params);
        let h = 1e-6;
        for col in 0..STATE_DIM {
            let mut xp = x.to_vector();
            let mut xm = x.to_vector();
            xp[col] += h;
            xm[col] -= h;
            let fp = rk4_step(&QuadState::from_vector(&xp), &u, dt, &params).to_vector();
            let fm = rk4_step(&QuadState::from_vector(&xm), &u, dt, &params).to_vector();
            let fd = (fp - fm) / (2.0 * h);
            for row in 0..STATE_DIM {
                assert!((a[(row, col)] - fd[row]).abs() < 1e-6, "A[{row},{col}]");
            }
        }
        for col in 0..INPUT_DIM {
            let mut up = u.to_vector();
            let mut um = u.to_vector();
            up[col] += h;
            um[col] -= h;
            let fp = rk4_step(&x, &ControlInput::from_vector(&up), dt, &params).to_vector();
            let fm = rk4_step(&x, &ControlInput::from_vector(&um), dt, &params).to_vector();
            let fd = (fp - fm) / (2.0 * h);
            for row in 0..STATE_DIM {
                assert!((b[(row, col)] - fd[row]).abs() < 1e-6, "B[{row},{col}]");
            }
        }
    }

    #[test]
    fn clamp_respects_box() {
        let params = ModelParams::default();
        let u = ControlInput { accel_cmd: Vector3::new(100.0, -100.0, 100.0), yaw_cmd: 42.0 };
        let c = u.clamped(&params);
        assert_eq!(c.accel_cmd, Vector3::new(12.0, -12.0, 15.0));
        // Yaw command is unbounded by default.
        assert_eq!(c.yaw_cmd, 42.0);
    }

    #[test]
    fn perturbed_params_stay_within_band() {
        let params = ModelParams::default();
        let mut rng = SplitMix64::new(9);
        let p = params.perturbed(0.2, &mut rng);
        assert!(p.yaw_tau >= 0.8 * params.yaw_tau && p.yaw_tau <= 1.2 * params.yaw_tau);
        assert!(vec![p.damping.x / params.damping.x, p.accel_tau.y / params.accel_tau.y]
            .iter()
            .all(|r| (0.8..=1.2).contains(r)));
    }
}
