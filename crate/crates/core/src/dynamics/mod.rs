//! Six-DOF Newton-Euler equations of motion integrated with fixed-step RK4.
//!
//! Inertial frame is north-east-down; the tracked point is the overall CoG and
//! the orientation is that of the pelvis frame. The posture is held constant
//! across a step, with its rate entering through the inertia derivative:
//! `I ω̇ = M − İ ω − ω × I ω`.

pub mod aero;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::biomech::{kinematics, mass_state_from, BodyModel, MassState, Posture, DOF_COUNT};
use crate::error::{Error, Result};

pub use aero::{flow_angles, AeroCoefficients, AeroGeometry, FlowAngles, Wrench};

pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const DIVERGENCE_SPEED: f64 = 200.0;
pub const MAX_STEP: f64 = 0.05;
/// Horizontal speed below which the velocity heading is undefined.
pub const MIN_HEADING_SPEED: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment {
    pub air_density: f64,
    pub gravity: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment { air_density: 1.0, gravity: STANDARD_GRAVITY }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkyState {
    /// CoG position, inertial NED, m.
    pub position: Vector3<f64>,
    /// CoG velocity, inertial, m/s.
    pub velocity: Vector3<f64>,
    /// Body (pelvis) to inertial rotation.
    pub orientation: UnitQuaternion<f64>,
    /// Body angular rate in the body frame, rad/s.
    pub angular_rate: Vector3<f64>,
    pub time: f64,
}

impl SkyState {
    /// Belly-to-earth at rest, body `x` along `heading` (rad from north).
    pub fn at_rest(position: Vector3<f64>, heading: f64) -> SkyState {
        SkyState {
            position,
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading),
            angular_rate: Vector3::zeros(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
            && self.time.is_finite()
    }

    /// Rotation rate about the inertial vertical, positive turning right.
    pub fn yaw_rate(&self) -> f64 {
        (self.orientation * self.angular_rate).z
    }

    /// Heading of the body `x` axis projected on the horizontal plane.
    pub fn heading(&self) -> f64 {
        let x = self.orientation * Vector3::x();
        x.y.atan2(x.x)
    }

    pub fn horizontal_speed(&self) -> f64 {
        self.velocity.xy().norm()
    }

    pub fn velocity_heading(&self) -> Option<f64> {
        (self.horizontal_speed() >= MIN_HEADING_SPEED).then(|| self.velocity.y.atan2(self.velocity.x))
    }

    /// Heading used for guidance: velocity heading, or body heading when slow.
    pub fn track_heading(&self) -> f64 {
        self.velocity_heading().unwrap_or_else(|| self.heading())
    }

    /// Horizontal velocity along the body heading.
    pub fn forward_speed(&self) -> f64 {
        let (s, c) = self.heading().sin_cos();
        self.velocity.x * c + self.velocity.y * s
    }
}

/// Posture-dependent quantities held fixed over one integration step.
#[derive(Clone, Debug)]
pub struct FrozenBody {
    pub mass: MassState,
    pub geometry: AeroGeometry,
    inertia_inv: Matrix3<f64>,
}

impl FrozenBody {
    pub fn new(body: &BodyModel, posture: &Posture, posture_rate: &[f64; DOF_COUNT]) -> FrozenBody {
        let kin = kinematics(body, posture, Some(posture_rate));
        let mass = mass_state_from(body, &kin);
        let geometry = AeroGeometry::new(body, &kin, &mass);
        let inertia_inv = mass.inertia.try_inverse().expect("segment inertias are positive definite");
        FrozenBody { mass, geometry, inertia_inv }
    }

    pub fn wrench(&self, state: &SkyState, coeffs: &AeroCoefficients, env: &Environment) -> Wrench {
        let v_body = state.orientation.inverse_transform_vector(&state.velocity);
        self.geometry.wrench(&v_body, &state.angular_rate, coeffs, env.air_density)
    }

    fn derivative(&self, s: &Deriv, coeffs: &AeroCoefficients, env: &Environment) -> Deriv {
        let q = UnitQuaternion::new_unchecked(s.q);
        let v_body = q.inverse_transform_vector(&s.v);
        let w = self.geometry.wrench(&v_body, &s.w, coeffs, env.air_density);
        let accel = q * w.force / self.mass.mass + Vector3::new(0.0, 0.0, env.gravity);
        let inertia = &self.mass.inertia;
        let torque = w.moment - self.mass.inertia_rate * s.w - s.w.cross(&(inertia * s.w));
        let wq = Quaternion::from_imag(s.w);
        Deriv { p: s.v, v: accel, q: s.q * wq * 0.5, w: self.inertia_inv * torque }
    }
}

#[derive(Clone, Copy, Debug)]
struct Deriv {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

impl Deriv {
    fn axpy(&self, h: f64, d: &Deriv) -> Deriv {
        Deriv { p: self.p + d.p * h, v: self.v + d.v * h, q: self.q + d.q * h, w: self.w + d.w * h }
    }
}

/// Advances the state by `dt` holding `posture` (moving at `posture_rate`).
pub fn step(
    body: &BodyModel,
    posture: &Posture,
    posture_rate: &[f64; DOF_COUNT],
    state: &SkyState,
    coeffs: &AeroCoefficients,
    env: &Environment,
    dt: f64,
) -> Result<SkyState> {
    if !posture.is_finite() || !posture_rate.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("posture"));
    }
    let frozen = FrozenBody::new(body, posture, posture_rate);
    step_frozen(&frozen, state, coeffs, env, dt)
}

pub fn step_frozen(
    frozen: &FrozenBody,
    state: &SkyState,
    coeffs: &AeroCoefficients,
    env: &Environment,
    dt: f64,
) -> Result<SkyState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    let y = Deriv { p: state.position, v: state.velocity, q: *state.orientation.quaternion(), w: state.angular_rate };
    let k1 = frozen.derivative(&y, coeffs, env);
    let k2 = frozen.derivative(&y.axpy(0.5 * dt, &k1), coeffs, env);
    let k3 = frozen.derivative(&y.axpy(0.5 * dt, &k2), coeffs, env);
    let k4 = frozen.derivative(&y.axpy(dt, &k3), coeffs, env);
    let h6 = dt / 6.0;
    let next = Deriv {
        p: y.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * h6,
        v: y.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * h6,
        q: y.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * h6,
        w: y.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * h6,
    };
    let out = SkyState {
        position: next.p,
        velocity: next.v,
        orientation: UnitQuaternion::from_quaternion(next.q),
        angular_rate: next.w,
        time: state.time + dt,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("integrated state"));
    }
    let speed = out.velocity.norm();
    if speed > DIVERGENCE_SPEED {
        return Err(Error::Diverged { speed, limit: DIVERGENCE_SPEED });
    }
    Ok(out)
}

/// Flies a held posture from `state` for `duration` seconds.
pub fn propagate_held(
    body: &BodyModel,
    posture: &Posture,
    state: &SkyState,
    coeffs: &AeroCoefficients,
    env: &Environment,
    duration: f64,
    dt: f64,
) -> Result<SkyState> {
    let frozen = FrozenBody::new(body, posture, &[0.0; DOF_COUNT]);
    let steps = (duration / dt).round() as usize;
    let mut s = *state;
    for _ in 0..steps {
        s = step_frozen(&frozen, &s, coeffs, env, dt)?;
    }
    Ok(s)
}

/// Steady descent speed of a held posture, released from rest.
pub fn terminal_speed(body: &BodyModel, posture: &Posture, coeffs: &AeroCoefficients, env: &Environment, dt: f64) -> Result<f64> {
    const SETTLE: f64 = 60.0;
    const AVERAGE: f64 = 5.0;
    let frozen = FrozenBody::new(body, posture, &[0.0; DOF_COUNT]);
    let mut s = SkyState::at_rest(Vector3::zeros(), 0.0);
    let total = ((SETTLE + AVERAGE) / dt).round() as usize;
    let start_avg = (SETTLE / dt).round() as usize;
    let mut sum = 0.0;
    for k in 0..total {
        s = step_frozen(&frozen, &s, coeffs, env, dt)?;
        if k >= start_avg {
            sum += s.velocity.norm();
        }
    }
    Ok(sum / (total - start_avg) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub coefficients: AeroCoefficients,
    pub terminal_speed: f64,
    pub iterations: usize,
}

/// Scales `c_drag_max` until the held posture falls at `target_speed`.
pub fn calibrate(
    body: &BodyModel,
    posture: &Posture,
    coeffs: &AeroCoefficients,
    env: &Environment,
    target_speed: f64,
    dt: f64,
) -> Result<Calibration> {
    if !(target_speed.is_finite() && target_speed > 0.0 && target_speed < DIVERGENCE_SPEED) {
        return Err(Error::InvalidConfig(format!("target speed {target_speed} m/s out of range")));
    }
    if coeffs.c_drag_max <= 0.0 {
        return Err(Error::InvalidConfig("c_drag_max must be positive to calibrate".into()));
    }
    let mut c = *coeffs;
    let mut speed = terminal_speed(body, posture, &c, env, dt)?;
    let mut iterations = 0;
    while (speed - target_speed).abs() > 1e-4 * target_speed && iterations < 20 {
        // Drag dominates the vertical balance, so v² ∝ 1/c_drag.
        c.c_drag_max *= (speed / target_speed).powi(2);
        speed = terminal_speed(body, posture, &c, env, dt)?;
        iterations += 1;
    }
    Ok(Calibration { coefficients: c, terminal_speed: speed, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::{build_body, Anthropometrics};
    use crate::config::Config;

    const DT: f64 = 1.0 / 240.0;

    fn setup() -> (BodyModel, Posture, AeroCoefficients, Environment) {
        let c = Config::default();
        let body = build_body(&c.anthropometrics).unwrap();
        let neutral = c.pattern_set("arms-legs").unwrap().set.neutral;
        (body, neutral, c.aero, c.environment)
    }

    fn fly(frozen: &FrozenBody, s: &SkyState, c: &AeroCoefficients, env: &Environment, dt: f64, t: f64) -> SkyState {
        let n = (t / dt).round() as usize;
        (0..n).fold(*s, |s, _| step_frozen(frozen, &s, c, env, dt).unwrap())
    }

    #[test]
    fn vacuum_free_fall() {
        let (body, neutral, _, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let s = fly(&frozen, &SkyState::at_rest(Vector3::zeros(), 0.0), &AeroCoefficients::vacuum(), &env, DT, 3.0);
        let g = env.gravity;
        assert!((s.velocity.z - 3.0 * g).abs() <= 1e-6 * 3.0 * g);
        assert!((s.position.z - 4.5 * g).abs() <= 1e-6 * 4.5 * g);
        assert!(s.velocity.xy().norm() < 1e-12);
    }

    #[test]
    fn vacuum_conserves_angular_momentum() {
        let (body, neutral, _, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.4);
        s.angular_rate = Vector3::new(0.7, -1.1, 2.3);
        let momentum = |s: &SkyState| s.orientation * (frozen.mass.inertia * s.angular_rate);
        let h0 = momentum(&s);
        let end = fly(&frozen, &s, &AeroCoefficients::vacuum(), &env, DT, 5.0);
        assert!((momentum(&end) - h0).norm() < 1e-6 * h0.norm());
        assert!((end.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn drag_scales_with_airspeed_squared() {
        let (body, neutral, coeffs, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.2);
        s.orientation = UnitQuaternion::from_euler_angles(0.1, 0.3, 0.2);
        for v in [Vector3::new(1.0, 2.0, 30.0), Vector3::new(-4.0, 0.5, 10.0)] {
            s.velocity = v;
            let w1 = frozen.wrench(&s, &coeffs, &env);
            s.velocity = 2.0 * v;
            let w2 = frozen.wrench(&s, &coeffs, &env);
            assert!((w2.force - 4.0 * w1.force).norm() <= 1e-9 * w2.force.norm());
            assert!((w2.moment - 4.0 * w1.moment).norm() <= 1e-9 * w2.moment.norm());
        }
    }

    #[test]
    fn zero_airspeed_gives_zero_wrench() {
        let (body, neutral, coeffs, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let w = frozen.wrench(&SkyState::at_rest(Vector3::zeros(), 1.0), &coeffs, &env);
        assert_eq!(w, Wrench::default());
    }

    #[test]
    fn spin_damping_opposes_rate() {
        let (body, neutral, coeffs, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        for axis in 0..3 {
            for rate in [-2.0, -0.3, 0.3, 2.0] {
                let mut s = SkyState::at_rest(Vector3::zeros(), 0.0);
                s.angular_rate[axis] = rate;
                let m = frozen.wrench(&s, &coeffs, &env).moment[axis];
                assert!(m * rate < 0.0, "axis {axis} rate {rate} moment {m}");
            }
        }
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let (body, neutral, coeffs, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.0);
        s.velocity = Vector3::new(3.0, -2.0, 45.0);
        s.angular_rate = Vector3::new(0.8, -0.5, 1.2);
        s.orientation = UnitQuaternion::from_euler_angles(0.3, 0.5, -0.2);
        let flat = |s: &SkyState| {
            let mut v = s.position.as_slice().to_vec();
            v.extend_from_slice(s.velocity.as_slice());
            v.extend_from_slice(s.orientation.coords.as_slice());
            v.extend_from_slice(s.angular_rate.as_slice());
            nalgebra::DVector::from_vec(v)
        };
        let reference = flat(&fly(&frozen, &s, &coeffs, &env, 1.0 / 1920.0, 1.0));
        let errors: Vec<f64> = [30.0, 60.0, 120.0]
            .iter()
            .map(|n| (flat(&fly(&frozen, &s, &coeffs, &env, 1.0 / n, 1.0)) - &reference).norm())
            .collect();
        for pair in errors.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order >= 3.5, "observed order {order} from {errors:?}");
        }
    }

    #[test]
    fn stepping_is_deterministic() {
        let (body, neutral, coeffs, env) = setup();
        let rate = [0.05; DOF_COUNT];
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.3);
        s.velocity = Vector3::new(1.0, 0.5, 20.0);
        let a = step(&body, &neutral, &rate, &s, &coeffs, &env, DT).unwrap();
        let b = step(&body, &neutral, &rate, &s, &coeffs, &env, DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibrated_neutral_trims_near_61_m_s() {
        let (body, neutral, coeffs, env) = setup();
        let frozen = FrozenBody::new(&body, &neutral, &[0.0; DOF_COUNT]);
        let s = fly(&frozen, &SkyState::at_rest(Vector3::zeros(), 0.0), &coeffs, &env, DT, 60.0);
        let speed = s.velocity.norm();
        assert!((speed - 61.0).abs() <= 0.15 * 61.0, "terminal speed {speed}");
        let w = frozen.wrench(&s, &coeffs, &env);
        let net = s.orientation * w.force + Vector3::new(0.0, 0.0, frozen.mass.mass * env.gravity);
        assert!(net.norm() < 1.0, "net force {net}");
    }

    #[test]
    fn calibration_hits_target() {
        let (body, neutral, mut coeffs, env) = setup();
        coeffs.c_drag_max = 0.5;
        let cal = calibrate(&body, &neutral, &coeffs, &env, 55.0, DT).unwrap();
        assert!((cal.terminal_speed - 55.0).abs() <= 1e-4 * 55.0);
        assert!(calibrate(&body, &neutral, &coeffs, &env, -1.0, DT).is_err());
    }

    #[test]
    fn rejects_bad_steps_and_flags_divergence() {
        let (body, neutral, coeffs, env) = setup();
        let s = SkyState::at_rest(Vector3::zeros(), 0.0);
        let rest = [0.0; DOF_COUNT];
        assert!(matches!(step(&body, &neutral, &rest, &s, &coeffs, &env, 0.0), Err(Error::InvalidTimeStep(_))));
        assert!(matches!(step(&body, &neutral, &rest, &s, &coeffs, &env, 0.06), Err(Error::InvalidTimeStep(_))));
        let mut bad = s;
        bad.velocity.x = f64::NAN;
        assert!(matches!(step(&body, &neutral, &rest, &bad, &coeffs, &env, DT), Err(Error::NonFinite(_))));
        let mut fast = s;
        fast.velocity.z = 250.0;
        assert!(matches!(
            step(&body, &neutral, &rest, &fast, &AeroCoefficients::vacuum(), &env, DT),
            Err(Error::Diverged { .. })
        ));
        let mut p = neutral;
        p.0[4] = f64::INFINITY;
        assert!(step(&body, &p, &rest, &s, &coeffs, &env, DT).is_err());
    }

    #[test]
    fn heading_helpers() {
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.5);
        assert!((s.heading() - 0.5).abs() < 1e-12);
        assert_eq!(s.velocity_heading(), None);
        assert!((s.track_heading() - 0.5).abs() < 1e-12);
        s.velocity = Vector3::new(0.0, 2.0, 50.0);
        assert!((s.velocity_heading().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((s.forward_speed() - 2.0 * 0.5f64.sin()).abs() < 1e-12);
        s.angular_rate = Vector3::new(0.0, 0.0, 0.3);
        assert!((s.yaw_rate() - 0.3).abs() < 1e-12);
        let _ = Anthropometrics::default();
    }
}
