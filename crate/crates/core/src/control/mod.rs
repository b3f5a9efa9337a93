//! Discrete controllers: the QFT bank, delay-compensated errors and the
//! adaptive PI trim.

pub mod bank;
pub mod tf;

use serde::{Deserialize, Serialize};

use crate::biomech::{BodyModel, Posture};
use crate::dynamics::{propagate_held, AeroCoefficients, Environment, SkyState};
use crate::error::{Error, Result};

pub use bank::{BankOutput, Commands, ControllerBank, ControllerProfile, Measurements};
pub use tf::{DiscreteLti, RationalTF};

/// Yaw rate and forward speed as seen by the controllers.
pub fn measure(state: &SkyState) -> Measurements {
    Measurements { omega: state.yaw_rate(), v: state.forward_speed() }
}

/// Plain tracking errors `(Ω_com − Ω, V_com − V)` against a (possibly
/// predicted) measurement.
pub fn tracking_errors(cmd: Commands, meas: Measurements) -> (f64, f64) {
    (cmd.omega - meas.omega, cmd.v - meas.v)
}

/// Predicts the trainee's velocities `t_delay` ahead by flying the current
/// posture forward, so the controllers act on where the body is going.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayCompensator {
    pub t_delay: f64,
    pub max_delay: f64,
}

impl DelayCompensator {
    pub const DEFAULT_MAX_DELAY: f64 = 2.0;

    pub fn new(t_delay: f64, max_delay: f64) -> Result<Self> {
        if !(t_delay.is_finite() && t_delay >= 0.0 && t_delay <= max_delay) {
            return Err(Error::InvalidDelay(t_delay, max_delay));
        }
        Ok(DelayCompensator { t_delay, max_delay })
    }

    pub fn predict(
        &self,
        body: &BodyModel,
        posture: &Posture,
        state: &SkyState,
        coeffs: &AeroCoefficients,
        env: &Environment,
        dt: f64,
    ) -> Result<Measurements> {
        if self.t_delay == 0.0 {
            return Ok(measure(state));
        }
        let future = propagate_held(body, posture, state, coeffs, env, self.t_delay, dt)?;
        Ok(measure(&future))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

/// PI correction of the pattern angles from the disparity between an ideal
/// parallel simulation and the measured motion.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveTrim {
    pub arms: PiGains,
    pub legs: PiGains,
    integral: [f64; 2],
}

impl AdaptiveTrim {
    pub fn new(arms: PiGains, legs: PiGains) -> Self {
        AdaptiveTrim { arms, legs, integral: [0.0; 2] }
    }

    /// Returns `[arms, legs]` corrections for one sample of length `dt`.
    pub fn step(&mut self, ideal: Measurements, measured: Measurements, dt: f64) -> [f64; 2] {
        let d = [ideal.omega - measured.omega, ideal.v - measured.v];
        self.integral[0] += d[0] * dt;
        self.integral[1] += d[1] * dt;
        [self.arms.kp * d[0] + self.arms.ki * self.integral[0], self.legs.kp * d[1] + self.legs.ki * self.integral[1]]
    }

    pub fn reset(&mut self) {
        self.integral = [0.0; 2];
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::biomech::build_body;
    use crate::biomech::DOF_COUNT;
    use crate::config::Config;
    use crate::dynamics::step;

    const DT: f64 = 1.0 / 240.0;

    fn settled() -> (BodyModel, Posture, AeroCoefficients, Environment, SkyState) {
        let c = Config::default();
        let body = build_body(&c.anthropometrics).unwrap();
        let neutral = c.pattern_set("arms-legs").unwrap().set.neutral;
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.3);
        s.velocity.z = 60.0;
        let s = propagate_held(&body, &neutral, &s, &c.aero, &c.environment, 20.0, DT).unwrap();
        (body, neutral, c.aero, c.environment, s)
    }

    #[test]
    fn trim_zero_disparity() {
        let mut t = AdaptiveTrim::new(PiGains { kp: 0.3, ki: 0.1 }, PiGains { kp: 0.2, ki: 0.05 });
        let m = Measurements { omega: 0.4, v: 2.0 };
        for _ in 0..1000 {
            assert_eq!(t.step(m, m, 1.0 / 240.0), [0.0, 0.0]);
        }
    }

    #[test]
    fn trim_constant_disparity() {
        let (kp, ki) = (0.3, 0.1);
        let mut t = AdaptiveTrim::new(PiGains { kp, ki }, PiGains { kp, ki });
        let d = 0.2;
        let steps = 480;
        let dt = 1.0 / 240.0;
        let mut out = [0.0; 2];
        for _ in 0..steps {
            out = t.step(Measurements { omega: d, v: d }, Measurements::default(), dt);
        }
        let total = steps as f64 * dt;
        assert!((out[0] - (kp + ki * total) * d).abs() < 1e-12);
    }

    #[test]
    fn delay_bounds() {
        assert!(DelayCompensator::new(2.5, 2.0).is_err());
        assert!(DelayCompensator::new(-0.1, 2.0).is_err());
        assert!(DelayCompensator::new(0.5, 2.0).is_ok());
    }

    #[test]
    fn zero_delay_is_plain_measurement() {
        let (body, neutral, aero, env, s) = settled();
        let p = DelayCompensator::new(0.0, 2.0).unwrap().predict(&body, &neutral, &s, &aero, &env, DT).unwrap();
        assert_eq!(p, measure(&s));
    }

    #[test]
    fn decelerating_flight_is_predicted_by_resimulation() {
        let (body, neutral, aero, env, mut s) = settled();
        let (sin, cos) = s.heading().sin_cos();
        s.velocity.x += 8.0 * cos;
        s.velocity.y += 8.0 * sin;
        let cmd = Commands { omega: 0.0, v: 3.0 };
        let plain = tracking_errors(cmd, measure(&s));
        let comp = DelayCompensator::new(0.5, 2.0).unwrap();
        let predicted = tracking_errors(cmd, comp.predict(&body, &neutral, &s, &aero, &env, DT).unwrap());

        // offline oracle through the general stepping path
        let oracle = (0..120).fold(s, |x, _| step(&body, &neutral, &[0.0; DOF_COUNT], &x, &aero, &env, DT).unwrap());
        let dv = oracle.forward_speed() - s.forward_speed();
        assert!(dv < -0.3, "not decelerating: {dv}");
        assert!((plain.1 - predicted.1 - dv).abs() < 1e-9);
        assert!((plain.0 - predicted.0 - (oracle.yaw_rate() - s.yaw_rate())).abs() < 1e-9);
    }

    #[test]
    fn steady_flight_prediction_is_identity() {
        let (body, neutral, aero, env, s) = settled();
        let now = measure(&s);
        let p = DelayCompensator::new(1.0, 2.0).unwrap().predict(&body, &neutral, &s, &aero, &env, DT).unwrap();
        assert!((p.v - now.v).abs() < 1e-3 && (p.omega - now.omega).abs() < 1e-4, "{p:?} vs {now:?}");
    }
}
