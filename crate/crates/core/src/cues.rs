//! Training cues shown to the trainee.
//!
//! Forward Model arrows advance constant-speed, constant-turn-rate kinematics
//! `t_predict` seconds: the heading changes by `Ωt` and the position moves
//! along the chord of the arc, `V·t·sinc(Ωt/2)` in direction `ψ0 + Ωt/2`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::biomech::{Posture, DOF_COUNT};
use crate::dynamics::SkyState;
use crate::guidance::wrap_angle;
use crate::patterns::{PatternBasis, PatternSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    /// Drawing origin, inertial NED, m.
    pub origin: [f64; 3],
    /// Heading at the arrow tip, rad in `(−π, π]`.
    pub heading: f64,
    /// Horizontal displacement predicted over the horizon, m.
    pub displacement: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueFrame {
    pub desired_posture: Posture,
    pub feedback_posture: Posture,
    pub predicted_arrow: Arrow,
    pub desired_arrow: Arrow,
    pub t_predict: f64,
    /// Pattern angles behind the desired and executed postures, rad.
    pub u_desired: Vec<f64>,
    pub u_executed: Vec<f64>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// Displacement and heading change after `t` s at speed `v` and turn rate `omega`,
/// starting along `heading`.
pub fn constant_turn(v: f64, heading: f64, omega: f64, t: f64) -> ([f64; 2], f64) {
    let half = 0.5 * omega * t;
    let chord = v * t * sinc(half);
    let dir = heading + half;
    ([chord * dir.cos(), chord * dir.sin()], omega * t)
}

/// Predicted (measured turn rate) and desired (commanded turn rate) arrows,
/// both drawn from the predicted position.
pub fn forward_arrows(state: &SkyState, omega_meas: f64, omega_com: f64, t_predict: f64) -> (Arrow, Arrow) {
    let v = state.horizontal_speed();
    let psi0 = state.track_heading();
    let (dp, turn_p) = constant_turn(v, psi0, omega_meas, t_predict);
    let (dd, turn_d) = constant_turn(v, psi0, omega_com, t_predict);
    let origin = [state.position.x + dp[0], state.position.y + dp[1], state.position.z];
    (
        Arrow { origin, heading: wrap_angle(psi0 + turn_p), displacement: dp },
        Arrow { origin, heading: wrap_angle(psi0 + turn_d), displacement: dd },
    )
}

/// Composes the commanded posture and range/rate limits it for display.
pub fn desired_posture_cue(set: &PatternSet, u: &[f64], previous: &Posture, dt: f64) -> Posture {
    set.clamp(&set.compose(u), previous, dt)
}

/// `sin(2π·cycles)`, exact at quarter-cycle points.
pub fn sin_cycles(cycles: f64) -> f64 {
    let r = cycles - cycles.floor();
    let x = 4.0 * r;
    let q = x.floor();
    let a = (x - q) * FRAC_PI_2;
    match q as u8 {
        0 => a.sin(),
        1 => a.cos(),
        2 => -a.sin(),
        _ => -a.cos(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImitationSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub pattern: PatternBasis,
    pub hold_threshold: f64,
    pub hold_duration: f64,
}

impl ImitationSpec {
    pub fn angle(&self, t: f64) -> f64 {
        self.amplitude * sin_cycles(self.frequency * t)
    }

    /// `P_neutral + A·sin(2πft)·MP`.
    pub fn target(&self, neutral: &Posture, t: f64) -> Posture {
        neutral.add_scaled(self.pattern.weights(), self.angle(t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostureError {
    pub per_dof: Vec<f64>,
    pub rms: f64,
    pub within_threshold_for: f64,
}

/// Per-DOF differences and their RMS over the 45 DOFs.
pub fn posture_difference(desired: &Posture, actual: &Posture) -> ([f64; DOF_COUNT], f64) {
    let d = actual.sub(desired);
    let rms = (d.iter().map(|x| x * x).sum::<f64>() / DOF_COUNT as f64).sqrt();
    (d, rms)
}

/// Tracks how long the posture error has stayed within a threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct HoldTimer {
    pub threshold: f64,
    held: f64,
}

impl HoldTimer {
    pub fn new(threshold: f64) -> Self {
        HoldTimer { threshold, held: 0.0 }
    }

    pub fn update(&mut self, desired: &Posture, actual: &Posture, dt: f64) -> PostureError {
        let (d, rms) = posture_difference(desired, actual);
        if rms <= self.threshold {
            self.held += dt;
        } else {
            self.held = 0.0;
        }
        PostureError { per_dof: d.to_vec(), rms, within_threshold_for: self.held }
    }

    pub fn held(&self) -> f64 {
        self.held
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn moving(v: [f64; 2]) -> SkyState {
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.0);
        s.velocity = Vector3::new(v[0], v[1], 61.0);
        s
    }

    #[test]
    fn straight_arrow() {
        let (p, d) = forward_arrows(&moving([10.0, 0.0]), 0.0, 0.0, 2.0);
        assert_eq!(p.displacement, [20.0, 0.0]);
        assert_eq!(p.heading, 0.0);
        assert_eq!(p, d);
    }

    #[test]
    fn chord_formula() {
        let (dp, turn) = constant_turn(10.0, 0.0, 0.5, 2.0);
        let chord = (dp[0] * dp[0] + dp[1] * dp[1]).sqrt();
        assert!((chord - 2.0 * (10.0 / 0.5) * 0.5f64.sin()).abs() < 1e-12);
        assert!((chord - 19.177).abs() < 1e-3);
        assert_eq!(turn, 1.0);
    }

    #[test]
    fn chord_continuous_at_zero() {
        let (a, _) = constant_turn(10.0, 0.3, 1e-9, 2.0);
        let (b, _) = constant_turn(10.0, 0.3, 0.0, 2.0);
        assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7);
        let (c, _) = constant_turn(10.0, 0.3, 1.0001e-4, 2.0);
        let (e, _) = constant_turn(10.0, 0.3, 0.9999e-4, 2.0);
        assert!((c[0] - e[0]).abs() < 1e-5 && (c[1] - e[1]).abs() < 1e-5);
    }

    #[test]
    fn arrows_share_origin() {
        let (p, d) = forward_arrows(&moving([3.0, 1.0]), 0.2, -0.1, 2.0);
        assert_eq!(p.origin, d.origin);
        assert_ne!(p.heading, d.heading);
    }

    #[test]
    fn quarter_period_points_exact() {
        assert_eq!(sin_cycles(0.0), 0.0);
        assert_eq!(sin_cycles(0.25), 1.0);
        assert_eq!(sin_cycles(0.5), 0.0);
        assert_eq!(sin_cycles(0.75), -1.0);
        assert_eq!(sin_cycles(3.25), 1.0);
        for c in [0.1, 0.37, 0.62, 0.9] {
            assert!((sin_cycles(c) - (2.0 * std::f64::consts::PI * c).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn imitation_waveform() {
        let spec = ImitationSpec {
            amplitude: 10f64.to_radians(),
            frequency: 0.25,
            pattern: PatternBasis::turning(),
            hold_threshold: 3f64.to_radians(),
            hold_duration: 3.0,
        };
        let n = Posture::zero();
        assert_eq!(spec.target(&n, 0.0), n);
        assert_eq!(spec.angle(1.0), 10f64.to_radians());
        assert_eq!(spec.target(&n, 2.0), n);
    }

    #[test]
    fn rms_of_single_dof() {
        let a = Posture::zero();
        let mut b = a;
        b.0[7] = 0.3;
        let (_, rms) = posture_difference(&a, &b);
        assert!((rms - 0.3 / 45f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hold_timer_resets_on_burst() {
        let dt = 0.5;
        let mut t = HoldTimer::new(3f64.to_radians());
        let a = Posture::zero();
        let mut burst = a;
        burst.0[0] = 1.0;
        let trace = [false, false, true, false, false, false, true, false];
        let mut expected = 0.0;
        for &b in &trace {
            let e = t.update(&a, if b { &burst } else { &a }, dt);
            expected = if b { 0.0 } else { expected + dt };
            assert_eq!(e.within_threshold_for, expected);
        }
    }
}
