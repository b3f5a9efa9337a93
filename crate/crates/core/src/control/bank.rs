//! The two-loop controller bank:
//!
//! ```text
//! u_arms = G11 · (F11 · Ω_com − Ω_meas)
//! u_legs = G22 · (F22 · V_com − V_meas) + G21 · (F11 · Ω_com − Ω_meas)
//! ```

use serde::{Deserialize, Serialize};

use super::tf::{DiscreteLti, RationalTF};
use crate::error::{Error, Result};

/// Continuous designs for the five blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerProfile {
    pub g11: RationalTF,
    pub f11: RationalTF,
    pub g22: RationalTF,
    pub g21: RationalTF,
    pub f22: RationalTF,
}

impl ControllerProfile {
    /// The published QFT design, built from its factored form.
    pub fn qft_paper() -> Self {
        use RationalTF as T;
        let g11 = T::gain(0.25)
            .series(&T::zero_at(3.5))
            .series(&T::integrator())
            .series(&T::lead_lag(0.7, 10.0))
            .series(&T::pole_at(100.0));
        let f11 = T::pole_at(7.0).series(&T::pole_at(8.0)).series(&T::lead_lag(0.6, 1.0));
        let g22 = T::gain(0.1)
            .series(&T::zero_at(1.5))
            .series(&T::integrator())
            .series(&T::lead_lag(0.2, 0.6))
            .series(&T::lead_lag(1.0, 10.0));
        let g21 = T::gain(-0.035)
            .series(&T::zero_at(3.0))
            .series(&T::integrator())
            .series(&T::zero_at(1.0))
            .series(&T::integrator())
            .series(&T::lead_lag(0.5, 5.0));
        let f22 = T::pole_at(1.0).series(&T::pole_at(2.0));
        ControllerProfile { g11, f11, g22, g21, f22 }
    }

    pub fn blocks(&self) -> [(&'static str, &RationalTF); 5] {
        [("g11", &self.g11), ("f11", &self.f11), ("g22", &self.g22), ("g21", &self.g21), ("f22", &self.f22)]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tf) in self.blocks() {
            tf.validate().map_err(|e| Error::InvalidTransferFunction(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Commands {
    /// Yaw-rate command, rad/s.
    pub omega: f64,
    /// Forward-speed command, m/s.
    pub v: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub omega: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BankOutput {
    /// Clamped pattern angles, rad.
    pub u_arms: f64,
    pub u_legs: f64,
    /// Pre-clamp outputs.
    pub raw_arms: f64,
    pub raw_legs: f64,
    /// Tracking errors after prefiltering.
    pub e_omega: f64,
    pub e_v: f64,
}

#[derive(Clone, Debug)]
pub struct ControllerBank {
    g11: DiscreteLti,
    f11: DiscreteLti,
    g22: DiscreteLti,
    g21: DiscreteLti,
    f22: DiscreteLti,
    limit: f64,
    rate: f64,
}

/// Advances `block` unless the output is saturated and the state update
/// would push it further into saturation.
fn advance(block: &mut DiscreteLti, input: f64, saturated_sign: f64) {
    let next = block.next_state(input);
    if saturated_sign != 0.0 {
        let push = block.c.dot(&(&next - block.state()));
        if push * saturated_sign > 0.0 {
            return;
        }
    }
    block.set_state(next);
}

impl ControllerBank {
    pub fn new(profile: &ControllerProfile, rate: f64, limit: f64) -> Result<Self> {
        profile.validate()?;
        if !(limit.is_finite() && limit > 0.0) {
            return Err(Error::InvalidConfig(format!("output limit {limit} must be positive")));
        }
        Ok(ControllerBank {
            g11: profile.g11.discretize(rate)?,
            f11: profile.f11.discretize(rate)?,
            g22: profile.g22.discretize(rate)?,
            g21: profile.g21.discretize(rate)?,
            f22: profile.f22.discretize(rate)?,
            limit,
            rate,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Any block discretized with a break frequency beyond Nyquist.
    pub fn nyquist_warning(&self) -> bool {
        [&self.g11, &self.f11, &self.g22, &self.g21, &self.f22].iter().any(|b| b.nyquist_warning)
    }

    pub fn reset(&mut self) {
        for b in [&mut self.g11, &mut self.f11, &mut self.g22, &mut self.g21, &mut self.f22] {
            b.reset();
        }
    }

    pub fn step(&mut self, cmd: Commands, meas: Measurements) -> Result<BankOutput> {
        self.step_with_offset(cmd, meas, [0.0, 0.0])
    }

    /// As [`step`](Self::step) with additive pre-clamp corrections `[arms, legs]`.
    pub fn step_with_offset(&mut self, cmd: Commands, meas: Measurements, offset: [f64; 2]) -> Result<BankOutput> {
        let inputs = [cmd.omega, cmd.v, meas.omega, meas.v, offset[0], offset[1]];
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("controller input"));
        }
        let r_omega = self.f11.step(cmd.omega);
        let r_v = self.f22.step(cmd.v);
        let e_omega = r_omega - meas.omega;
        let e_v = r_v - meas.v;

        let raw_arms = self.g11.output(e_omega) + offset[0];
        let raw_legs = self.g22.output(e_v) + self.g21.output(e_omega) + offset[1];
        let sat = |y: f64| if y.abs() > self.limit { y.signum() } else { 0.0 };
        let (sat_arms, sat_legs) = (sat(raw_arms), sat(raw_legs));
        advance(&mut self.g11, e_omega, sat_arms);
        advance(&mut self.g22, e_v, sat_legs);
        advance(&mut self.g21, e_omega, sat_legs);

        Ok(BankOutput {
            u_arms: raw_arms.clamp(-self.limit, self.limit),
            u_legs: raw_legs.clamp(-self.limit, self.limit),
            raw_arms,
            raw_legs,
            e_omega,
            e_v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: f64 = 240.0;

    fn bank() -> ControllerBank {
        ControllerBank::new(&ControllerProfile::qft_paper(), RATE, 30f64.to_radians()).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let mut b = bank();
        for _ in 0..100 {
            let out = b.step(Commands::default(), Measurements::default()).unwrap();
            assert_eq!((out.u_arms, out.u_legs), (0.0, 0.0));
        }
    }

    #[test]
    fn speed_error_does_not_reach_arms() {
        let mut b = bank();
        for _ in 0..2400 {
            let out = b.step(Commands { omega: 0.0, v: 2.0 }, Measurements::default()).unwrap();
            assert_eq!(out.u_arms, 0.0);
        }
    }

    #[test]
    fn non_finite_input_leaves_state() {
        let mut b = bank();
        b.step(Commands { omega: 0.1, v: 0.5 }, Measurements::default()).unwrap();
        let before = b.clone();
        assert!(b.step(Commands { omega: f64::NAN, v: 0.0 }, Measurements::default()).is_err());
        assert_eq!(b.g11.state(), before.g11.state());
        assert_eq!(b.f22.state(), before.f22.state());
    }

    #[test]
    fn factored_profile_orders() {
        let p = ControllerProfile::qft_paper();
        assert_eq!(p.g11.order(), 3);
        assert_eq!(p.f11.order(), 3);
        assert_eq!(p.g22.order(), 3);
        assert_eq!(p.g21.order(), 3);
        assert_eq!(p.f22.order(), 2);
        assert_eq!(p.f22.dc_gain(), Some(1.0));
        assert_eq!(p.f11.dc_gain(), Some(1.0));
        assert_eq!(p.g11.dc_gain(), None);
    }

    fn unclamped() -> ControllerBank {
        ControllerBank::new(&ControllerProfile::qft_paper(), RATE, 1e9).unwrap()
    }

    #[test]
    fn yaw_error_ramps_arms_at_integrator_gain() {
        let mut b = unclamped();
        let mut g21 = ControllerProfile::qft_paper().g21.discretize(RATE).unwrap();
        let meas = Measurements { omega: -1.0, v: 0.0 };
        let mut u = Vec::new();
        for _ in 0..(10 * 240) {
            let out = b.step(Commands::default(), meas).unwrap();
            assert_eq!(out.e_omega, 1.0);
            // legs move only through the cross term
            assert_eq!(out.u_legs, g21.step(1.0));
            u.push(out.u_arms);
        }
        let slope = (u[2399] - u[1199]) / 5.0;
        assert!((slope - 0.25).abs() < 1e-3, "slope {slope}");
        // Asymptote of the step response: 0.25·(t + 1/3.5 + 1/0.7 − 1/10 − 1/100).
        let t = 2400.0 / RATE;
        let asymptote = 0.25 * (t + 1.0 / 3.5 + 1.0 / 0.7 - 0.1 - 0.01);
        assert!((u[2399] - asymptote).abs() < 2e-3, "{} vs {asymptote}", u[2399]);
    }

    #[test]
    fn loop_errors_scale_linearly() {
        let lambda = -2.5;
        let mut a = unclamped();
        let mut b = unclamped();
        for k in 0..600 {
            let t = k as f64 / RATE;
            let cmd = Commands { omega: 0.3 * (t * 1.3).sin(), v: 2.0 + 0.5 * t.cos() };
            let meas = Measurements { omega: 0.1 * t.sin(), v: 1.5 };
            let oa = a.step(cmd, meas).unwrap();
            let ob = b
                .step(Commands { omega: lambda * cmd.omega, v: cmd.v }, Measurements { omega: lambda * meas.omega, v: meas.v })
                .unwrap();
            assert!((ob.e_omega - lambda * oa.e_omega).abs() < 1e-12 * (1.0 + oa.e_omega.abs()) * 10.0);
            assert!((ob.raw_arms - lambda * oa.raw_arms).abs() < 1e-9 * (1.0 + oa.raw_arms.abs()));
        }
    }

    #[test]
    fn anti_windup_releases_quickly() {
        let limit = 30f64.to_radians();
        for (omega_sign, v_sign) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let mut b = bank();
            let push = |s: f64, b: &mut ControllerBank| {
                // small enough that the legs feedthrough alone stays inside the clamp
                b.step(Commands::default(), Measurements { omega: -0.5 * s * omega_sign, v: -0.2 * s * v_sign }).unwrap()
            };
            let channel = |o: &BankOutput| if omega_sign != 0.0 { o.u_arms } else { o.u_legs };
            let reach = (0..60 * 240).position(|_| channel(&push(1.0, &mut b)).abs() == limit);
            assert!(reach.is_some());
            for _ in 0..(10 * 240) {
                assert_eq!(channel(&push(1.0, &mut b)).abs(), limit);
            }
            let left = (1..=5).any(|_| channel(&push(-1.0, &mut b)).abs() < limit);
            assert!(left, "stuck at the clamp for ({omega_sign}, {v_sign})");
        }
    }

    #[test]
    fn outputs_are_clamped() {
        let mut b = bank();
        for _ in 0..2400 {
            let out = b.step(Commands { omega: 2.0, v: 10.0 }, Measurements::default()).unwrap();
            assert!(out.u_arms.abs() <= b.limit() && out.u_legs.abs() <= b.limit());
        }
        assert!(ControllerBank::new(&ControllerProfile::qft_paper(), RATE, 0.0).is_err());
    }
}
