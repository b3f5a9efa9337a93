//! Episode metrics and oscillation detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::log::{Outcome, TickRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time of capture, s; only for completed episodes.
    pub completion_time: Option<f64>,
    pub max_abs_u_arms: f64,
    pub max_abs_u_legs: f64,
    pub max_abs_omega_com: f64,
    /// RMS of `Ω_com − Ω_meas`, rad/s.
    pub yaw_rate_rms: f64,
    /// Time spent outside the corridor, s.
    pub corridor_violation_time: f64,
    /// Furthest arc length reached as a fraction of the path length.
    pub path_progress: f64,
}

/// Aggregates a tick stream. `end_time` is the time after the last tick.
pub fn compute_metrics(records: &[TickRecord], dt: f64, path_length: f64, outcome: Outcome, end_time: f64) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut m = Metrics::default();
    let mut sq = 0.0;
    let mut progress: f64 = 0.0;
    for r in records {
        m.max_abs_u_arms = m.max_abs_u_arms.max(r.u_cmd[0].abs());
        m.max_abs_u_legs = m.max_abs_u_legs.max(r.u_cmd[1].abs());
        m.max_abs_omega_com = m.max_abs_omega_com.max(r.commands.omega.abs());
        let e = r.commands.omega - r.measured.omega;
        sq += e * e;
        if !r.corridor.inside {
            m.corridor_violation_time += dt;
        }
        progress = progress.max(r.corridor.progress);
    }
    m.yaw_rate_rms = (sq / records.len() as f64).sqrt();
    m.path_progress = if outcome == Outcome::Completed { 1.0 } else { (progress / path_length).clamp(0.0, 1.0) };
    m.completion_time = (outcome == Outcome::Completed).then_some(end_time);
    Ok(m)
}

/// Sign changes of `signal` with hysteresis: a crossing counts only once the
/// signal has moved from beyond `-band` to beyond `+band` or back.
pub fn hysteretic_crossings(signal: &[f64], band: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut side = 0i8;
    for (i, &x) in signal.iter().enumerate() {
        let s = if x > band {
            1
        } else if x < -band {
            -1
        } else {
            continue;
        };
        if side != 0 && s != side {
            out.push(i);
        }
        side = s;
    }
    out
}

/// Oscillation test on the yaw-rate tracking error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationCriterion {
    /// Sliding window length, s.
    pub window: f64,
    pub min_crossings: usize,
    /// Hysteresis band, rad/s.
    pub band: f64,
    /// Initial transient excluded from the test, s.
    pub skip: f64,
}

impl Default for OscillationCriterion {
    fn default() -> Self {
        OscillationCriterion { window: 20.0, min_crossings: 3, band: 0.02, skip: 20.0 }
    }
}

/// Largest number of crossings of `Ω_com − Ω_meas` found in any window
/// starting after the transient.
pub fn max_window_crossings(records: &[TickRecord], criterion: &OscillationCriterion) -> usize {
    let err: Vec<f64> = records.iter().map(|r| r.commands.omega - r.measured.omega).collect();
    let times: Vec<f64> = hysteretic_crossings(&err, criterion.band)
        .into_iter()
        .map(|i| records[i].time)
        .filter(|&t| t >= criterion.skip)
        .collect();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= criterion.window {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

pub fn sustained_oscillation(records: &[TickRecord], criterion: &OscillationCriterion) -> bool {
    max_window_crossings(records, criterion) >= criterion.min_crossings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossings_ignore_chatter_inside_band() {
        let s = [0.0, 0.01, -0.01, 0.01, 0.5, 0.01, -0.5, -0.3, 0.6];
        assert_eq!(hysteretic_crossings(&s, 0.1), vec![6, 8]);
    }

    #[test]
    fn crossings_of_a_sine() {
        let s: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.01 * std::f64::consts::PI).sin()).collect();
        // 10 half periods, the first sign does not count as a crossing
        assert_eq!(hysteretic_crossings(&s, 0.1).len(), 9);
    }
}
