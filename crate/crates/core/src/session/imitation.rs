//! Imitation exercise: the trainee follows a slow sine of one pattern until
//! the posture error stays under the threshold for the hold duration.

use serde::{Deserialize, Serialize};

use crate::biomech::Posture;
use crate::config::Config;
use crate::cues::{HoldTimer, ImitationSpec};
use crate::error::{Error, Result};
use crate::trainee::{Trainee, TraineeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationSample {
    pub time: f64,
    pub angle: f64,
    pub rms: f64,
    pub held: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    /// Time at which the hold duration was first reached, s.
    pub passed_at: Option<f64>,
    pub max_rms: f64,
    pub samples: Vec<ImitationSample>,
}

/// Spec for `pattern` built from the configured cue parameters.
pub fn imitation_spec(config: &Config, set: &str, pattern: &str) -> Result<(ImitationSpec, Posture)> {
    let controlled = config.pattern_set(set)?;
    let index = controlled
        .set
        .index_of(pattern)
        .ok_or_else(|| Error::InvalidConfig(format!("pattern '{pattern}' not in set '{set}'")))?;
    let c = &config.cues;
    let spec = ImitationSpec {
        amplitude: c.imitation_amplitude_deg.to_radians(),
        frequency: c.imitation_frequency,
        pattern: controlled.set.patterns[index].clone(),
        hold_threshold: c.hold_threshold_deg.to_radians(),
        hold_duration: c.hold_duration,
    };
    Ok((spec, controlled.set.neutral))
}

/// Runs the exercise with a synthetic trainee for at most `duration` s.
pub fn run_imitation(
    spec: &ImitationSpec,
    neutral: &Posture,
    trainee: TraineeKind,
    rate: f64,
    duration: f64,
    seed: u64,
) -> Result<ImitationReport> {
    let dt = 1.0 / rate;
    let mut t = Trainee::new(trainee, neutral, dt, seed)?;
    let mut timer = HoldTimer::new(spec.hold_threshold);
    let mut report = ImitationReport { passed_at: None, max_rms: 0.0, samples: Vec::new() };
    let ticks = (duration / dt).round() as u64;
    for k in 0..ticks {
        let time = k as f64 * dt;
        let target = spec.target(neutral, time);
        let actual = t.step(&target);
        let e = timer.update(&target, &actual, dt);
        report.max_rms = report.max_rms.max(e.rms);
        report.samples.push(ImitationSample { time, angle: spec.angle(time), rms: e.rms, held: e.within_threshold_for });
        if report.passed_at.is_none() && e.within_threshold_for >= spec.hold_duration {
            report.passed_at = Some(time + dt);
            break;
        }
    }
    Ok(report)
}
