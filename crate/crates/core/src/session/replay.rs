//! Log replay and re-simulation.

use std::io::BufRead;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

use super::log::{EpisodeLog, LogHeader, TickRecord};
use super::{rate_of, Setup};
use crate::dynamics::{step, SkyState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayStats {
    pub ticks: u64,
    pub wall: Duration,
}

/// Paces frames at `speed` times real time; non-positive or infinite speed
/// emits as fast as possible.
struct Pacer {
    start: Instant,
    period: Option<Duration>,
}

impl Pacer {
    fn new(dt: f64, speed: f64) -> Self {
        let period = (speed.is_finite() && speed > 0.0).then(|| Duration::from_secs_f64(dt / speed));
        Pacer { start: Instant::now(), period }
    }

    fn wait(&self, k: u64) {
        if let Some(p) = self.period {
            let deadline = self.start + p.mul_f64(k as f64);
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
    }
}

/// Emits every recorded tick in order, paced at `speed`.
pub fn replay<F: FnMut(&TickRecord) -> Result<()>>(log: &EpisodeLog, speed: f64, mut sink: F) -> Result<ReplayStats> {
    let pacer = Pacer::new(log.dt(), speed);
    for (k, r) in log.records.iter().enumerate() {
        pacer.wait(k as u64);
        sink(r)?;
    }
    Ok(ReplayStats { ticks: log.records.len() as u64, wall: pacer.start.elapsed() })
}

/// Streams a log from `reader`, emitting ticks until the footer. A bad
/// record stops the replay with its line index after the earlier frames
/// have been emitted.
pub fn replay_stream<R: BufRead, F: FnMut(&LogHeader, &TickRecord) -> Result<()>>(
    reader: R,
    speed: f64,
    mut sink: F,
) -> Result<ReplayStats> {
    let mut lines = reader.lines().enumerate();
    let corrupt = |index: usize, reason: String| Error::CorruptLog { index, reason };
    let (_, first) = lines.next().ok_or(Error::EmptyLog)?;
    let header: LogHeader = match serde_json::from_str::<serde_json::Value>(&first?) {
        Ok(v) if v.get("kind").and_then(|k| k.as_str()) == Some("header") => {
            serde_json::from_value(v).map_err(|e| corrupt(0, e.to_string()))?
        }
        Ok(_) => return Err(corrupt(0, "missing header".into())),
        Err(e) => return Err(corrupt(0, e.to_string())),
    };
    let pacer = Pacer::new(1.0 / header.rate, speed);
    let mut ticks = 0u64;
    for (index, line) in lines {
        let v: serde_json::Value = serde_json::from_str(&line?).map_err(|e| corrupt(index, e.to_string()))?;
        match v.get("kind").and_then(|k| k.as_str()) {
            Some("tick") => {
                let r: TickRecord = serde_json::from_value(v).map_err(|e| corrupt(index, e.to_string()))?;
                if r.tick != ticks {
                    return Err(corrupt(index, format!("expected tick {ticks}, found {}", r.tick)));
                }
                pacer.wait(ticks);
                sink(&header, &r)?;
                ticks += 1;
            }
            Some("footer") => return Ok(ReplayStats { ticks, wall: pacer.start.elapsed() }),
            _ => return Err(corrupt(index, "unexpected record".into())),
        }
    }
    Err(corrupt(ticks as usize + 1, "truncated: missing footer".into()))
}

/// Re-flies the logged executed postures from each logged state and returns
/// the largest deviation from the next logged state (position m, velocity m/s).
pub fn resimulate(log: &EpisodeLog) -> Result<f64> {
    let setup = Setup::new(log.header.config.clone(), log.header.scenario.clone())?;
    let mut previous = log.header.initial_posture;
    let mut worst: f64 = 0.0;
    for (k, r) in log.records.iter().enumerate() {
        let rate = rate_of(&r.executed_posture, &previous, setup.dt);
        let next = step(&setup.body, &r.executed_posture, &rate, &r.state, &setup.aero, &setup.env, setup.dt)?;
        let logged: &SkyState = log.records.get(k + 1).map_or(&log.footer.final_state, |n| &n.state);
        worst = worst.max((next.position - logged.position).amax()).max((next.velocity - logged.velocity).amax());
        previous = r.executed_posture;
    }
    Ok(worst)
}
