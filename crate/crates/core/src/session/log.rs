//! Episode logs: one JSON object per line, a header first and a footer last.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::biomech::Posture;
use crate::config::{Config, Scenario};
use crate::control::{Commands, Measurements};
use crate::cues::Arrow;
use crate::dynamics::SkyState;
use crate::error::{Error, Result};
use crate::guidance::CorridorStatus;

use super::metrics::Metrics;

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Timeout,
    Diverged,
    StreamLost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub scenario: Scenario,
    pub config: Config,
    pub config_hash: String,
    pub seed: u64,
    pub rate: f64,
    /// Executed posture before the first tick.
    pub initial_posture: Posture,
}

/// Everything computed during one tick. `state` is the state the tick
/// started from; `executed_posture` is held from `time` to `time + dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub state: SkyState,
    pub commands: Commands,
    /// Velocities the controllers acted on (predicted when compensating).
    pub feedback: Measurements,
    pub measured: Measurements,
    pub psi_error: f64,
    pub lookahead: [f64; 2],
    /// Controller outputs `[arms, legs]` after clamping, and before.
    pub u_cmd: [f64; 2],
    pub u_raw: [f64; 2],
    pub trim: [f64; 2],
    /// Pattern angles of the displayed and the executed postures.
    pub u_desired: [f64; 2],
    pub u_exec: [f64; 2],
    pub desired_posture: Posture,
    pub executed_posture: Posture,
    pub predicted_arrow: Arrow,
    pub desired_arrow: Arrow,
    pub corridor: CorridorStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub outcome: Outcome,
    pub ticks: u64,
    pub final_state: SkyState,
    pub metrics: Metrics,
    /// Failure detail for diverged or lost episodes.
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<LogHeader>),
    Tick(Box<TickRecord>),
    Footer(Box<LogFooter>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<TickRecord>,
    pub footer: LogFooter,
}

impl EpisodeLog {
    pub fn outcome(&self) -> Outcome {
        self.footer.outcome
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.header.rate
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: &Line| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&Line::Header(Box::new(self.header.clone())))?;
        for r in &self.records {
            line(&Line::Tick(Box::new(r.clone())))?;
        }
        line(&Line::Footer(Box::new(self.footer.clone())))?;
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    /// Parses a log, reporting the zero-based line of the first bad record.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        let mut footer = None;
        let corrupt = |index: usize, reason: String| Error::CorruptLog { index, reason };
        for (index, line) in r.lines().enumerate() {
            let line = line?;
            if footer.is_some() {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(corrupt(index, "data after footer".into()));
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| corrupt(index, e.to_string()))?;
            match (parsed, header.is_some()) {
                (Line::Header(h), false) => {
                    if h.version != LOG_VERSION {
                        return Err(corrupt(index, format!("unsupported log version {}", h.version)));
                    }
                    header = Some(*h)
                }
                (Line::Header(_), true) => return Err(corrupt(index, "duplicate header".into())),
                (_, false) => return Err(corrupt(index, "missing header".into())),
                (Line::Tick(t), true) => {
                    if t.tick != records.len() as u64 {
                        return Err(corrupt(index, format!("expected tick {}, found {}", records.len(), t.tick)));
                    }
                    records.push(*t);
                }
                (Line::Footer(f), true) => {
                    if f.ticks != records.len() as u64 {
                        return Err(corrupt(index, format!("footer counts {} ticks, log has {}", f.ticks, records.len())));
                    }
                    footer = Some(*f);
                }
            }
        }
        let header = header.ok_or(Error::EmptyLog)?;
        let footer = footer.ok_or_else(|| corrupt(records.len() + 1, "truncated: missing footer".into()))?;
        Ok(EpisodeLog { header, records, footer })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        EpisodeLog::read(std::io::BufReader::new(f))
    }
}
