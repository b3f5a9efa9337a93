//! Wire protocol: one JSON object per WebSocket text frame.
//!
//! Every message has the shape
//! `{"version": 1, "kind": "...", "tick": n, "timestamp": ms, "payload": {...}}`.
//! `tick` is the simulation tick the message describes (the current tick for
//! control messages). `timestamp` is milliseconds since the Unix epoch on the
//! sender's clock; for `input` it is the client's send time.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::control::{Commands, Measurements};
use crate::cues::CueFrame;
use crate::dynamics::SkyState;
use crate::error::{Error, Result};
use crate::guidance::CorridorStatus;
use crate::session::{Metrics, Outcome, TickRecord};

pub const PROTOCOL_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: [u32; 1] = [PROTOCOL_VERSION];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pilot,
    #[default]
    Observer,
}

/// Sent by a client to join, answered by the server with the granted role.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub name: Option<String>,
    /// Protocol versions the sender speaks.
    #[serde(default)]
    pub versions: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub scenario: Scenario,
    /// Physics rate, Hz.
    pub rate: f64,
    /// Rate of `state` and `cues` messages, Hz.
    pub stream_rate: f64,
    pub path: Vec<[f64; 2]>,
    pub output_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub time: f64,
    pub state: SkyState,
    pub commands: Commands,
    pub measured: Measurements,
    /// Controller outputs `[arms, legs]` after clamping, rad.
    pub u_cmd: [f64; 2],
    /// Executed pattern angles `[arms, legs]`, rad.
    pub u_exec: [f64; 2],
    pub corridor: CorridorStatus,
}

impl StateUpdate {
    pub fn from_record(r: &TickRecord) -> Self {
        StateUpdate {
            time: r.time,
            state: r.state,
            commands: r.commands,
            measured: r.measured,
            u_cmd: r.u_cmd,
            u_exec: r.u_exec,
            corridor: r.corridor,
        }
    }
}

pub fn cue_frame(r: &TickRecord, t_predict: f64) -> CueFrame {
    CueFrame {
        desired_posture: r.desired_posture,
        feedback_posture: r.executed_posture,
        predicted_arrow: r.predicted_arrow,
        desired_arrow: r.desired_arrow,
        t_predict,
        u_desired: r.u_desired.to_vec(),
        u_executed: r.u_exec.to_vec(),
    }
}

/// Executed pattern angles from the pilot, rad.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub u_arms: f64,
    pub u_legs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCode {
    /// Hello accepted; the payload names the granted role.
    Joined,
    VersionMismatch,
    StaleInput,
    NotPilot,
    BadMessage,
    StreamLost,
    EpisodeEnded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub code: EventCode,
    pub message: String,
    #[serde(default)]
    pub supported_versions: Vec<u32>,
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default)]
    pub outcome: Option<Outcome>,
}

impl Event {
    pub fn new(code: EventCode, message: impl Into<String>) -> Self {
        Event { code, message: message.into(), supported_versions: Vec::new(), role: None, outcome: None }
    }
}

/// Tick scheduling quality of a live session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub ticks: u64,
    /// Ticks that started within ±2 ms of schedule.
    pub on_time: u64,
    pub max_lateness_ms: f64,
    pub mean_lateness_ms: f64,
}

impl TimingStats {
    pub fn on_time_fraction(&self) -> f64 {
        if self.ticks == 0 {
            1.0
        } else {
            self.on_time as f64 / self.ticks as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub outcome: Outcome,
    pub metrics: Metrics,
    #[serde(default)]
    pub timing: Option<TimingStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    Hello(Hello),
    Scenario(Box<ScenarioInfo>),
    State(Box<StateUpdate>),
    Cues(Box<CueFrame>),
    Input(Input),
    Event(Event),
    Metrics(Box<MetricsReport>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub version: u32,
    pub tick: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl WireMessage {
    pub fn new(tick: u64, payload: Payload) -> Self {
        WireMessage { version: PROTOCOL_VERSION, tick, timestamp: now_ms(), payload }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Hello(_) => "hello",
            Payload::Scenario(_) => "scenario",
            Payload::State(_) => "state",
            Payload::Cues(_) => "cues",
            Payload::Input(_) => "input",
            Payload::Event(_) => "event",
            Payload::Metrics(_) => "metrics",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))
    }

    /// Reads only the version field, so mismatched clients can be told which
    /// versions are supported even when the rest does not parse.
    pub fn peek_version(text: &str) -> Option<u32> {
        #[derive(Deserialize)]
        struct Version {
            version: u32,
        }
        serde_json::from_str::<Version>(text).ok().map(|v| v.version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_shape() {
        let m = WireMessage { version: 1, tick: 7, timestamp: 123, payload: Payload::Input(Input { u_arms: 0.1, u_legs: -0.2 }) };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["kind"], "input");
        assert_eq!(v["tick"], 7);
        assert_eq!(v["timestamp"], 123);
        assert_eq!(v["version"], 1);
        assert_eq!(v["payload"]["u_arms"], 0.1);
        assert_eq!(WireMessage::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn hello_defaults() {
        let m = WireMessage::from_json(r#"{"version":1,"kind":"hello","tick":0,"timestamp":0,"payload":{}}"#).unwrap();
        assert_eq!(m.payload, Payload::Hello(Hello::default()));
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(WireMessage::from_json(r#"{"version":1,"kind":"nope","tick":0,"timestamp":0,"payload":{}}"#).is_err());
        assert_eq!(WireMessage::peek_version(r#"{"version":9,"kind":"nope"}"#), Some(9));
    }
}
