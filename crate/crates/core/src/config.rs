//! Configuration and scenario files (TOML).
//!
//! Angles in both files are in degrees unless the key says otherwise; they
//! are converted to radians on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biomech::{build_body, mirror_dof, mirror_sign, parse_dof, Anthropometrics, BodyModel, Posture, DOF_COUNT};
use crate::control::{ControllerProfile, PiGains};
use crate::dynamics::{AeroCoefficients, Environment};
use crate::error::{Error, Result};
use crate::guidance::{HeadingSource, PlannedPath, SpeedProfile};
use crate::patterns::{PatternBasis, PatternSet};
use crate::trainee::TraineeKind;

pub const DEFAULT_CONFIG: &str = include_str!("../assets/default_config.toml");
pub const DEFAULT_SCENARIO: &str = include_str!("../assets/default_scenario.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Physics and control rate, Hz.
    pub rate: f64,
    /// Controller output clamp, deg.
    pub output_limit_deg: f64,
    /// Seconds of held neutral flight before an episode starts.
    pub settle_time: f64,
    /// Default controller profile.
    pub controller: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub name: String,
    /// Unnormalized weights keyed by DOF name.
    pub weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSetConfig {
    /// Pattern driven by the yaw-rate loop.
    pub arms: String,
    /// Pattern driven by the speed loop.
    pub legs: String,
    /// Ergonomic range about neutral, deg.
    pub range_deg: f64,
    /// Per-DOF rate limit, deg/s.
    pub rate_deg_s: f64,
    /// Copy every `r_` neutral entry to its left counterpart.
    #[serde(default)]
    pub mirror_neutral: bool,
    pub neutral_deg: BTreeMap<String, f64>,
    pub basis: Vec<BasisConfig>,
}

/// A pattern set with the indices of the two controlled patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledPatterns {
    pub set: PatternSet,
    pub arms: usize,
    pub legs: usize,
}

impl ControlledPatterns {
    /// Pattern-angle vector with `u_arms` and `u_legs` in their slots.
    pub fn angles(&self, u_arms: f64, u_legs: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.set.patterns.len()];
        u[self.arms] += u_arms;
        u[self.legs] += u_legs;
        u
    }
}

impl PatternSetConfig {
    pub fn neutral(&self) -> Result<Posture> {
        let mut p = Posture::zero();
        for (name, &deg) in &self.neutral_deg {
            let i = parse_dof(name).ok_or_else(|| Error::InvalidConfig(format!("unknown DOF '{name}'")))?;
            if self.mirror_neutral && name.starts_with("l_") {
                return Err(Error::InvalidConfig(format!("'{name}' given while mirror_neutral is set")));
            }
            p.0[i] = deg.to_radians();
            if self.mirror_neutral && name.starts_with("r_") {
                p.0[mirror_dof(i)] = mirror_sign(i) * deg.to_radians();
            }
        }
        Ok(p)
    }

    pub fn build(&self) -> Result<ControlledPatterns> {
        let neutral = self.neutral()?;
        let mut patterns = Vec::with_capacity(self.basis.len());
        for b in &self.basis {
            let mut w = [0.0; DOF_COUNT];
            for (name, &v) in &b.weights {
                let i = parse_dof(name).ok_or_else(|| Error::InvalidConfig(format!("unknown DOF '{name}'")))?;
                w[i] = v;
            }
            patterns.push(PatternBasis::new(b.name.clone(), w)?);
        }
        if !(self.range_deg > 0.0 && self.rate_deg_s > 0.0) {
            return Err(Error::InvalidConfig("pattern range and rate must be positive".into()));
        }
        let limits = PatternSet::symmetric_limits(&neutral, self.range_deg.to_radians(), self.rate_deg_s.to_radians());
        let set = PatternSet::new(neutral, patterns, limits)?;
        let find = |name: &str| set.index_of(name).ok_or_else(|| Error::InvalidConfig(format!("pattern '{name}' not in set")));
        let (arms, legs) = (find(&self.arms)?, find(&self.legs)?);
        if arms == legs {
            return Err(Error::InvalidConfig("arms and legs must be different patterns".into()));
        }
        Ok(ControlledPatterns { set, arms, legs })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueConfig {
    /// Forward Model horizon, s.
    pub t_predict: f64,
    /// Rate limit of the displayed posture, deg/s; defaults to the pattern set's.
    #[serde(default)]
    pub rate_limit_deg_s: Option<f64>,
    pub hold_threshold_deg: f64,
    pub hold_duration: f64,
    pub imitation_amplitude_deg: f64,
    pub imitation_frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationConfig {
    /// Trainee delay estimate used to predict velocities, s. Zero disables.
    pub t_delay: f64,
    pub max_delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub enabled: bool,
    pub arms: PiGains,
    pub legs: PiGains,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sim: SimConfig,
    pub environment: Environment,
    pub anthropometrics: Anthropometrics,
    pub aero: AeroCoefficients,
    pub patterns: BTreeMap<String, PatternSetConfig>,
    pub controllers: BTreeMap<String, ControllerProfile>,
    pub cues: CueConfig,
    pub compensation: CompensationConfig,
    pub adaptive: AdaptiveConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::from_toml(DEFAULT_CONFIG).expect("shipped config is valid")
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim.rate
    }

    pub fn output_limit(&self) -> f64 {
        self.sim.output_limit_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.sim.rate.is_finite() && self.sim.rate >= 20.0) {
            return bad(format!("rate {} Hz must be at least 20", self.sim.rate));
        }
        if !(self.sim.output_limit_deg > 0.0 && self.sim.settle_time >= 0.0) {
            return bad("output limit must be positive and settle time non-negative".into());
        }
        if !self.aero.is_valid() {
            return bad("aero coefficients must be finite and non-negative".into());
        }
        if !(self.environment.air_density >= 0.0 && self.environment.gravity.is_finite()) {
            return bad("invalid environment".into());
        }
        if self.cues.t_predict <= 0.0 || self.cues.hold_threshold_deg < 0.0 || self.cues.hold_duration < 0.0 {
            return bad("invalid cue parameters".into());
        }
        if !(self.cues.imitation_amplitude_deg > 0.0 && self.cues.imitation_frequency > 0.0) {
            return bad("imitation amplitude and frequency must be positive".into());
        }
        if self.cues.rate_limit_deg_s.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return bad("cue rate limit must be positive".into());
        }
        if !(self.compensation.t_delay >= 0.0 && self.compensation.t_delay <= self.compensation.max_delay) {
            return Err(Error::InvalidDelay(self.compensation.t_delay, self.compensation.max_delay));
        }
        for p in self.controllers.values() {
            p.validate()?;
        }
        if !self.controllers.contains_key(&self.sim.controller) {
            return bad(format!("controller profile '{}' not defined", self.sim.controller));
        }
        for set in self.patterns.values() {
            set.build()?;
        }
        Ok(())
    }

    pub fn body(&self, anthro: Option<&Anthropometrics>) -> Result<BodyModel> {
        build_body(anthro.unwrap_or(&self.anthropometrics))
    }

    pub fn pattern_set(&self, name: &str) -> Result<ControlledPatterns> {
        self.patterns.get(name).ok_or_else(|| Error::InvalidConfig(format!("pattern set '{name}' not defined")))?.build()
    }

    pub fn controller(&self, name: Option<&str>) -> Result<&ControllerProfile> {
        let name = name.unwrap_or(&self.sim.controller);
        self.controllers.get(name).ok_or_else(|| Error::InvalidConfig(format!("controller profile '{name}' not defined")))
    }

    /// Pattern set whose rate limit is the displayed-cue rate.
    pub fn cue_set(&self, controlled: &ControlledPatterns) -> PatternSet {
        let mut set = controlled.set.clone();
        if let Some(r) = self.cues.rate_limit_deg_s {
            for l in set.limits.iter_mut() {
                l.rate = r.to_radians();
            }
        }
        set
    }
}

/// Where the executed posture comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// A synthetic trainee follows the displayed Desired Posture.
    Trainee { trainee: TraineeKind },
    /// Pattern angles arrive from a client over the wire.
    External,
    /// The body is held at neutral: no actuation.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub start: [f64; 2],
    pub target: [f64; 2],
    /// Intermediate waypoints between start and target, m.
    #[serde(default)]
    pub via: Vec<[f64; 2]>,
    /// Initial body heading, deg from north.
    #[serde(default)]
    pub initial_heading_deg: f64,
    pub corridor_half_width: f64,
    pub speed_profile: SpeedProfile,
    /// Look-ahead time, s.
    pub t_la: f64,
    #[serde(default)]
    pub heading: HeadingSource,
    /// Overrides the configured Forward Model horizon, s.
    #[serde(default)]
    pub t_predict: Option<f64>,
    pub timeout: f64,
    pub capture_radius: f64,
    pub pattern_set: String,
    #[serde(default)]
    pub controller: Option<String>,
    #[serde(default)]
    pub anthropometrics: Option<Anthropometrics>,
    #[serde(default)]
    pub aero: Option<AeroCoefficients>,
    pub input: InputConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::from_toml(DEFAULT_SCENARIO).expect("shipped scenario is valid")
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scenario::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return bad("timeout must be positive");
        }
        if !(self.capture_radius.is_finite() && self.capture_radius > 0.0) {
            return bad("capture radius must be positive");
        }
        if !(self.t_la.is_finite() && self.t_la > 0.0) {
            return bad("t_la must be positive");
        }
        if self.t_predict.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return bad("t_predict must be positive");
        }
        self.path()?;
        Ok(())
    }

    pub fn path(&self) -> Result<PlannedPath> {
        let mut points = vec![self.start];
        points.extend_from_slice(&self.via);
        points.push(self.target);
        if ((self.target[0] - self.start[0]).powi(2) + (self.target[1] - self.start[1]).powi(2)).sqrt() < 1.0 {
            return Err(Error::InvalidPath("start and target closer than 1 m".into()));
        }
        PlannedPath::from_waypoints(&points, self.speed_profile, self.corridor_half_width)
    }
}
