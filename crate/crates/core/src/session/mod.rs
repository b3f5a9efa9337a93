//! Episode orchestration. Each tick runs, in order: guidance, controllers,
//! Desired Posture cue, input source, dynamics, then records the tick.

pub mod export;
pub mod imitation;
pub mod log;
pub mod metrics;
pub mod replay;

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use crate::biomech::{BodyModel, Posture, DOF_COUNT};
use crate::config::{Config, ControlledPatterns, InputConfig, Scenario};
use crate::control::{measure, AdaptiveTrim, Commands, ControllerBank, DelayCompensator, Measurements};
use crate::cues::{desired_posture_cue, forward_arrows};
use crate::dynamics::{step, step_frozen, AeroCoefficients, Environment, FrozenBody, SkyState, MAX_STEP};
use crate::error::{Error, Result};
use crate::guidance::{guidance_step_with, PlannedPath};
use crate::patterns::PatternSet;
use crate::trainee::Trainee;

pub use log::{EpisodeLog, LogFooter, LogHeader, Outcome, TickRecord};
pub use metrics::{compute_metrics, Metrics};

/// Input starvation after which an externally driven episode is abandoned, s.
pub const STREAM_TIMEOUT: f64 = 1.0;
/// Prediction steps for delay compensation are this many ticks long.
const PREDICTION_STRIDE: f64 = 4.0;

/// Everything derived once from a config and scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub config: Config,
    pub scenario: Scenario,
    pub body: BodyModel,
    pub patterns: ControlledPatterns,
    pub cue_set: PatternSet,
    pub path: PlannedPath,
    pub aero: AeroCoefficients,
    pub env: Environment,
    pub dt: f64,
    pub t_predict: f64,
}

impl Setup {
    pub fn new(config: Config, scenario: Scenario) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let body = config.body(scenario.anthropometrics.as_ref())?;
        let patterns = config.pattern_set(&scenario.pattern_set)?;
        let cue_set = config.cue_set(&patterns);
        let path = scenario.path()?;
        let aero = scenario.aero.unwrap_or(config.aero);
        let t_predict = scenario.t_predict.unwrap_or(config.cues.t_predict);
        let dt = config.dt();
        config.controller(scenario.controller.as_deref())?;
        Ok(Setup { env: config.environment, config, scenario, body, patterns, cue_set, path, aero, dt, t_predict })
    }

    pub fn neutral(&self) -> Posture {
        self.patterns.set.neutral
    }

    /// Neutral flight settled for the configured time, then placed at the
    /// path start with the body turned to the initial heading.
    pub fn initial_state(&self) -> Result<SkyState> {
        let frozen = FrozenBody::new(&self.body, &self.neutral(), &[0.0; DOF_COUNT]);
        let mut s = SkyState::at_rest(Vector3::zeros(), 0.0);
        let steps = (self.config.sim.settle_time / self.dt).round() as usize;
        for _ in 0..steps {
            s = step_frozen(&frozen, &s, &self.aero, &self.env, self.dt)?;
        }
        let turn =
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.scenario.initial_heading_deg.to_radians() - s.heading());
        let start = self.path.start();
        Ok(SkyState {
            position: Vector3::new(start.x, start.y, 0.0),
            velocity: turn * s.velocity,
            orientation: turn * s.orientation,
            angular_rate: s.angular_rate,
            time: 0.0,
        })
    }

    pub fn header(&self) -> LogHeader {
        LogHeader {
            version: log::LOG_VERSION,
            scenario: self.scenario.clone(),
            config: self.config.clone(),
            config_hash: self.config.hash(),
            seed: self.scenario.seed,
            rate: self.config.sim.rate,
            initial_posture: self.neutral(),
        }
    }

    fn bank(&self) -> Result<ControllerBank> {
        let profile = self.config.controller(self.scenario.controller.as_deref())?;
        ControllerBank::new(profile, self.config.sim.rate, self.config.output_limit())
    }
}

/// A second simulation with an ideal actuator, tracking the same commands.
#[derive(Clone, Debug)]
struct IdealTwin {
    bank: ControllerBank,
    state: SkyState,
    cue: Posture,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ExternalInput {
    u: [f64; 2],
    received: f64,
}

/// Input source resolved at runtime.
#[derive(Clone, Debug)]
enum Source {
    Trainee(Box<Trainee>),
    External(Option<ExternalInput>),
    Frozen,
}

/// A running episode, advanced one tick at a time.
#[derive(Clone, Debug)]
pub struct Simulation {
    setup: Setup,
    bank: ControllerBank,
    source: Source,
    compensator: DelayCompensator,
    adaptive: Option<(AdaptiveTrim, IdealTwin)>,
    state: SkyState,
    cue: Posture,
    executed: Posture,
    tick: u64,
    max_ticks: u64,
    stream_started: f64,
    outcome: Option<(Outcome, Option<String>)>,
}

impl Simulation {
    pub fn new(setup: Setup) -> Result<Self> {
        Simulation::with_state(setup.clone(), setup.initial_state()?)
    }

    /// Starts from a given state instead of settling a fresh one.
    pub fn with_state(setup: Setup, state: SkyState) -> Result<Self> {
        let neutral = setup.neutral();
        let source = match &setup.scenario.input {
            InputConfig::Trainee { trainee } => {
                Source::Trainee(Box::new(Trainee::new(trainee.clone(), &neutral, setup.dt, setup.scenario.seed)?))
            }
            InputConfig::External => Source::External(None),
            InputConfig::Frozen => Source::Frozen,
        };
        let comp = &setup.config.compensation;
        let compensator = DelayCompensator::new(comp.t_delay, comp.max_delay)?;
        let adaptive = if setup.config.adaptive.enabled {
            let a = &setup.config.adaptive;
            Some((AdaptiveTrim::new(a.arms, a.legs), IdealTwin { bank: setup.bank()?, state, cue: neutral }))
        } else {
            None
        };
        let max_ticks = (setup.scenario.timeout / setup.dt - 1e-9).ceil().max(1.0) as u64;
        Ok(Simulation {
            bank: setup.bank()?,
            source,
            compensator,
            adaptive,
            state,
            cue: neutral,
            executed: neutral,
            tick: 0,
            max_ticks,
            stream_started: 0.0,
            outcome: None,
            setup,
        })
    }

    pub fn setup(&self) -> &Setup {
        &self.setup
    }

    pub fn state(&self) -> &SkyState {
        &self.state
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.setup.config.sim.rate
    }

    pub fn executed_posture(&self) -> &Posture {
        &self.executed
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome.as_ref().map(|o| o.0)
    }

    pub fn is_external(&self) -> bool {
        matches!(self.source, Source::External(_))
    }

    /// Latest pattern angles from the client; applied from the next tick.
    pub fn set_external_input(&mut self, u_arms: f64, u_legs: f64) -> Result<()> {
        if !(u_arms.is_finite() && u_legs.is_finite()) {
            return Err(Error::NonFinite("external input"));
        }
        let limit = self.setup.config.output_limit();
        let now = self.time();
        match &mut self.source {
            Source::External(slot) => {
                *slot = Some(ExternalInput { u: [u_arms.clamp(-limit, limit), u_legs.clamp(-limit, limit)], received: now });
                Ok(())
            }
            _ => Err(Error::Protocol("episode does not take external input".into())),
        }
    }

    /// Restarts the starvation clock, e.g. when a pilot connects.
    pub fn reset_stream_clock(&mut self) {
        self.stream_started = self.time();
    }

    fn finish(&mut self, outcome: Outcome, reason: Option<String>) {
        if self.outcome.is_none() {
            self.outcome = Some((outcome, reason));
        }
    }

    fn feedback(&self) -> Result<Measurements> {
        if self.compensator.t_delay == 0.0 {
            return Ok(measure(&self.state));
        }
        let h = (PREDICTION_STRIDE * self.setup.dt).min(MAX_STEP);
        let s = &self.setup;
        self.compensator.predict(&s.body, &self.executed, &self.state, &s.aero, &s.env, h)
    }

    fn step_twin(&mut self, cmd: Commands) -> Result<Option<Measurements>> {
        let Some((_, twin)) = &mut self.adaptive else { return Ok(None) };
        let s = &self.setup;
        let before = measure(&twin.state);
        let out = twin.bank.step(cmd, before)?;
        let previous = twin.cue;
        twin.cue = desired_posture_cue(&s.cue_set, &s.patterns.angles(out.u_arms, out.u_legs), &previous, s.dt);
        let rate = rate_of(&twin.cue, &previous, s.dt);
        twin.state = step(&s.body, &twin.cue, &rate, &twin.state, &s.aero, &s.env, s.dt)?;
        Ok(Some(before))
    }

    /// Advances one tick. Returns `None` once the episode has ended.
    pub fn tick(&mut self) -> Result<Option<TickRecord>> {
        if self.outcome.is_some() {
            return Ok(None);
        }
        if self.tick >= self.max_ticks {
            self.finish(Outcome::Timeout, None);
            return Ok(None);
        }
        match self.advance() {
            Ok(r) => Ok(Some(r)),
            Err(_) if self.outcome.is_some() => Ok(None),
            Err(e @ (Error::Diverged { .. } | Error::NonFinite(_))) => {
                self.finish(Outcome::Diverged, Some(e.to_string()));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn advance(&mut self) -> Result<TickRecord> {
        let time = self.time();
        if let Source::External(latest) = &self.source {
            let last = latest.map_or(self.stream_started, |i| i.received.max(self.stream_started));
            if time - last > STREAM_TIMEOUT {
                self.finish(Outcome::StreamLost, Some(format!("no input for {:.2} s", time - last)));
                return Err(Error::Protocol("stream lost".into()));
            }
        }

        let g = guidance_step_with(&self.setup.path, &self.state, self.setup.scenario.t_la, self.setup.scenario.heading)?;
        let cmd = Commands { omega: g.omega_com, v: g.v_com };
        let measured = measure(&self.state);
        let feedback = self.feedback()?;
        let trim = match self.step_twin(cmd)? {
            Some(ideal) => {
                let (pi, _) = self.adaptive.as_mut().expect("twin exists");
                pi.step(ideal, measured, self.setup.dt)
            }
            None => [0.0; 2],
        };
        let out = self.bank.step_with_offset(cmd, feedback, trim)?;

        let s = &self.setup;
        let u = s.patterns.angles(out.u_arms, out.u_legs);
        let cue = desired_posture_cue(&s.cue_set, &u, &self.cue, s.dt);
        let executed = match &mut self.source {
            Source::Trainee(t) => t.step(&cue),
            Source::External(latest) => {
                let v = latest.map_or([0.0; 2], |i| i.u);
                s.patterns.set.compose(&s.patterns.angles(v[0], v[1]))
            }
            Source::Frozen => s.neutral(),
        };
        let (predicted_arrow, desired_arrow) = forward_arrows(&self.state, measured.omega, cmd.omega, s.t_predict);
        let position = Vector2::new(self.state.position.x, self.state.position.y);
        let corridor = s.path.corridor_status(&position);
        let u_of = |p: &Posture| {
            let a = s.patterns.set.project(p).angles;
            [a[s.patterns.arms], a[s.patterns.legs]]
        };

        let rate = rate_of(&executed, &self.executed, s.dt);
        let next = step(&s.body, &executed, &rate, &self.state, &s.aero, &s.env, s.dt)?;
        let record = TickRecord {
            tick: self.tick,
            time,
            state: self.state,
            commands: cmd,
            feedback,
            measured,
            psi_error: g.psi_error,
            lookahead: g.lookahead_point,
            u_cmd: [out.u_arms, out.u_legs],
            u_raw: [out.raw_arms, out.raw_legs],
            trim,
            u_desired: u_of(&cue),
            u_exec: u_of(&executed),
            desired_posture: cue,
            executed_posture: executed,
            predicted_arrow,
            desired_arrow,
            corridor,
        };
        self.cue = cue;
        self.executed = executed;
        self.state = next;
        self.tick += 1;

        let target = s.path.target();
        let d = ((next.position.x - target.x).powi(2) + (next.position.y - target.y).powi(2)).sqrt();
        if d <= s.scenario.capture_radius {
            self.finish(Outcome::Completed, None);
        }
        Ok(record)
    }

    /// Footer for the records produced so far.
    pub fn footer(&self, records: &[TickRecord]) -> Result<LogFooter> {
        let (outcome, reason) = self.outcome.clone().ok_or_else(|| Error::InvalidScenario("episode still running".into()))?;
        let metrics = compute_metrics(records, self.setup.dt, self.setup.path.length(), outcome, self.time())?;
        Ok(LogFooter { outcome, ticks: records.len() as u64, final_state: self.state, metrics, reason })
    }

    /// Runs to the end, collecting every tick.
    pub fn run(mut self) -> Result<EpisodeLog> {
        let mut records = Vec::new();
        while let Some(r) = self.tick()? {
            records.push(r);
        }
        if records.is_empty() {
            return Err(Error::EmptyLog);
        }
        let footer = self.footer(&records)?;
        Ok(EpisodeLog { header: self.setup.header(), records, footer })
    }
}

pub fn rate_of(now: &Posture, previous: &Posture, dt: f64) -> [f64; DOF_COUNT] {
    std::array::from_fn(|i| (now.0[i] - previous.0[i]) / dt)
}

/// Builds and runs a headless episode.
pub fn run_episode(config: Config, scenario: Scenario) -> Result<EpisodeLog> {
    Simulation::new(Setup::new(config, scenario)?)?.run()
}
