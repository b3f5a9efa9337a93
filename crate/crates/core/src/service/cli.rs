//! Command-line front end of the `skydive` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Config, InputConfig, Scenario};
use crate::dynamics::{calibrate, terminal_speed};
use crate::error::{Error, Result};
use crate::session::export::write_csv;
use crate::session::imitation::{imitation_spec, run_imitation};
use crate::session::replay::{replay_stream, resimulate};
use crate::session::{run_episode, EpisodeLog, Metrics, Outcome, Setup};
use crate::trainee::TraineeKind;

use super::protocol::MetricsReport;
use super::server::{Server, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "skydive", version, about = "Free-fall simulator with posture-control training cues")]
pub struct Cli {
    /// Configuration file (TOML); the built-in default otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scenario file (TOML); the built-in default otherwise.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the physics and control rate, Hz.
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputChoice {
    /// As configured in the scenario.
    Scenario,
    Ideal,
    Frozen,
    External,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs a headless episode and writes its log and metrics.
    Run {
        /// Output directory; `SKYDIVE_DATA_DIR` or `data` otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "scenario")]
        input: InputChoice,
        /// Wraps the trainee in a pure delay, s.
        #[arg(long)]
        delay: Option<f64>,
    },
    /// Hosts a live session over WebSocket.
    Serve {
        /// Listen address; `SKYDIVE_BIND` or 127.0.0.1:8765 otherwise.
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, value_enum, default_value = "external")]
        input: InputChoice,
        /// Rate of state and cue messages, Hz.
        #[arg(long, default_value_t = 60.0)]
        stream_rate: f64,
        /// Seconds to wait for a pilot before starting anyway.
        #[arg(long, default_value_t = 300.0)]
        pilot_wait: f64,
    },
    /// Streams a recorded log.
    Replay {
        log: PathBuf,
        /// Multiple of real time; 0 replays as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Also re-flies the logged postures and reports the largest deviation.
        #[arg(long)]
        resim: bool,
    },
    /// Scales the drag coefficient so the neutral posture falls at a target speed.
    Calibrate {
        #[arg(long, default_value_t = 61.0)]
        target_speed: f64,
        /// Writes the full patched configuration here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the imitation exercise with a synthetic trainee.
    Imitate {
        /// Pattern to imitate.
        #[arg(long, default_value = "turning")]
        pattern: String,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Trainee as inline TOML, e.g. `kind = "pure_delay"` plus parameters.
        #[arg(long)]
        trainee: Option<String>,
    },
    /// Writes a log as CSV.
    Export {
        log: PathBuf,
        /// Output file; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(cli: &Cli) -> Result<(Config, Scenario)> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let mut scenario = match &cli.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    if let Some(rate) = cli.rate {
        config.sim.rate = rate;
        config.validate()?;
    }
    Ok((config, scenario))
}

fn apply_input(scenario: &mut Scenario, input: InputChoice, delay: Option<f64>) -> Result<()> {
    match input {
        InputChoice::Scenario => {}
        InputChoice::Ideal => scenario.input = InputConfig::Trainee { trainee: TraineeKind::Ideal },
        InputChoice::Frozen => scenario.input = InputConfig::Frozen,
        InputChoice::External => scenario.input = InputConfig::External,
    }
    if let Some(t_delay) = delay {
        let InputConfig::Trainee { trainee } = &scenario.input else {
            return Err(Error::InvalidScenario("--delay needs a trainee input".into()));
        };
        let stages = vec![trainee.clone(), TraineeKind::PureDelay { t_delay }];
        scenario.input = InputConfig::Trainee { trainee: TraineeKind::Composite { stages } };
    }
    Ok(())
}

fn data_dir(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os("SKYDIVE_DATA_DIR").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("data"))
}

fn summary(outcome: Outcome, m: &Metrics) -> String {
    let time = m.completion_time.map_or_else(|| "-".into(), |t| format!("{t:.2} s"));
    format!(
        "outcome {outcome:?}, completion {time}, progress {:.3}, max |u_arms| {:.2} deg, max |u_legs| {:.2} deg, \
         yaw-rate rms {:.4} rad/s, corridor violation {:.2} s",
        m.path_progress,
        m.max_abs_u_arms.to_degrees(),
        m.max_abs_u_legs.to_degrees(),
        m.yaw_rate_rms,
        m.corridor_violation_time
    )
}

fn execute(cli: Cli) -> Result<()> {
    let (mut config, mut scenario) = load(&cli)?;
    match cli.command {
        Command::Run { out, input, delay } => {
            apply_input(&mut scenario, input, delay)?;
            if matches!(scenario.input, InputConfig::External) {
                return Err(Error::InvalidScenario("headless runs need a trainee or frozen input; use serve".into()));
            }
            let log = run_episode(config, scenario)?;
            let dir = data_dir(out);
            std::fs::create_dir_all(&dir)?;
            let stem = format!("{}-{}", log.header.scenario.name, log.header.seed);
            let log_path = dir.join(format!("{stem}.jsonl"));
            log.save(&log_path)?;
            let report = MetricsReport { outcome: log.outcome(), metrics: log.footer.metrics.clone(), timing: None };
            let metrics_path = dir.join(format!("{stem}.metrics.json"));
            std::fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)?;
            println!("{}", summary(log.outcome(), &log.footer.metrics));
            println!("log {}", log_path.display());
            println!("metrics {}", metrics_path.display());
        }
        Command::Serve { bind, input, stream_rate, pilot_wait } => {
            apply_input(&mut scenario, input, None)?;
            let mut service = ServiceConfig::from_env();
            if let Some(b) = bind {
                service.bind = b;
            }
            service.stream_rate = stream_rate;
            service.pilot_wait = Duration::try_from_secs_f64(pilot_wait)
                .map_err(|_| Error::InvalidConfig(format!("pilot wait {pilot_wait} s")))?;
            let server = Server::bind(service)?;
            println!("listening on ws://{}", server.local_addr()?);
            let report = server.run(Setup::new(config, scenario)?)?;
            println!("{}", summary(report.log.outcome(), &report.log.footer.metrics));
            println!(
                "ticks {}, on time {:.2}%, worst lateness {:.2} ms",
                report.timing.ticks,
                100.0 * report.timing.on_time_fraction(),
                report.timing.max_lateness_ms
            );
            if let Some(p) = report.log_path {
                println!("log {}", p.display());
            }
        }
        Command::Replay { log, speed, resim } => {
            let reader = BufReader::new(File::open(&log)?);
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            let stats = replay_stream(reader, speed, |header, r| {
                let every = header.rate.round().max(1.0) as u64;
                if r.tick % every == 0 {
                    writeln!(
                        w,
                        "t {:8.3}  x {:8.2}  y {:8.2}  heading {:7.2}  u_arms {:6.2}  u_legs {:6.2}",
                        r.time,
                        r.state.position.x,
                        r.state.position.y,
                        r.state.heading().to_degrees(),
                        r.u_exec[0].to_degrees(),
                        r.u_exec[1].to_degrees()
                    )?;
                }
                Ok(())
            })?;
            w.flush()?;
            drop(w);
            println!("replayed {} ticks in {:.2} s", stats.ticks, stats.wall.as_secs_f64());
            if resim {
                let full = EpisodeLog::load(&log)?;
                println!("largest re-simulation deviation {:.3e}", resimulate(&full)?);
            }
        }
        Command::Calibrate { target_speed, out } => {
            let setup = Setup::new(config.clone(), scenario)?;
            let cal = calibrate(&setup.body, &setup.neutral(), &setup.aero, &setup.env, target_speed, setup.dt)?;
            let check = terminal_speed(&setup.body, &setup.neutral(), &cal.coefficients, &setup.env, setup.dt)?;
            let error = (check - target_speed).abs() / target_speed;
            println!("[aero]\nc_drag_max = {}", cal.coefficients.c_drag_max);
            eprintln!("terminal speed {check:.3} m/s after {} iterations ({:.3}% from target)", cal.iterations, 100.0 * error);
            if error > 0.02 {
                return Err(Error::InvalidConfig(format!("calibration missed the target: {check:.3} m/s")));
            }
            if let Some(path) = out {
                config.aero.c_drag_max = cal.coefficients.c_drag_max;
                std::fs::write(&path, config.to_toml())?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Imitate { pattern, duration, trainee } => {
            let kind: TraineeKind = match trainee {
                Some(t) => toml::from_str(&t)?,
                None => TraineeKind::Ideal,
            };
            let (spec, neutral) = imitation_spec(&config, &scenario.pattern_set, &pattern)?;
            let report = run_imitation(&spec, &neutral, kind, config.sim.rate, duration, scenario.seed)?;
            match report.passed_at {
                Some(t) => println!(
                    "held within {:.2} deg for {:.1} s at t = {t:.2} s",
                    spec.hold_threshold.to_degrees(),
                    spec.hold_duration
                ),
                None => println!("not held within {duration:.1} s"),
            }
            println!("max rms error {:.3} deg", report.max_rms.to_degrees());
            if report.passed_at.is_none() {
                return Err(Error::InvalidScenario("imitation not achieved".into()));
            }
        }
        Command::Export { log, out } => {
            let log = EpisodeLog::load(&log)?;
            match out {
                Some(p) => write_csv(&log, BufWriter::new(File::create(p)?))?,
                None => write_csv(&log, BufWriter::new(std::io::stdout().lock()))?,
            }
        }
    }
    Ok(())
}
