//! C ABI over the simulator.
//!
//! Every function returns a [`SkydiveStatus`]; on failure the message is kept
//! per thread and read back with [`skydive_last_error`]. Panics never cross
//! the boundary. A simulation is an opaque [`SkydiveSim`] owned by the caller
//! between [`skydive_sim_new`] and [`skydive_sim_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use skydive_core::biomech::DOF_COUNT;
use skydive_core::config::{Config, Scenario};
use skydive_core::error::Error;
use skydive_core::session::{EpisodeLog, Outcome, Setup, Simulation, TickRecord};

/// Posture degrees of freedom in a frame.
pub const SKYDIVE_DOF_COUNT: usize = 45;
const _: () = assert!(SKYDIVE_DOF_COUNT == DOF_COUNT);

#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkydiveStatus {
    Ok = 0,
    /// The episode has ended; no frame was produced.
    Finished = 1,
    NullPointer = -1,
    InvalidArgument = -2,
    InvalidConfig = -3,
    Io = -4,
    CorruptLog = -5,
    /// The call does not fit the simulation's state or input mode.
    WrongState = -6,
    Panic = -99,
}

#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkydiveOutcome {
    Running = 0,
    Completed = 1,
    Timeout = 2,
    Diverged = 3,
    StreamLost = 4,
}

/// One tick, flattened. Inertial NED frame; quaternion is body to inertial.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkydiveFrame {
    pub tick: u64,
    pub time: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// `w, x, y, z`.
    pub orientation: [f64; 4],
    pub angular_rate: [f64; 3],
    pub omega_com: f64,
    pub v_com: f64,
    pub omega_meas: f64,
    pub v_meas: f64,
    /// Controller outputs `[arms, legs]`, rad.
    pub u_cmd: [f64; 2],
    /// Pattern angles of the executed posture, rad.
    pub u_exec: [f64; 2],
    pub cross_track: f64,
    pub progress: f64,
    pub inside_corridor: bool,
    pub desired_posture: [f64; SKYDIVE_DOF_COUNT],
    pub executed_posture: [f64; SKYDIVE_DOF_COUNT],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkydiveMetrics {
    /// Negative when the target was not reached.
    pub completion_time: f64,
    pub max_abs_u_arms: f64,
    pub max_abs_u_legs: f64,
    pub max_abs_omega_com: f64,
    pub yaw_rate_rms: f64,
    pub corridor_violation_time: f64,
    pub path_progress: f64,
}

/// Opaque simulation handle.
pub struct SkydiveSim {
    sim: Simulation,
    records: Vec<TickRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

struct Failure(SkydiveStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => SkydiveStatus::Io,
            Error::CorruptLog { .. } | Error::EmptyLog => SkydiveStatus::CorruptLog,
            Error::NonFinite(_) | Error::InvalidDelay(..) | Error::InvalidTimeStep(_) => SkydiveStatus::InvalidArgument,
            Error::Protocol(_) => SkydiveStatus::WrongState,
            _ => SkydiveStatus::InvalidConfig,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: SkydiveStatus, message: &str) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<SkydiveStatus, Failure>) -> SkydiveStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            SkydiveStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    match unsafe { CStr::from_ptr(p) }.to_str() {
        Ok(s) => Ok(Some(s)),
        Err(_) => fail(SkydiveStatus::InvalidArgument, &format!("{what} is not UTF-8")),
    }
}

unsafe fn handle<'a>(sim: *mut SkydiveSim) -> Result<&'a mut SkydiveSim, Failure> {
    match unsafe { sim.as_mut() } {
        Some(s) => Ok(s),
        None => fail(SkydiveStatus::NullPointer, "simulation handle is null"),
    }
}

fn outcome_code(o: Option<Outcome>) -> SkydiveOutcome {
    match o {
        None => SkydiveOutcome::Running,
        Some(Outcome::Completed) => SkydiveOutcome::Completed,
        Some(Outcome::Timeout) => SkydiveOutcome::Timeout,
        Some(Outcome::Diverged) => SkydiveOutcome::Diverged,
        Some(Outcome::StreamLost) => SkydiveOutcome::StreamLost,
    }
}

fn frame(r: &TickRecord) -> SkydiveFrame {
    let q = r.state.orientation.quaternion();
    SkydiveFrame {
        tick: r.tick,
        time: r.time,
        position: r.state.position.into(),
        velocity: r.state.velocity.into(),
        orientation: [q.w, q.i, q.j, q.k],
        angular_rate: r.state.angular_rate.into(),
        omega_com: r.commands.omega,
        v_com: r.commands.v,
        omega_meas: r.measured.omega,
        v_meas: r.measured.v,
        u_cmd: r.u_cmd,
        u_exec: r.u_exec,
        cross_track: r.corridor.cross_track,
        progress: r.corridor.progress,
        inside_corridor: r.corridor.inside,
        desired_posture: r.desired_posture.0,
        executed_posture: r.executed_posture.0,
    }
}

impl SkydiveSim {
    fn log(&self) -> Result<EpisodeLog, Failure> {
        if self.sim.outcome().is_none() {
            return fail(SkydiveStatus::WrongState, "episode still running");
        }
        if self.records.is_empty() {
            return Err(Error::EmptyLog.into());
        }
        let footer = self.sim.footer(&self.records)?;
        Ok(EpisodeLog { header: self.sim.setup().header(), records: self.records.clone(), footer })
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skydive_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn skydive_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        e.len()
    })
}

/// Creates a simulation from TOML texts; null selects the shipped defaults.
/// The settled initial state is computed here.
///
/// # Safety
/// `config_toml` and `scenario_toml` must be null or NUL-terminated strings;
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_new(
    config_toml: *const c_char,
    scenario_toml: *const c_char,
    out: *mut *mut SkydiveSim,
) -> SkydiveStatus {
    guard(|| {
        if out.is_null() {
            return fail(SkydiveStatus::NullPointer, "out is null");
        }
        unsafe { *out = std::ptr::null_mut() };
        let config = match unsafe { text(config_toml, "config") }? {
            Some(t) => Config::from_toml(t)?,
            None => Config::default(),
        };
        let scenario = match unsafe { text(scenario_toml, "scenario") }? {
            Some(t) => Scenario::from_toml(t)?,
            None => Scenario::default(),
        };
        let sim = Simulation::new(Setup::new(config, scenario)?)?;
        unsafe { *out = Box::into_raw(Box::new(SkydiveSim { sim, records: Vec::new() })) };
        Ok(SkydiveStatus::Ok)
    })
}

/// Releases a simulation. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`skydive_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_free(sim: *mut SkydiveSim) {
    if !sim.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(sim) })));
    }
}

/// Advances one tick and fills `out` (optional). Returns `Finished` once the
/// episode has ended.
///
/// # Safety
/// `sim` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_tick(sim: *mut SkydiveSim, out: *mut SkydiveFrame) -> SkydiveStatus {
    guard(|| {
        let s = unsafe { handle(sim) }?;
        match s.sim.tick()? {
            Some(r) => {
                if !out.is_null() {
                    unsafe { *out = frame(&r) };
                }
                s.records.push(r);
                Ok(SkydiveStatus::Ok)
            }
            None => Ok(SkydiveStatus::Finished),
        }
    })
}

/// Sets the externally driven pattern angles, rad, applied from the next
/// tick. Only valid when the scenario's input is `external`.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_set_input(sim: *mut SkydiveSim, u_arms: f64, u_legs: f64) -> SkydiveStatus {
    guard(|| {
        let s = unsafe { handle(sim) }?;
        s.sim.set_external_input(u_arms, u_legs)?;
        Ok(SkydiveStatus::Ok)
    })
}

/// Writes the episode outcome, `Running` while it lasts.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_outcome(sim: *mut SkydiveSim, out: *mut SkydiveOutcome) -> SkydiveStatus {
    guard(|| {
        let s = unsafe { handle(sim) }?;
        if out.is_null() {
            return fail(SkydiveStatus::NullPointer, "out is null");
        }
        unsafe { *out = outcome_code(s.sim.outcome()) };
        Ok(SkydiveStatus::Ok)
    })
}

/// Episode metrics; the episode must have ended.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_metrics(sim: *mut SkydiveSim, out: *mut SkydiveMetrics) -> SkydiveStatus {
    guard(|| {
        let s = unsafe { handle(sim) }?;
        if out.is_null() {
            return fail(SkydiveStatus::NullPointer, "out is null");
        }
        let m = s.log()?.footer.metrics;
        unsafe {
            *out = SkydiveMetrics {
                completion_time: m.completion_time.unwrap_or(-1.0),
                max_abs_u_arms: m.max_abs_u_arms,
                max_abs_u_legs: m.max_abs_u_legs,
                max_abs_omega_com: m.max_abs_omega_com,
                yaw_rate_rms: m.yaw_rate_rms,
                corridor_violation_time: m.corridor_violation_time,
                path_progress: m.path_progress,
            }
        };
        Ok(SkydiveStatus::Ok)
    })
}

/// Saves the finished episode as a JSON-lines log.
///
/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn skydive_sim_save_log(sim: *mut SkydiveSim, path: *const c_char) -> SkydiveStatus {
    guard(|| {
        let s = unsafe { handle(sim) }?;
        let Some(path) = (unsafe { text(path, "path") })? else {
            return fail(SkydiveStatus::NullPointer, "path is null");
        };
        s.log()?.save(Path::new(path))?;
        Ok(SkydiveStatus::Ok)
    })
}

/// Steady descent speed of the neutral posture under a configuration, m/s.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn skydive_terminal_speed(config_toml: *const c_char, out: *mut f64) -> SkydiveStatus {
    guard(|| {
        if out.is_null() {
            return fail(SkydiveStatus::NullPointer, "out is null");
        }
        let config = match unsafe { text(config_toml, "config") }? {
            Some(t) => Config::from_toml(t)?,
            None => Config::default(),
        };
        let body = config.body(None)?;
        let neutral = config.pattern_set("arms-legs")?.set.neutral;
        let v = skydive_core::dynamics::terminal_speed(&body, &neutral, &config.aero, &config.environment, config.dt())?;
        unsafe { *out = v };
        Ok(SkydiveStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, SkydiveStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let n = unsafe { skydive_last_error(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(n, msg.len());
    }

    #[test]
    fn last_error_truncates() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        assert_eq!(unsafe { skydive_last_error(buf.as_mut_ptr(), 4) }, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes(), b"abc");
        assert_eq!(unsafe { skydive_last_error(std::ptr::null_mut(), 0) }, 6);
    }
}
