use std::ffi::{c_char, CStr, CString};
use std::ptr;

use skydive_core::config::{Config, InputConfig, Scenario};
use skydive_core::session::{run_episode, EpisodeLog};
use skydive_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { skydive_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn quick(input: InputConfig, timeout: f64) -> (Config, Scenario) {
    let mut c = Config::default();
    c.sim.settle_time = 1.0;
    let s = Scenario { timeout, input, ..Scenario::default() };
    (c, s)
}

fn new_sim(c: &Config, s: &Scenario) -> *mut SkydiveSim {
    let c = CString::new(c.to_toml()).unwrap();
    let s = CString::new(s.to_toml()).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { skydive_sim_new(c.as_ptr(), s.as_ptr(), &mut sim) }, SkydiveStatus::Ok, "{}", last_error());
    assert!(!sim.is_null());
    sim
}

fn blank_frame() -> SkydiveFrame {
    SkydiveFrame {
        tick: 0,
        time: 0.0,
        position: [0.0; 3],
        velocity: [0.0; 3],
        orientation: [0.0; 4],
        angular_rate: [0.0; 3],
        omega_com: 0.0,
        v_com: 0.0,
        omega_meas: 0.0,
        v_meas: 0.0,
        u_cmd: [0.0; 2],
        u_exec: [0.0; 2],
        cross_track: 0.0,
        progress: 0.0,
        inside_corridor: false,
        desired_posture: [0.0; SKYDIVE_DOF_COUNT],
        executed_posture: [0.0; SKYDIVE_DOF_COUNT],
    }
}

#[test]
fn handle_run_matches_the_library_episode() {
    let (c, s) = quick(InputConfig::Trainee { trainee: skydive_core::trainee::TraineeKind::Ideal }, 2.0);
    let sim = new_sim(&c, &s);
    let mut f = blank_frame();
    let mut frames = Vec::new();
    let mut outcome = SkydiveOutcome::Completed;
    unsafe { skydive_sim_outcome(sim, &mut outcome) };
    assert_eq!(outcome, SkydiveOutcome::Running);
    let mut m = SkydiveMetrics {
        completion_time: 0.0,
        max_abs_u_arms: 0.0,
        max_abs_u_legs: 0.0,
        max_abs_omega_com: 0.0,
        yaw_rate_rms: 0.0,
        corridor_violation_time: 0.0,
        path_progress: 0.0,
    };
    assert_eq!(unsafe { skydive_sim_metrics(sim, &mut m) }, SkydiveStatus::WrongState);
    loop {
        match unsafe { skydive_sim_tick(sim, &mut f) } {
            SkydiveStatus::Ok => frames.push(f),
            SkydiveStatus::Finished => break,
            other => panic!("{other:?}: {}", last_error()),
        }
    }
    assert_eq!(unsafe { skydive_sim_tick(sim, ptr::null_mut()) }, SkydiveStatus::Finished);
    unsafe { skydive_sim_outcome(sim, &mut outcome) };
    assert_eq!(outcome, SkydiveOutcome::Timeout);

    let reference = run_episode(c, s).unwrap();
    assert_eq!(frames.len(), reference.records.len());
    for (f, r) in frames.iter().zip(&reference.records) {
        assert_eq!(f.tick, r.tick);
        assert_eq!(f.position, <[f64; 3]>::from(r.state.position));
        assert_eq!(f.u_cmd, r.u_cmd);
        assert_eq!(f.desired_posture, r.desired_posture.0);
    }
    assert_eq!(unsafe { skydive_sim_metrics(sim, &mut m) }, SkydiveStatus::Ok);
    let rm = &reference.footer.metrics;
    assert_eq!(m.completion_time, -1.0);
    assert_eq!(m.max_abs_u_arms, rm.max_abs_u_arms);
    assert_eq!(m.path_progress, rm.path_progress);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ffi.jsonl");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { skydive_sim_save_log(sim, cpath.as_ptr()) }, SkydiveStatus::Ok);
    assert_eq!(EpisodeLog::load(&path).unwrap().to_bytes(), reference.to_bytes());
    unsafe { skydive_sim_free(sim) };
}

#[test]
fn external_input_drives_the_posture() {
    let (c, s) = quick(InputConfig::External, 0.5);
    let sim = new_sim(&c, &s);
    let mut f = blank_frame();
    assert_eq!(unsafe { skydive_sim_set_input(sim, 0.1, -0.05) }, SkydiveStatus::Ok);
    assert_eq!(unsafe { skydive_sim_tick(sim, &mut f) }, SkydiveStatus::Ok);
    assert!((f.u_exec[0] - 0.1).abs() < 1e-12 && (f.u_exec[1] + 0.05).abs() < 1e-12, "{:?}", f.u_exec);
    assert_eq!(unsafe { skydive_sim_set_input(sim, f64::NAN, 0.0) }, SkydiveStatus::InvalidArgument);
    assert!(last_error().contains("non-finite"), "{}", last_error());
    unsafe { skydive_sim_free(sim) };

    let (c, s) = quick(InputConfig::Frozen, 0.5);
    let sim = new_sim(&c, &s);
    assert_eq!(unsafe { skydive_sim_set_input(sim, 0.1, 0.0) }, SkydiveStatus::WrongState);
    unsafe { skydive_sim_free(sim) };
}

#[test]
fn bad_arguments_are_reported() {
    let mut sim = ptr::null_mut();
    let junk = CString::new("[sim\nrate = ").unwrap();
    assert_eq!(unsafe { skydive_sim_new(junk.as_ptr(), ptr::null(), &mut sim) }, SkydiveStatus::InvalidConfig);
    assert!(sim.is_null());
    assert!(last_error().contains("toml"), "{}", last_error());

    let bad_timeout = CString::new(Scenario { timeout: -1.0, ..Scenario::default() }.to_toml()).unwrap();
    assert_eq!(unsafe { skydive_sim_new(ptr::null(), bad_timeout.as_ptr(), &mut sim) }, SkydiveStatus::InvalidConfig);

    let not_utf8 = [0xffu8 as c_char, 0];
    assert_eq!(unsafe { skydive_sim_new(not_utf8.as_ptr(), ptr::null(), &mut sim) }, SkydiveStatus::InvalidArgument);
    assert_eq!(unsafe { skydive_sim_new(ptr::null(), ptr::null(), ptr::null_mut()) }, SkydiveStatus::NullPointer);
    assert_eq!(unsafe { skydive_sim_tick(ptr::null_mut(), ptr::null_mut()) }, SkydiveStatus::NullPointer);
    let mut o = SkydiveOutcome::Running;
    assert_eq!(unsafe { skydive_sim_outcome(ptr::null_mut(), &mut o) }, SkydiveStatus::NullPointer);
    unsafe { skydive_sim_free(ptr::null_mut()) };

    assert!(unsafe { CStr::from_ptr(skydive_version()) }.to_str().unwrap().starts_with("0."));
}

#[test]
fn terminal_speed_of_the_shipped_config() {
    let mut v = 0.0;
    assert_eq!(unsafe { skydive_terminal_speed(ptr::null(), &mut v) }, SkydiveStatus::Ok);
    assert!((v - 61.0).abs() < 0.61, "{v}");
}
