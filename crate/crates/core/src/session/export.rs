//! CSV export of an episode log for plotting.

use std::io::Write;

use crate::error::Result;

use super::log::EpisodeLog;

pub const CSV_COLUMNS: [&str; 23] = [
    "tick",
    "time",
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "heading",
    "omega_com",
    "omega_meas",
    "v_com",
    "v_meas",
    "psi_error",
    "u_arms_cmd",
    "u_legs_cmd",
    "u_arms_desired",
    "u_legs_desired",
    "u_arms_exec",
    "u_legs_exec",
    "cross_track",
    "inside",
    "progress",
];

pub fn write_csv<W: Write>(log: &EpisodeLog, mut w: W) -> Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in &log.records {
        let s = &r.state;
        let row = [
            r.tick as f64,
            r.time,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.heading(),
            r.commands.omega,
            r.measured.omega,
            r.commands.v,
            r.measured.v,
            r.psi_error,
            r.u_cmd[0],
            r.u_cmd[1],
            r.u_desired[0],
            r.u_desired[1],
            r.u_exec[0],
            r.u_exec[1],
            r.corridor.cross_track,
            if r.corridor.inside { 1.0 } else { 0.0 },
            r.corridor.progress,
        ];
        let text: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", text.join(","))?;
    }
    w.flush()?;
    Ok(())
}
