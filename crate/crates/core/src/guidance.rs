//! Path planning and look-ahead guidance.
//!
//! Positions are horizontal `(north, east)` pairs. The online law steers
//! toward a path point `t_LA·|V|` of arc length beyond the closest point:
//!
//! ```text
//! Ψ_error = wrap(atan2(Y_LA − Y, X_LA − X) − atan2(V_y, V_x))
//! Ω_com   = 2 · Ψ_error / t_LA
//! ```

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::SkyState;
use crate::error::{Error, Result};

/// Minimum start-to-target separation for planning, m.
pub const MIN_PLAN_DISTANCE: f64 = 1.0;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Trapezoidal speed profile over arc length: accelerate from the approach
/// speed, cruise, and decelerate back to it at the end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfile {
    pub cruise: f64,
    /// Along-path acceleration used for both ramps, m/s².
    pub accel: f64,
    pub approach: f64,
}

impl SpeedProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.cruise) && ok(self.accel) && ok(self.approach) && self.approach <= self.cruise) {
            return Err(Error::InvalidPath(format!("speed profile {self:?} must be positive with approach ≤ cruise")));
        }
        Ok(())
    }

    pub fn speed_at(&self, s: f64, length: f64) -> f64 {
        let s = s.clamp(0.0, length);
        let v0 = self.approach * self.approach;
        let up = (v0 + 2.0 * self.accel * s).sqrt();
        let down = (v0 + 2.0 * self.accel * (length - s)).sqrt();
        self.cruise.min(up).min(down)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    waypoints: Vec<Vector2<f64>>,
    arc: Vec<f64>,
    pub profile: SpeedProfile,
    pub corridor_half_width: f64,
}

/// Closest path point to a query position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Closest {
    pub arc: f64,
    pub point: Vector2<f64>,
    /// Signed lateral offset, positive to the right of the path direction.
    pub cross_track: f64,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceCommand {
    pub omega_com: f64,
    pub v_com: f64,
    pub psi_error: f64,
    pub lookahead_point: [f64; 2],
    pub lookahead_arc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorridorStatus {
    pub cross_track: f64,
    pub inside: bool,
    /// Arc length of the closest path point, m.
    pub progress: f64,
}

impl PlannedPath {
    pub fn from_waypoints(points: &[[f64; 2]], profile: SpeedProfile, corridor_half_width: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPath("at least two waypoints are required".into()));
        }
        profile.validate()?;
        if !(corridor_half_width.is_finite() && corridor_half_width > 0.0) {
            return Err(Error::InvalidPath("corridor half-width must be positive".into()));
        }
        let waypoints: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        if !waypoints.iter().all(|w| w.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidPath("non-finite waypoint".into()));
        }
        let mut arc = vec![0.0];
        for w in waypoints.windows(2) {
            let d = (w[1] - w[0]).norm();
            if d <= 0.0 {
                return Err(Error::InvalidPath("repeated waypoint".into()));
            }
            arc.push(arc.last().unwrap() + d);
        }
        Ok(PlannedPath { waypoints, arc, profile, corridor_half_width })
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn start(&self) -> Vector2<f64> {
        self.waypoints[0]
    }

    pub fn target(&self) -> Vector2<f64> {
        *self.waypoints.last().unwrap()
    }

    pub fn waypoints(&self) -> Vec<[f64; 2]> {
        self.waypoints.iter().map(|w| [w.x, w.y]).collect()
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    fn segment_at(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        match self.arc.iter().position(|&a| a > s) {
            Some(i) => i - 1,
            None => self.waypoints.len() - 2,
        }
    }

    pub fn point_at(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(0.0, self.length());
        if s >= self.length() {
            return self.target();
        }
        let i = self.segment_at(s);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let t = (s - self.arc[i]) / (self.arc[i + 1] - self.arc[i]);
        a + (b - a) * t
    }

    /// Unit path direction at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vector2<f64> {
        let i = self.segment_at(s);
        (self.waypoints[i + 1] - self.waypoints[i]).normalize()
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        self.profile.speed_at(s, self.length())
    }

    /// Closest point; ties go to the smallest arc length.
    pub fn closest(&self, p: &Vector2<f64>) -> Closest {
        let mut best: Option<Closest> = None;
        for i in 0..self.waypoints.len() - 1 {
            let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
            let d = b - a;
            let len = self.arc[i + 1] - self.arc[i];
            let t = ((p - a).dot(&d) / (len * len)).clamp(0.0, 1.0);
            let point = a + d * t;
            let distance = (p - point).norm();
            if best.is_none_or(|c| distance < c.distance) {
                let dir = d / len;
                let rel = p - point;
                best = Some(Closest { arc: self.arc[i] + t * len, point, cross_track: dir.x * rel.y - dir.y * rel.x, distance });
            }
        }
        best.expect("path has at least one segment")
    }

    pub fn corridor_status(&self, p: &Vector2<f64>) -> CorridorStatus {
        let c = self.closest(p);
        // Beyond the ends the lateral offset is the full distance.
        let lateral = if c.arc <= 0.0 || c.arc >= self.length() { c.distance } else { c.cross_track.abs() };
        CorridorStatus {
            cross_track: if c.cross_track < 0.0 { -lateral } else { lateral },
            inside: lateral <= self.corridor_half_width,
            progress: c.arc,
        }
    }

    /// Left and right corridor boundaries, mitred at interior waypoints.
    pub fn corridor_lines(&self) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let n = self.waypoints.len();
        let normal = |i: usize| {
            let d = (self.waypoints[i + 1] - self.waypoints[i]).normalize();
            Vector2::new(-d.y, d.x)
        };
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let nrm = if i == 0 {
                normal(0)
            } else if i == n - 1 {
                normal(n - 2)
            } else {
                let (a, b) = (normal(i - 1), normal(i));
                let m = (a + b).normalize();
                m / m.dot(&a).max(0.2)
            };
            let w = self.waypoints[i];
            let r = w + nrm * self.corridor_half_width;
            let l = w - nrm * self.corridor_half_width;
            left.push([l.x, l.y]);
            right.push([r.x, r.y]);
        }
        (left, right)
    }
}

/// Straight-line plan from `start` to `target`.
pub fn plan_path(start: [f64; 2], target: [f64; 2], profile: SpeedProfile, corridor_half_width: f64) -> Result<PlannedPath> {
    let d = ((target[0] - start[0]).powi(2) + (target[1] - start[1]).powi(2)).sqrt();
    if d.is_nan() || d < MIN_PLAN_DISTANCE {
        return Err(Error::InvalidPath(format!("start and target are {d:.3} m apart; need ≥ {MIN_PLAN_DISTANCE} m")));
    }
    PlannedPath::from_waypoints(&[start, target], profile, corridor_half_width)
}

/// Heading the look-ahead bearing is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingSource {
    /// Horizontal velocity heading, body yaw below the minimum speed.
    #[default]
    Velocity,
    /// Body yaw. Removes the lag of the velocity behind the body.
    Body,
}

impl HeadingSource {
    pub fn heading(self, state: &SkyState) -> f64 {
        match self {
            HeadingSource::Velocity => state.track_heading(),
            HeadingSource::Body => state.heading(),
        }
    }
}

/// The look-ahead law for the current state, against the velocity heading.
pub fn guidance_step(path: &PlannedPath, state: &SkyState, t_la: f64) -> Result<GuidanceCommand> {
    guidance_step_with(path, state, t_la, HeadingSource::Velocity)
}

pub fn guidance_step_with(path: &PlannedPath, state: &SkyState, t_la: f64, heading: HeadingSource) -> Result<GuidanceCommand> {
    if !(t_la.is_finite() && t_la > 0.0) {
        return Err(Error::InvalidConfig(format!("look-ahead time {t_la} must be positive")));
    }
    let pos = Vector2::new(state.position.x, state.position.y);
    let closest = path.closest(&pos);
    let s_la = (closest.arc + t_la * state.horizontal_speed()).min(path.length());
    let la = path.point_at(s_la);
    let to = la - pos;
    let bearing = if to.norm() > 1e-9 {
        to.y.atan2(to.x)
    } else {
        let t = path.tangent_at(s_la);
        t.y.atan2(t.x)
    };
    let psi_error = wrap_angle(bearing - heading.heading(state));
    Ok(GuidanceCommand {
        omega_com: 2.0 * psi_error / t_la,
        v_com: path.speed_at(s_la),
        psi_error,
        lookahead_point: [la.x, la.y],
        lookahead_arc: s_la,
    })
}
