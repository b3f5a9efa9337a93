//! Per-segment aerodynamic model.
//!
//! Each segment is a primitive with projected areas `A_k` normal to its three
//! primitive axes `e_k`. For a segment moving at `v` relative to still air,
//! with `f` the unit airflow direction expressed in primitive axes
//! (`f = -v/|v|`) and `q = ½ρ|v|²`:
//!
//! ```text
//! drag   = q · c_drag_max · sqrt(Σ (A_k f_k)²) · f
//! lift   = q · c_lift_max · Σ 2 A_k f_k (e_k − f_k f)      (A_k · sin 2α_k)
//! moment = q · c_moment_max · L · Σ 2 A_k f_k (e_k × f)
//! ```
//!
//! `α_k` is the inclination of the flow to the face with normal `e_k`, so each
//! face contributes a flat-plate lift peaking at 45°. The drag area is the
//! exact projected area of an ellipsoid and a smooth approximation for a
//! cylinder. Body-level damping adds
//! `M_i = −½ρ S L² c_i · sqrt(|v|² + L²|ω|²) · ω_i` about each body axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::biomech::{BodyModel, Kinematics, MassState, SEGMENT_COUNT};

use super::SkyState;

/// Airspeeds below this produce zero angles and zero load.
pub const MIN_AIRSPEED: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroCoefficients {
    pub c_lift_max: f64,
    pub c_drag_max: f64,
    pub c_moment_max: f64,
    pub c_roll_damp: f64,
    pub c_pitch_damp: f64,
    pub c_yaw_damp: f64,
}

impl AeroCoefficients {
    pub fn vacuum() -> Self {
        AeroCoefficients {
            c_lift_max: 0.0,
            c_drag_max: 0.0,
            c_moment_max: 0.0,
            c_roll_damp: 0.0,
            c_pitch_damp: 0.0,
            c_yaw_damp: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.c_lift_max, self.c_drag_max, self.c_moment_max, self.c_roll_damp, self.c_pitch_damp, self.c_yaw_damp]
            .iter()
            .all(|c| c.is_finite() && *c >= 0.0)
    }
}

/// Flow angles of a segment relative to the air, from the segment velocity
/// `u` in primitive axes: `alpha = atan2(u3, u1)`, `beta = asin(u2/|u|)`,
/// `roll = atan2(u2, u3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowAngles {
    pub alpha: f64,
    pub beta: f64,
    pub roll_rel: f64,
    pub airspeed: f64,
}

impl FlowAngles {
    pub fn from_velocity(u: &Vector3<f64>) -> FlowAngles {
        let speed = u.norm();
        if speed < MIN_AIRSPEED {
            return FlowAngles { alpha: 0.0, beta: 0.0, roll_rel: 0.0, airspeed: speed };
        }
        FlowAngles {
            alpha: u.z.atan2(u.x),
            beta: (u.y / speed).clamp(-1.0, 1.0).asin(),
            roll_rel: u.y.atan2(u.z),
            airspeed: speed,
        }
    }

    /// Unit direction of the segment's motion through the air, primitive axes.
    pub fn motion_direction(&self) -> Vector3<f64> {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        Vector3::new(cb * ca, sb, cb * sa)
    }
}

/// Flow angles for a segment whose primitive axes (columns, body frame) are
/// `axes` and whose CoG sits at `lever` from the body CoG.
pub fn flow_angles(axes: &Matrix3<f64>, lever: &Vector3<f64>, state: &SkyState) -> FlowAngles {
    let v_body = state.orientation.inverse_transform_vector(&state.velocity);
    let v_seg = v_body + state.angular_rate.cross(lever);
    FlowAngles::from_velocity(&(axes.transpose() * v_seg))
}

/// Total aerodynamic force and moment in the body frame (moment about the CoG).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

/// Posture-dependent geometry cached for repeated load evaluation.
#[derive(Clone, Debug)]
pub struct AeroGeometry {
    axes: [Matrix3<f64>; SEGMENT_COUNT],
    lever: [Vector3<f64>; SEGMENT_COUNT],
    areas: [Vector3<f64>; SEGMENT_COUNT],
    length: [f64; SEGMENT_COUNT],
    reference_area: f64,
    reference_length: f64,
}

impl AeroGeometry {
    pub fn new(body: &BodyModel, kin: &Kinematics, mass: &MassState) -> Self {
        AeroGeometry {
            axes: std::array::from_fn(|i| kin.rotation[i] * body.segments[i].axes),
            lever: std::array::from_fn(|i| kin.cog[i] - mass.cog),
            areas: std::array::from_fn(|i| body.segments[i].areas),
            length: std::array::from_fn(|i| body.segments[i].length),
            reference_area: body.reference_area,
            reference_length: body.reference_length,
        }
    }

    pub fn segment_axes(&self, i: usize) -> &Matrix3<f64> {
        &self.axes[i]
    }

    pub fn lever(&self, i: usize) -> &Vector3<f64> {
        &self.lever[i]
    }

    /// Loads given the CoG velocity and angular rate, both in the body frame.
    pub fn wrench(&self, v_body: &Vector3<f64>, omega: &Vector3<f64>, coeffs: &AeroCoefficients, air_density: f64) -> Wrench {
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for i in 0..SEGMENT_COUNT {
            let v_seg = v_body + omega.cross(&self.lever[i]);
            let angles = FlowAngles::from_velocity(&(self.axes[i].transpose() * v_seg));
            let local = segment_load(&angles, &self.areas[i], self.length[i], coeffs, air_density);
            let f = self.axes[i] * local.force;
            force += f;
            moment += self.lever[i].cross(&f) + self.axes[i] * local.moment;
        }
        let speed_sq = v_body.norm_squared() + (self.reference_length * omega.norm()).powi(2);
        if speed_sq > 0.0 {
            let k = 0.5 * air_density * self.reference_area * self.reference_length.powi(2) * speed_sq.sqrt();
            moment -= k * Vector3::new(coeffs.c_roll_damp * omega.x, coeffs.c_pitch_damp * omega.y, coeffs.c_yaw_damp * omega.z);
        }
        Wrench { force, moment }
    }
}

/// Load on a single segment in its primitive axes, from its flow angles.
pub fn segment_load(
    angles: &FlowAngles,
    areas: &Vector3<f64>,
    length: f64,
    coeffs: &AeroCoefficients,
    air_density: f64,
) -> Wrench {
    if angles.airspeed < MIN_AIRSPEED {
        return Wrench::default();
    }
    let q = 0.5 * air_density * angles.airspeed * angles.airspeed;
    let f = -angles.motion_direction();
    let projected = areas.component_mul(&f).norm();
    let mut force = f * (coeffs.c_drag_max * projected);
    let mut moment = Vector3::zeros();
    for k in 0..3 {
        let e = Vector3::ith(k, 1.0);
        let w = 2.0 * areas[k] * f[k];
        force += (e - f * f[k]) * (coeffs.c_lift_max * w);
        moment += e.cross(&f) * (coeffs.c_moment_max * length * w);
    }
    Wrench { force: force * q, moment: moment * q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};

    fn drag_only(c_drag_max: f64) -> AeroCoefficients {
        AeroCoefficients { c_drag_max, ..AeroCoefficients::vacuum() }
    }

    #[test]
    fn face_on_flat_plate() {
        let area = 0.35;
        let v = 50.0;
        let mut coeffs = drag_only(1.1);
        coeffs.c_lift_max = 0.7;
        coeffs.c_moment_max = 0.2;
        let angles = FlowAngles::from_velocity(&Vector3::new(0.0, 0.0, v));
        let w = segment_load(&angles, &Vector3::new(0.0, 0.0, area), 0.5, &coeffs, 1.2);
        let expected = 0.5 * 1.2 * 1.1 * area * v * v;
        assert!((w.force.norm() - expected).abs() < 1e-9 * expected);
        assert!((w.force.z + expected).abs() < 1e-9 * expected);
        assert!(w.moment.norm() < 1e-9);
    }

    #[test]
    fn aligned_and_normal_flow() {
        let a = FlowAngles::from_velocity(&Vector3::new(5.0, 0.0, 0.0));
        assert_eq!((a.alpha, a.beta), (0.0, 0.0));
        let n = FlowAngles::from_velocity(&Vector3::new(0.0, 0.0, 5.0));
        assert!((n.alpha - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let still = FlowAngles::from_velocity(&Vector3::new(1e-7, 0.0, 0.0));
        assert_eq!((still.alpha, still.beta, still.roll_rel), (0.0, 0.0, 0.0));
        let load = segment_load(&still, &Vector3::new(1.0, 1.0, 1.0), 1.0, &drag_only(1.0), 1.0);
        assert_eq!(load, Wrench::default());
    }

    #[test]
    fn flow_angles_match_geometric_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut r = || rng.random_range(-1.0..1.0);
        for _ in 0..500 {
            let axes = UnitQuaternion::from_euler_angles(3.0 * r(), 1.5 * r(), 3.0 * r()).to_rotation_matrix().into_inner();
            let lever = Vector3::new(r(), r(), r());
            let mut state = SkyState::at_rest(Vector3::zeros(), 0.0);
            state.orientation = UnitQuaternion::from_euler_angles(3.0 * r(), 1.5 * r(), 3.0 * r());
            state.velocity = Vector3::new(20.0 * r(), 20.0 * r(), 20.0 * r());
            state.angular_rate = Vector3::new(2.0 * r(), 2.0 * r(), 2.0 * r());
            let got = flow_angles(&axes, &lever, &state);

            let v = state.orientation.inverse() * state.velocity;
            let (w, l) = (state.angular_rate, lever);
            let seg = Vector3::new(v.x + w.y * l.z - w.z * l.y, v.y + w.z * l.x - w.x * l.z, v.z + w.x * l.y - w.y * l.x);
            let u: Vec<f64> = (0..3).map(|k| seg.dot(&axes.column(k))).collect();
            let in_plane = (u[0] * u[0] + u[2] * u[2]).sqrt();
            let alpha = (u[0] / in_plane).acos().copysign(u[2]);
            let beta = (u[1] / in_plane).atan();
            let roll = (u[2] / (u[1] * u[1] + u[2] * u[2]).sqrt()).acos().copysign(u[1]);
            assert!((got.alpha - alpha).abs() < 1e-9, "{} vs {alpha}", got.alpha);
            assert!((got.beta - beta).abs() < 1e-9);
            assert!((got.roll_rel - roll).abs() < 1e-9);
            assert!((got.airspeed - seg.norm()).abs() < 1e-9);
            let dir = got.motion_direction();
            assert!((dir - Vector3::new(u[0], u[1], u[2]) / seg.norm()).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_drag_opposes_relative_wind() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u = Vector3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
            let areas = Vector3::new(rng.random_range(0.0..0.2), rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let w = segment_load(&FlowAngles::from_velocity(&u), &areas, 0.4, &drag_only(1.0), 1.0);
            assert!(w.force.cross(&u).norm() <= 1e-9 * w.force.norm() * u.norm());
            for k in 0..3 {
                assert!(w.force[k] * u[k] <= 0.0);
            }
        }
    }

    #[test]
    fn coefficients_validate() {
        assert!(AeroCoefficients::vacuum().is_valid());
        assert!(!drag_only(-0.1).is_valid());
        assert!(!drag_only(f64::NAN).is_valid());
    }
}
