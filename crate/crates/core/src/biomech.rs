//! Segmented biomechanical body model.
//!
//! The body is a tree of 16 rigid segments rooted at the pelvis and linked by
//! 15 three-axis joints, giving a 45-DOF posture vector. Body frame: `x`
//! toward the head, `y` to the right, `z` toward the belly (down when falling
//! belly-to-earth). In the all-zero posture every segment frame is aligned
//! with the body frame: trunk and head along `+x`, arms straight out to the
//! sides, legs straight back.
//!
//! Joint axes are fixed body-frame axes shared by the left and right joints
//! of a pair, so a positive angle is the same right-hand rotation on both
//! sides. Consequently a shoulder "flexion" angle swings the right arm toward
//! the head and the left arm toward the feet.
//!
//! | joints                 | axis 0 (flexion) | axis 1 (abduction) | axis 2 (rotation) |
//! |------------------------|------------------|--------------------|-------------------|
//! | lumbar, thoracic, neck | `-y`             | `+z`               | `+x`              |
//! | left arm chain         | `-z`             | `-x`               | `-y` (distal)     |
//! | right arm chain        | `-z`             | `-x`               | `+y` (distal)     |
//! | leg chains             | `+y`             | `-z`               | `-x` (distal)     |
//!
//! Each joint rotation is the intrinsic product `R(a0,θ0)·R(a1,θ1)·R(a2,θ2)`.
//! For the legs a positive axis-0 angle lowers the distal segment toward the
//! belly: hip flexion, knee extension relative to the arched neutral.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEGMENT_COUNT: usize = 16;
pub const JOINT_COUNT: usize = 15;
pub const DOF_COUNT: usize = 3 * JOINT_COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentId {
    Pelvis,
    Abdomen,
    Thorax,
    Head,
    LUpperArm,
    LForearm,
    LHand,
    RUpperArm,
    RForearm,
    RHand,
    LUpperLeg,
    LLowerLeg,
    LFoot,
    RUpperLeg,
    RLowerLeg,
    RFoot,
}

impl SegmentId {
    pub const ALL: [SegmentId; SEGMENT_COUNT] = [
        SegmentId::Pelvis,
        SegmentId::Abdomen,
        SegmentId::Thorax,
        SegmentId::Head,
        SegmentId::LUpperArm,
        SegmentId::LForearm,
        SegmentId::LHand,
        SegmentId::RUpperArm,
        SegmentId::RForearm,
        SegmentId::RHand,
        SegmentId::LUpperLeg,
        SegmentId::LLowerLeg,
        SegmentId::LFoot,
        SegmentId::RUpperLeg,
        SegmentId::RLowerLeg,
        SegmentId::RFoot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentId::Pelvis => "pelvis",
            SegmentId::Abdomen => "abdomen",
            SegmentId::Thorax => "thorax",
            SegmentId::Head => "head",
            SegmentId::LUpperArm => "l_upper_arm",
            SegmentId::LForearm => "l_forearm",
            SegmentId::LHand => "l_hand",
            SegmentId::RUpperArm => "r_upper_arm",
            SegmentId::RForearm => "r_forearm",
            SegmentId::RHand => "r_hand",
            SegmentId::LUpperLeg => "l_upper_leg",
            SegmentId::LLowerLeg => "l_lower_leg",
            SegmentId::LFoot => "l_foot",
            SegmentId::RUpperLeg => "r_upper_leg",
            SegmentId::RLowerLeg => "r_lower_leg",
            SegmentId::RFoot => "r_foot",
        }
    }

    /// Segment on the other side of the sagittal plane (itself for midline segments).
    pub fn mirror(self) -> SegmentId {
        use SegmentId::*;
        match self {
            LUpperArm => RUpperArm,
            LForearm => RForearm,
            LHand => RHand,
            RUpperArm => LUpperArm,
            RForearm => LForearm,
            RHand => LHand,
            LUpperLeg => RUpperLeg,
            LLowerLeg => RLowerLeg,
            LFoot => RFoot,
            RUpperLeg => LUpperLeg,
            RLowerLeg => LLowerLeg,
            RFoot => LFoot,
            other => other,
        }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Joints in canonical order; joint `k` drives segment `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    Lumbar,
    Thoracic,
    Neck,
    LShoulder,
    LElbow,
    LWrist,
    RShoulder,
    RElbow,
    RWrist,
    LHip,
    LKnee,
    LAnkle,
    RHip,
    RKnee,
    RAnkle,
}

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::Lumbar,
        JointId::Thoracic,
        JointId::Neck,
        JointId::LShoulder,
        JointId::LElbow,
        JointId::LWrist,
        JointId::RShoulder,
        JointId::RElbow,
        JointId::RWrist,
        JointId::LHip,
        JointId::LKnee,
        JointId::LAnkle,
        JointId::RHip,
        JointId::RKnee,
        JointId::RAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Lumbar => "lumbar",
            JointId::Thoracic => "thoracic",
            JointId::Neck => "neck",
            JointId::LShoulder => "l_shoulder",
            JointId::LElbow => "l_elbow",
            JointId::LWrist => "l_wrist",
            JointId::RShoulder => "r_shoulder",
            JointId::RElbow => "r_elbow",
            JointId::RWrist => "r_wrist",
            JointId::LHip => "l_hip",
            JointId::LKnee => "l_knee",
            JointId::LAnkle => "l_ankle",
            JointId::RHip => "r_hip",
            JointId::RKnee => "r_knee",
            JointId::RAnkle => "r_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<JointId> {
        JointId::ALL.into_iter().find(|j| j.name() == name)
    }

    pub fn parent(self) -> SegmentId {
        use JointId::*;
        match self {
            Lumbar | LHip | RHip => SegmentId::Pelvis,
            Thoracic => SegmentId::Abdomen,
            Neck | LShoulder | RShoulder => SegmentId::Thorax,
            LElbow => SegmentId::LUpperArm,
            LWrist => SegmentId::LForearm,
            RElbow => SegmentId::RUpperArm,
            RWrist => SegmentId::RForearm,
            LKnee => SegmentId::LUpperLeg,
            LAnkle => SegmentId::LLowerLeg,
            RKnee => SegmentId::RUpperLeg,
            RAnkle => SegmentId::RLowerLeg,
        }
    }

    pub fn child(self) -> SegmentId {
        SegmentId::ALL[self.index() + 1]
    }

    pub fn mirror(self) -> JointId {
        use JointId::*;
        match self {
            LShoulder => RShoulder,
            LElbow => RElbow,
            LWrist => RWrist,
            RShoulder => LShoulder,
            RElbow => LElbow,
            RWrist => LWrist,
            LHip => RHip,
            LKnee => RKnee,
            LAnkle => RAnkle,
            RHip => LHip,
            RKnee => LKnee,
            RAnkle => LAnkle,
            other => other,
        }
    }

    /// Rotation axes (parent frame) for (flexion, abduction, rotation).
    pub fn axes(self) -> [Vector3<f64>; 3] {
        use JointId::*;
        let x = Vector3::x();
        let y = Vector3::y();
        let z = Vector3::z();
        match self {
            Lumbar | Thoracic | Neck => [-y, z, x],
            LShoulder | LElbow | LWrist => [-z, -x, -y],
            RShoulder | RElbow | RWrist => [-z, -x, y],
            LHip | LKnee | LAnkle | RHip | RKnee | RAnkle => [y, -z, -x],
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Flexion,
    Abduction,
    Rotation,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Flexion, Axis::Abduction, Axis::Rotation];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Flexion => "flexion",
            Axis::Abduction => "abduction",
            Axis::Rotation => "rotation",
        }
    }
}

/// Index of a DOF in the 45-vector.
pub fn dof_index(joint: JointId, axis: Axis) -> usize {
    3 * joint.index() + axis as usize
}

/// Human-readable DOF name, e.g. `r_shoulder.flexion`.
pub fn dof_name(index: usize) -> String {
    let joint = JointId::ALL[index / 3];
    format!("{}.{}", joint.name(), Axis::ALL[index % 3].name())
}

/// Parses a DOF name produced by [`dof_name`].
pub fn parse_dof(name: &str) -> Option<usize> {
    let (joint, axis) = name.split_once('.')?;
    let joint = JointId::from_name(joint)?;
    let axis = Axis::ALL.into_iter().find(|a| a.name() == axis)?;
    Some(dof_index(joint, axis))
}

/// Sign relating a DOF to its mirror image: the mirrored posture sets DOF
/// `mirror_dof(i)` to `mirror_sign(i) * angle_i`.
pub fn mirror_sign(index: usize) -> f64 {
    let joint = JointId::ALL[index / 3];
    let axis = index % 3;
    let a = joint.axes()[axis];
    let b = joint.mirror().axes()[axis];
    // A reflection maps a rotation vector w to -M w.
    let reflected = -Vector3::new(a.x, -a.y, a.z);
    b.dot(&reflected).round()
}

pub fn mirror_dof(index: usize) -> usize {
    let joint = JointId::ALL[index / 3];
    3 * joint.mirror().index() + index % 3
}

/// Body configuration: three joint angles (rad) per joint in canonical order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posture(pub [f64; DOF_COUNT]);

impl Default for Posture {
    fn default() -> Self {
        Posture::zero()
    }
}

impl Posture {
    pub fn zero() -> Self {
        Posture([0.0; DOF_COUNT])
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        let arr: [f64; DOF_COUNT] = values.try_into().ok()?;
        Some(Posture(arr))
    }

    pub fn get(&self, joint: JointId, axis: Axis) -> f64 {
        self.0[dof_index(joint, axis)]
    }

    pub fn set(&mut self, joint: JointId, axis: Axis, value: f64) {
        self.0[dof_index(joint, axis)] = value;
    }

    pub fn joint(&self, joint: JointId) -> [f64; 3] {
        let i = 3 * joint.index();
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Reflection about the sagittal plane.
    pub fn mirrored(&self) -> Posture {
        let mut out = [0.0; DOF_COUNT];
        for (i, v) in self.0.iter().enumerate() {
            out[mirror_dof(i)] = mirror_sign(i) * v;
        }
        Posture(out)
    }

    pub fn add_scaled(&self, other: &[f64; DOF_COUNT], scale: f64) -> Posture {
        let mut out = self.0;
        for (o, w) in out.iter_mut().zip(other) {
            *o += scale * w;
        }
        Posture(out)
    }

    pub fn sub(&self, other: &Posture) -> [f64; DOF_COUNT] {
        std::array::from_fn(|i| self.0[i] - other.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for Posture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Posture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Posture::from_slice(&v)
            .ok_or_else(|| serde::de::Error::custom(format!("posture needs {DOF_COUNT} values, got {}", v.len())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cylinder,
    Ellipsoid,
}

/// Anatomical fraction table row. Lengths and widths are fractions of
/// stature, `com` is the CoG location along the segment from its proximal
/// joint as a fraction of segment length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFractions {
    pub mass: f64,
    pub length: f64,
    pub width: f64,
    pub depth: f64,
    pub com: f64,
    pub shape: PrimitiveKind,
}

const fn row(mass: f64, length: f64, width: f64, depth: f64, com: f64, shape: PrimitiveKind) -> SegmentFractions {
    SegmentFractions { mass, length, width, depth, com, shape }
}

use PrimitiveKind::{Cylinder, Ellipsoid};

/// Default table: adult male mass and length fractions after de Leva (1996),
/// with widths chosen for simple primitives. Indexed by [`SegmentId`].
pub const DEFAULT_FRACTIONS: [SegmentFractions; SEGMENT_COUNT] = [
    row(0.1117, 0.0837, 0.190, 0.120, 0.50, Ellipsoid), // pelvis
    row(0.1633, 0.1238, 0.170, 0.110, 0.45, Ellipsoid), // abdomen
    row(0.1596, 0.0980, 0.200, 0.120, 0.50, Ellipsoid), // thorax
    row(0.0694, 0.1395, 0.090, 0.110, 0.50, Ellipsoid), // head
    row(0.0271, 0.1618, 0.055, 0.055, 0.577, Cylinder), // upper arm
    row(0.0162, 0.1545, 0.045, 0.045, 0.457, Cylinder), // forearm
    row(0.0061, 0.0495, 0.050, 0.015, 0.50, Ellipsoid), // hand
    row(0.0271, 0.1618, 0.055, 0.055, 0.577, Cylinder),
    row(0.0162, 0.1545, 0.045, 0.045, 0.457, Cylinder),
    row(0.0061, 0.0495, 0.050, 0.015, 0.50, Ellipsoid),
    row(0.1416, 0.2425, 0.090, 0.090, 0.41, Cylinder), // upper leg
    row(0.0433, 0.2493, 0.060, 0.060, 0.44, Cylinder), // lower leg
    row(0.0137, 0.1482, 0.055, 0.055, 0.44, Cylinder), // foot
    row(0.1416, 0.2425, 0.090, 0.090, 0.41, Cylinder),
    row(0.0433, 0.2493, 0.060, 0.060, 0.44, Cylinder),
    row(0.0137, 0.1482, 0.055, 0.055, 0.44, Cylinder),
];

/// Lateral offset of each hip joint from the midline, fraction of stature.
const HIP_HALF_WIDTH: f64 = 0.05;
/// Shoulder joints sit this far along the thorax.
const SHOULDER_ALONG_THORAX: f64 = 0.8;
const HELMET_AREA_SCALE: f64 = 1.2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentOverride {
    /// Segment length in metres.
    pub length: Option<f64>,
    /// Unnormalized mass fraction.
    pub mass_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Equipment {
    pub jumpsuit_drag_scale: f64,
    pub helmet: bool,
    pub weight_belt_kg: f64,
}

impl Default for Equipment {
    fn default() -> Self {
        Equipment { jumpsuit_drag_scale: 1.0, helmet: true, weight_belt_kg: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anthropometrics {
    /// Total jumper mass including equipment, kg.
    pub total_mass: f64,
    /// Stature, m.
    pub stature: f64,
    #[serde(default)]
    pub overrides: BTreeMap<SegmentId, SegmentOverride>,
    #[serde(default)]
    pub equipment: Equipment,
}

impl Default for Anthropometrics {
    fn default() -> Self {
        Anthropometrics { total_mass: 80.0, stature: 1.80, overrides: BTreeMap::new(), equipment: Equipment::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Cylinder { length: f64, diameter: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub mass: f64,
    pub length: f64,
    /// Principal moments of inertia about the CoG along the primitive axes.
    pub principal_inertia: Vector3<f64>,
    /// Primitive axes (columns: distal, lateral, normal) in the segment frame.
    pub axes: Matrix3<f64>,
    /// CoG in the segment frame, measured from the proximal joint.
    pub cog: Vector3<f64>,
    pub shape: Primitive,
    /// Projected area normal to each primitive axis, m².
    pub areas: Vector3<f64>,
}

impl Segment {
    /// Inertia tensor about the CoG expressed in the segment frame.
    pub fn inertia(&self) -> Matrix3<f64> {
        self.axes * Matrix3::from_diagonal(&self.principal_inertia) * self.axes.transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub id: JointId,
    pub parent: SegmentId,
    pub child: SegmentId,
    /// Joint centre in the parent segment frame.
    pub position: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub segments: Vec<Segment>,
    pub joints: Vec<Joint>,
    pub total_mass: f64,
    pub stature: f64,
    /// Reference area and length for body-level damping moments.
    pub reference_area: f64,
    pub reference_length: f64,
}

fn distal_direction(id: SegmentId) -> Vector3<f64> {
    use SegmentId::*;
    match id {
        Pelvis => -Vector3::x(),
        Abdomen | Thorax | Head => Vector3::x(),
        LUpperArm | LForearm | LHand => -Vector3::y(),
        RUpperArm | RForearm | RHand => Vector3::y(),
        _ => -Vector3::x(),
    }
}

/// Builds the 16-segment model from anthropometric parameters.
pub fn build_body(anthro: &Anthropometrics) -> Result<BodyModel> {
    build_body_with_table(anthro, &DEFAULT_FRACTIONS)
}

pub fn build_body_with_table(anthro: &Anthropometrics, table: &[SegmentFractions; SEGMENT_COUNT]) -> Result<BodyModel> {
    let bad = |msg: String| Err(Error::InvalidAnthropometrics(msg));
    if !(anthro.total_mass.is_finite() && anthro.total_mass > 0.0) {
        return bad(format!("total_mass must be positive, got {}", anthro.total_mass));
    }
    if !(anthro.stature.is_finite() && anthro.stature > 0.0) {
        return bad(format!("stature must be positive, got {}", anthro.stature));
    }
    let eq = &anthro.equipment;
    if !(eq.jumpsuit_drag_scale.is_finite() && eq.jumpsuit_drag_scale > 0.0) {
        return bad("jumpsuit_drag_scale must be positive".into());
    }
    if !(eq.weight_belt_kg.is_finite() && eq.weight_belt_kg >= 0.0 && eq.weight_belt_kg < anthro.total_mass) {
        return bad("weight_belt_kg must lie in [0, total_mass)".into());
    }

    let stature = anthro.stature;
    let mut fractions = [0.0; SEGMENT_COUNT];
    let mut lengths = [0.0; SEGMENT_COUNT];
    for id in SegmentId::ALL {
        let i = id.index();
        let ov = anthro.overrides.get(&id);
        fractions[i] = ov.and_then(|o| o.mass_fraction).unwrap_or(table[i].mass);
        lengths[i] = ov.and_then(|o| o.length).unwrap_or(table[i].length * stature);
        if !(fractions[i].is_finite() && fractions[i] > 0.0) {
            return bad(format!("mass fraction for {id} must be positive"));
        }
        if !(lengths[i].is_finite() && lengths[i] > 0.0) {
            return bad(format!("length for {id} must be positive"));
        }
    }
    let fraction_sum: f64 = fractions.iter().sum();
    let body_mass = anthro.total_mass - eq.weight_belt_kg;

    let mut masses = [0.0; SEGMENT_COUNT];
    for i in 0..SEGMENT_COUNT {
        masses[i] = body_mass * fractions[i] / fraction_sum;
    }
    masses[SegmentId::Pelvis.index()] += eq.weight_belt_kg;
    // Put the rounding residue on the heaviest segment so the sum is exact.
    let residue = anthro.total_mass - masses.iter().sum::<f64>();
    masses[SegmentId::Abdomen.index()] += residue;

    let segments: Vec<Segment> = SegmentId::ALL
        .iter()
        .map(|&id| {
            let i = id.index();
            let f = &table[i];
            let length = lengths[i];
            let scale = length / (f.length * stature);
            let width = f.width * stature * scale.sqrt();
            let depth = f.depth * stature * scale.sqrt();
            let mass = masses[i];
            let e1 = distal_direction(id);
            let e3 = Vector3::z();
            let e2 = e3.cross(&e1);
            let axes = Matrix3::from_columns(&[e1, e2, e3]);
            let (shape, principal, mut areas) = match f.shape {
                PrimitiveKind::Cylinder => {
                    let r = 0.5 * width;
                    let axial = 0.5 * mass * r * r;
                    let trans = mass * (3.0 * r * r + length * length) / 12.0;
                    (
                        Primitive::Cylinder { length, diameter: width },
                        Vector3::new(axial, trans, trans),
                        Vector3::new(PI * r * r, length * width, length * width),
                    )
                }
                PrimitiveKind::Ellipsoid => {
                    let (a, b, c) = (0.5 * length, 0.5 * width, 0.5 * depth);
                    (
                        Primitive::Ellipsoid { semi_axes: [a, b, c] },
                        Vector3::new(mass * (b * b + c * c) / 5.0, mass * (a * a + c * c) / 5.0, mass * (a * a + b * b) / 5.0),
                        Vector3::new(PI * b * c, PI * a * c, PI * a * b),
                    )
                }
            };
            areas *= eq.jumpsuit_drag_scale;
            if id == SegmentId::Head && eq.helmet {
                areas *= HELMET_AREA_SCALE;
            }
            Segment { id, mass, length, principal_inertia: principal, axes, cog: e1 * (f.com * length), shape, areas }
        })
        .collect();

    let len = |id: SegmentId| lengths[id.index()];
    let thorax_half_width = 0.5 * table[SegmentId::Thorax.index()].width * stature;
    let joints = JointId::ALL
        .iter()
        .map(|&id| {
            use JointId::*;
            let position = match id {
                Lumbar => Vector3::zeros(),
                Thoracic => Vector3::new(len(SegmentId::Abdomen), 0.0, 0.0),
                Neck => Vector3::new(len(SegmentId::Thorax), 0.0, 0.0),
                LShoulder => Vector3::new(SHOULDER_ALONG_THORAX * len(SegmentId::Thorax), -thorax_half_width, 0.0),
                RShoulder => Vector3::new(SHOULDER_ALONG_THORAX * len(SegmentId::Thorax), thorax_half_width, 0.0),
                LElbow => Vector3::new(0.0, -len(SegmentId::LUpperArm), 0.0),
                LWrist => Vector3::new(0.0, -len(SegmentId::LForearm), 0.0),
                RElbow => Vector3::new(0.0, len(SegmentId::RUpperArm), 0.0),
                RWrist => Vector3::new(0.0, len(SegmentId::RForearm), 0.0),
                LHip => Vector3::new(-len(SegmentId::Pelvis), -HIP_HALF_WIDTH * stature, 0.0),
                RHip => Vector3::new(-len(SegmentId::Pelvis), HIP_HALF_WIDTH * stature, 0.0),
                LKnee => Vector3::new(-len(SegmentId::LUpperLeg), 0.0, 0.0),
                RKnee => Vector3::new(-len(SegmentId::RUpperLeg), 0.0, 0.0),
                LAnkle => Vector3::new(-len(SegmentId::LLowerLeg), 0.0, 0.0),
                RAnkle => Vector3::new(-len(SegmentId::RLowerLeg), 0.0, 0.0),
            };
            Joint { id, parent: id.parent(), child: id.child(), position }
        })
        .collect();

    Ok(BodyModel {
        segments,
        joints,
        total_mass: anthro.total_mass,
        stature,
        reference_area: 0.25 * stature * stature,
        reference_length: 0.5 * stature,
    })
}

/// Pose of one segment in the body (pelvis) frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentPose {
    pub orientation: UnitQuaternion<f64>,
    /// Proximal joint centre (pelvis: body origin).
    pub origin: Vector3<f64>,
    pub cog: Vector3<f64>,
}

/// Full kinematic evaluation, optionally with segment velocities.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub rotation: [Matrix3<f64>; SEGMENT_COUNT],
    pub origin: [Vector3<f64>; SEGMENT_COUNT],
    pub cog: [Vector3<f64>; SEGMENT_COUNT],
    /// Segment angular velocity relative to the pelvis, body frame.
    pub omega: [Vector3<f64>; SEGMENT_COUNT],
    pub cog_velocity: [Vector3<f64>; SEGMENT_COUNT],
}

fn joint_rotation(axes: &[Vector3<f64>; 3], angles: [f64; 3]) -> [UnitQuaternion<f64>; 3] {
    std::array::from_fn(|k| UnitQuaternion::from_scaled_axis(axes[k] * angles[k]))
}

pub fn kinematics(body: &BodyModel, posture: &Posture, rate: Option<&[f64; DOF_COUNT]>) -> Kinematics {
    let mut k = Kinematics {
        rotation: [Matrix3::identity(); SEGMENT_COUNT],
        origin: [Vector3::zeros(); SEGMENT_COUNT],
        cog: [Vector3::zeros(); SEGMENT_COUNT],
        omega: [Vector3::zeros(); SEGMENT_COUNT],
        cog_velocity: [Vector3::zeros(); SEGMENT_COUNT],
    };
    let mut origin_velocity = [Vector3::<f64>::zeros(); SEGMENT_COUNT];
    k.cog[0] = body.segments[0].cog;
    for joint in &body.joints {
        let p = joint.parent.index();
        let c = joint.child.index();
        let axes = joint.id.axes();
        let angles = posture.joint(joint.id);
        let [q0, q1, q2] = joint_rotation(&axes, angles);
        let q01 = q0 * q1;
        let rel = (q01 * q2).to_rotation_matrix().into_inner();
        let rp = k.rotation[p];
        let lever = rp * joint.position;
        k.rotation[c] = rp * rel;
        k.origin[c] = k.origin[p] + lever;
        let local_cog = k.rotation[c] * body.segments[c].cog;
        k.cog[c] = k.origin[c] + local_cog;
        if let Some(rate) = rate {
            let i = 3 * joint.id.index();
            let rel_omega = axes[0] * rate[i] + q0 * (axes[1] * rate[i + 1]) + q01 * (axes[2] * rate[i + 2]);
            k.omega[c] = k.omega[p] + rp * rel_omega;
            origin_velocity[c] = origin_velocity[p] + k.omega[p].cross(&lever);
            k.cog_velocity[c] = origin_velocity[c] + k.omega[c].cross(&local_cog);
        }
    }
    k
}

/// Segment poses in the body frame; the pelvis is the identity root.
pub fn forward_kinematics(body: &BodyModel, posture: &Posture) -> [SegmentPose; SEGMENT_COUNT] {
    let k = kinematics(body, posture, None);
    std::array::from_fn(|i| SegmentPose {
        orientation: UnitQuaternion::from_matrix(&k.rotation[i]),
        origin: k.origin[i],
        cog: k.cog[i],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassState {
    pub mass: f64,
    /// Overall CoG in the body frame.
    pub cog: Vector3<f64>,
    /// Inertia tensor about the overall CoG, body frame.
    pub inertia: Matrix3<f64>,
    pub cog_rate: Vector3<f64>,
    pub inertia_rate: Matrix3<f64>,
}

fn point_inertia(m: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    m * (Matrix3::identity() * r.norm_squared() - r * r.transpose())
}

fn point_inertia_rate(m: f64, r: &Vector3<f64>, dr: &Vector3<f64>) -> Matrix3<f64> {
    m * (Matrix3::identity() * (2.0 * r.dot(dr)) - dr * r.transpose() - r * dr.transpose())
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    w.cross_matrix()
}

/// Mass geometry computed from a kinematic evaluation that carries rates.
pub fn mass_state_from(body: &BodyModel, k: &Kinematics) -> MassState {
    let total = body.total_mass;
    let mut first_moment = Vector3::zeros();
    let mut first_moment_rate = Vector3::zeros();
    let mut inertia_origin = Matrix3::zeros();
    let mut inertia_origin_rate = Matrix3::zeros();
    for (i, seg) in body.segments.iter().enumerate() {
        let r = k.rotation[i];
        let local = r * seg.inertia() * r.transpose();
        let w = skew(&k.omega[i]);
        inertia_origin += local + point_inertia(seg.mass, &k.cog[i]);
        inertia_origin_rate += w * local - local * w + point_inertia_rate(seg.mass, &k.cog[i], &k.cog_velocity[i]);
        first_moment += seg.mass * k.cog[i];
        first_moment_rate += seg.mass * k.cog_velocity[i];
    }
    let cog = first_moment / total;
    let cog_rate = first_moment_rate / total;
    let inertia = inertia_origin - point_inertia(total, &cog);
    let inertia_rate = inertia_origin_rate - point_inertia_rate(total, &cog, &cog_rate);
    MassState {
        mass: total,
        cog,
        inertia: 0.5 * (inertia + inertia.transpose()),
        cog_rate,
        inertia_rate: 0.5 * (inertia_rate + inertia_rate.transpose()),
    }
}

/// Overall CoG, inertia about it and their time derivatives for a posture
/// moving at `posture_rate`.
pub fn mass_state(body: &BodyModel, posture: &Posture, posture_rate: &[f64; DOF_COUNT]) -> MassState {
    let k = kinematics(body, posture, Some(posture_rate));
    mass_state_from(body, &k)
}
