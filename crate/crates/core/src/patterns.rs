//! Movement-pattern algebra.
//!
//! A desired posture is the neutral posture plus a weighted sum of unit-norm
//! pattern vectors, `P = P_neutral + Σ u_i · MP_i`, where `u_i` is the pattern
//! angle commanded by the controller tracking that pattern.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::biomech::{dof_index, Axis, JointId, Posture, DOF_COUNT};
use crate::error::{Error, Result};

/// Pairwise dot products below this count as orthogonal.
const ORTHOGONALITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PatternBasis {
    name: String,
    weights: [f64; DOF_COUNT],
}

impl PatternBasis {
    /// Normalizes `weights` to unit Euclidean norm.
    pub fn new(name: impl Into<String>, weights: [f64; DOF_COUNT]) -> Result<Self> {
        let name = name.into();
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidPatterns(format!("pattern '{name}' has zero or non-finite weights")));
        }
        Ok(PatternBasis { name, weights: weights.map(|w| w / norm) })
    }

    pub fn from_sparse(name: impl Into<String>, entries: &[(usize, f64)]) -> Result<Self> {
        let mut w = [0.0; DOF_COUNT];
        for &(i, v) in entries {
            if i >= DOF_COUNT {
                return Err(Error::InvalidPatterns(format!("DOF index {i} out of range")));
            }
            w[i] += v;
        }
        PatternBasis::new(name, w)
    }

    /// The 'turning' pattern: right shoulder flexion and lateral rotation,
    /// left shoulder extension and medial rotation, each weighted 0.5.
    /// Positive angles turn the body to the right.
    pub fn turning() -> Self {
        PatternBasis::from_sparse(
            "turning",
            &[
                (dof_index(JointId::RShoulder, Axis::Flexion), 0.5),
                (dof_index(JointId::RShoulder, Axis::Rotation), 0.5),
                (dof_index(JointId::LShoulder, Axis::Flexion), 0.5),
                (dof_index(JointId::LShoulder, Axis::Rotation), 0.5),
            ],
        )
        .expect("nonzero weights")
    }

    /// The 'forward-backward' pattern: knees weighted 0.582 and hips 0.402 on
    /// the sagittal axis of both legs. Positive angles lower the legs toward
    /// the belly and drive the body forward.
    pub fn forward_backward() -> Self {
        PatternBasis::from_sparse(
            "forward_backward",
            &[
                (dof_index(JointId::LKnee, Axis::Flexion), 0.582),
                (dof_index(JointId::RKnee, Axis::Flexion), 0.582),
                (dof_index(JointId::LHip, Axis::Flexion), 0.402),
                (dof_index(JointId::RHip, Axis::Flexion), 0.402),
            ],
        )
        .expect("nonzero weights")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weights(&self) -> &[f64; DOF_COUNT] {
        &self.weights
    }

    pub fn support(&self) -> Vec<usize> {
        (0..DOF_COUNT).filter(|&i| self.weights[i] != 0.0).collect()
    }

    pub fn dot(&self, other: &PatternBasis) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofLimit {
    pub min: f64,
    pub max: f64,
    /// Maximum rate of change, rad/s.
    pub rate: f64,
}

impl DofLimit {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSet {
    pub neutral: Posture,
    pub patterns: Vec<PatternBasis>,
    pub limits: [DofLimit; DOF_COUNT],
    orthogonal: bool,
}

/// Pattern angles recovered from a posture.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub angles: Vec<f64>,
    /// Set when the patterns are not orthogonal and a least-squares fit was used.
    pub least_squares: bool,
}

impl PatternSet {
    pub fn new(neutral: Posture, patterns: Vec<PatternBasis>, limits: [DofLimit; DOF_COUNT]) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidPatterns("at least one pattern is required".into()));
        }
        if !neutral.is_finite() {
            return Err(Error::NonFinite("neutral posture"));
        }
        for (i, l) in limits.iter().enumerate() {
            if !(l.min <= l.max && l.rate > 0.0) {
                return Err(Error::InvalidPatterns(format!("limit for DOF {i} is inconsistent")));
            }
            if !l.contains(neutral.0[i]) {
                return Err(Error::InvalidPatterns(format!("neutral DOF {i} outside its range")));
            }
        }
        let mut orthogonal = true;
        for (a, p) in patterns.iter().enumerate() {
            for q in &patterns[a + 1..] {
                if p.dot(q).abs() > ORTHOGONALITY_TOL {
                    orthogonal = false;
                }
            }
        }
        let gram = DMatrix::from_fn(patterns.len(), patterns.len(), |i, j| patterns[i].dot(&patterns[j]));
        if gram.determinant().abs() < 1e-12 {
            return Err(Error::InvalidPatterns("patterns are linearly dependent".into()));
        }
        Ok(PatternSet { neutral, patterns, limits, orthogonal })
    }

    /// Neutral posture with `±range` about each DOF and a common rate limit.
    pub fn symmetric_limits(neutral: &Posture, range: f64, rate: f64) -> [DofLimit; DOF_COUNT] {
        std::array::from_fn(|i| DofLimit { min: neutral.0[i] - range, max: neutral.0[i] + range, rate })
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.patterns.iter().position(|p| p.name() == name)
    }

    /// `P_neutral + Σ u_i MP_i`; missing trailing angles count as zero.
    pub fn compose(&self, u: &[f64]) -> Posture {
        let mut p = self.neutral;
        for (pattern, &angle) in self.patterns.iter().zip(u) {
            if angle != 0.0 {
                p = p.add_scaled(pattern.weights(), angle);
            }
        }
        p
    }

    pub fn project(&self, posture: &Posture) -> Projection {
        let d = posture.sub(&self.neutral);
        let rhs: Vec<f64> = self.patterns.iter().map(|p| p.weights().iter().zip(&d).map(|(w, x)| w * x).sum()).collect();
        if self.orthogonal {
            return Projection { angles: rhs, least_squares: false };
        }
        let n = self.patterns.len();
        let gram = DMatrix::from_fn(n, n, |i, j| self.patterns[i].dot(&self.patterns[j]));
        let solved = gram.lu().solve(&DVector::from_vec(rhs)).expect("gram matrix checked non-singular at construction");
        Projection { angles: solved.iter().copied().collect(), least_squares: true }
    }

    /// Range- then rate-limits `commanded` against the previously output posture.
    pub fn clamp(&self, commanded: &Posture, previous: &Posture, dt: f64) -> Posture {
        Posture(std::array::from_fn(|i| {
            let l = &self.limits[i];
            let target = commanded.0[i].clamp(l.min, l.max);
            let step = l.rate * dt;
            let prev = previous.0[i];
            target.clamp(prev - step, prev + step).clamp(l.min, l.max)
        }))
    }

    /// Range clamp only.
    pub fn clamp_range(&self, posture: &Posture) -> Posture {
        Posture(std::array::from_fn(|i| posture.0[i].clamp(self.limits[i].min, self.limits[i].max)))
    }
}
