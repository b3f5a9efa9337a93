//! Synthetic trainees: map the displayed Desired Posture to an executed one.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::biomech::{parse_dof, Posture, DOF_COUNT};
use crate::error::{Error, Result};

/// Default tremor bandwidth, Hz.
pub const DEFAULT_NOISE_CUTOFF: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraineeKind {
    Ideal,
    FirstOrderLag {
        tau: f64,
    },
    PureDelay {
        t_delay: f64,
    },
    Noisy {
        sigma: f64,
        #[serde(default = "default_cutoff")]
        cutoff_hz: f64,
    },
    /// Caps on the deviation from neutral, rad, keyed by DOF name.
    RangeRestricted {
        caps: BTreeMap<String, f64>,
    },
    Composite {
        stages: Vec<TraineeKind>,
    },
}

fn default_cutoff() -> f64 {
    DEFAULT_NOISE_CUTOFF
}

impl TraineeKind {
    pub fn is_ideal(&self) -> bool {
        match self {
            TraineeKind::Ideal => true,
            TraineeKind::Composite { stages } => stages.iter().all(|s| s.is_ideal()),
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Ideal,
    Lag { alpha: f64, y: Posture },
    Delay { buffer: VecDeque<Posture>, samples: usize },
    Noise { a: f64, b: f64, sigma: f64, z: [f64; DOF_COUNT], rng: ChaCha8Rng },
    Range { min: [f64; DOF_COUNT], max: [f64; DOF_COUNT] },
}

impl Stage {
    fn apply(&mut self, input: &Posture) -> Posture {
        match self {
            Stage::Ideal => *input,
            Stage::Lag { alpha, y } => {
                if *alpha == 1.0 {
                    *y = *input;
                    return *y;
                }
                for i in 0..DOF_COUNT {
                    y.0[i] += *alpha * (input.0[i] - y.0[i]);
                }
                *y
            }
            Stage::Delay { buffer, samples } => {
                if *samples == 0 {
                    return *input;
                }
                buffer.push_back(*input);
                buffer.pop_front().expect("buffer primed with neutral")
            }
            Stage::Noise { a, b, sigma, z, rng } => {
                let mut out = *input;
                for (zi, oi) in z.iter_mut().zip(out.0.iter_mut()) {
                    let n: f64 = StandardNormal.sample(rng);
                    *zi = *a * *zi + *b * *sigma * n;
                    *oi += *zi;
                }
                out
            }
            Stage::Range { min, max } => Posture(std::array::from_fn(|i| input.0[i].clamp(min[i], max[i]))),
        }
    }
}

/// A trainee model with its history, advanced once per tick.
#[derive(Clone, Debug)]
pub struct Trainee {
    kind: TraineeKind,
    stages: Vec<Stage>,
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!("trainee {name} must be ≥ 0, got {v}")))
    }
}

fn build_stages(kind: &TraineeKind, neutral: &Posture, dt: f64, seed: u64, out: &mut Vec<Stage>) -> Result<()> {
    let index = out.len() as u64;
    let stage = match kind {
        TraineeKind::Ideal => Stage::Ideal,
        TraineeKind::FirstOrderLag { tau } => {
            non_negative("tau", *tau)?;
            let alpha = if *tau == 0.0 { 1.0 } else { 1.0 - (-dt / tau).exp() };
            Stage::Lag { alpha, y: *neutral }
        }
        TraineeKind::PureDelay { t_delay } => {
            non_negative("t_delay", *t_delay)?;
            let samples = (t_delay / dt).round() as usize;
            Stage::Delay { buffer: std::iter::repeat_n(*neutral, samples).collect(), samples }
        }
        TraineeKind::Noisy { sigma, cutoff_hz } => {
            non_negative("sigma", *sigma)?;
            if !(cutoff_hz.is_finite() && *cutoff_hz > 0.0) {
                return Err(Error::InvalidScenario("noise cutoff must be positive".into()));
            }
            let a = (-2.0 * PI * cutoff_hz * dt).exp();
            let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            Stage::Noise { a, b: (1.0 - a * a).sqrt(), sigma: *sigma, z: [0.0; DOF_COUNT], rng }
        }
        TraineeKind::RangeRestricted { caps } => {
            let mut min = [f64::NEG_INFINITY; DOF_COUNT];
            let mut max = [f64::INFINITY; DOF_COUNT];
            for (name, &cap) in caps {
                let i = parse_dof(name).ok_or_else(|| Error::InvalidScenario(format!("unknown DOF '{name}'")))?;
                non_negative("cap", cap)?;
                min[i] = neutral.0[i] - cap;
                max[i] = neutral.0[i] + cap;
            }
            Stage::Range { min, max }
        }
        TraineeKind::Composite { stages } => {
            for s in stages {
                build_stages(s, neutral, dt, seed, out)?;
            }
            return Ok(());
        }
    };
    out.push(stage);
    Ok(())
}

impl Trainee {
    /// A model whose history starts at `neutral`, stepped every `dt` seconds.
    pub fn new(kind: TraineeKind, neutral: &Posture, dt: f64, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let mut stages = Vec::new();
        build_stages(&kind, neutral, dt, seed, &mut stages)?;
        Ok(Trainee { kind, stages })
    }

    pub fn kind(&self) -> &TraineeKind {
        &self.kind
    }

    /// Executed posture for this tick's desired posture.
    pub fn step(&mut self, desired: &Posture) -> Posture {
        self.stages.iter_mut().fold(*desired, |p, s| s.apply(&p))
    }
}
