//! Synthetic landmark streams with a known commanded joint angle.
//!
//! The driven joint's vertex sits at `(0.5, 0.4, 0)` with `ray_b` 0.3 below
//! it; `ray_a` swings on a 0.25-radius arc so the measured angle equals
//! `peak * (1 - cos(2 pi t / period)) / 2`. All other landmarks hold a fixed
//! neutral pose. Gaussian noise is drawn from a seeded ChaCha8 stream, so a
//! given spec always produces the same frames.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointDef, Landmark, LandmarkName, Plane, PoseFrame, Side, Vec3};

pub const VERTEX: Vec3 = Vec3::new(0.5, 0.4, 0.0);
pub const RAY_B_LENGTH: f64 = 0.3;
pub const ARC_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub joint: JointDef,
    pub peak_angle_deg: f64,
    pub period_ms: u64,
    pub repetitions: u32,
    pub fps: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("peak angle {0} outside (0, 180]")]
    Peak(f64),
    #[error("fps must be positive and finite, got {0}")]
    Fps(f64),
    #[error("noise sigma must be non-negative and finite, got {0}")]
    Noise(f64),
    #[error("period must be positive")]
    Period,
}

impl TrajectorySpec {
    /// Shoulder abduction on the left side, 4 s per repetition, 30 FPS, no noise.
    pub fn shoulder_abduction(peak_angle_deg: f64, repetitions: u32) -> Self {
        TrajectorySpec {
            joint: JointDef::shoulder_abduction(Side::Left),
            peak_angle_deg,
            period_ms: 4000,
            repetitions,
            fps: 30.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.peak_angle_deg > 0.0 && self.peak_angle_deg <= 180.0) {
            return Err(TrajectoryError::Peak(self.peak_angle_deg));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(TrajectoryError::Fps(self.fps));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(TrajectoryError::Noise(self.noise_sigma));
        }
        if self.period_ms == 0 {
            return Err(TrajectoryError::Period);
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        let total_ms = self.period_ms as f64 * f64::from(self.repetitions);
        libm::round(total_ms * self.fps / 1000.0) as u64
    }

    /// Timestamp of frame `i`, rounded to the millisecond.
    pub fn t_ms(&self, i: u64) -> u64 {
        libm::round(i as f64 * 1000.0 / self.fps) as u64
    }
}

/// The analytic angle at `t_ms`.
pub fn commanded_angle(spec: &TrajectorySpec, t_ms: u64) -> f64 {
    let phase = 2.0 * PI * t_ms as f64 / spec.period_ms as f64;
    spec.peak_angle_deg * (1.0 - libm::cos(phase)) / 2.0
}

fn neutral(name: LandmarkName) -> Vec3 {
    use LandmarkName::*;
    let (x, y, z) = match name {
        Nose => (0.50, 0.25, -0.05),
        LeftShoulder => (0.60, 0.40, 0.0),
        RightShoulder => (0.40, 0.40, 0.0),
        LeftElbow => (0.62, 0.55, 0.0),
        RightElbow => (0.38, 0.55, 0.0),
        LeftWrist => (0.63, 0.68, 0.0),
        RightWrist => (0.37, 0.68, 0.0),
        LeftHip => (0.57, 0.70, 0.0),
        RightHip => (0.43, 0.70, 0.0),
        LeftKnee => (0.57, 0.82, 0.0),
        RightKnee => (0.43, 0.82, 0.0),
        LeftAnkle => (0.57, 0.94, 0.0),
        RightAnkle => (0.43, 0.94, 0.0),
        LeftHeel => (0.57, 0.96, 0.03),
        RightHeel => (0.43, 0.96, 0.03),
        LeftFootIndex => (0.58, 0.97, -0.05),
        RightFootIndex => (0.42, 0.97, -0.05),
    };
    Vec3::new(x, y, z)
}

/// Deterministic frame source for one [`TrajectorySpec`].
#[derive(Debug, Clone)]
pub struct PoseGenerator {
    spec: TrajectorySpec,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    next: u64,
    total: u64,
}

impl PoseGenerator {
    pub fn new(spec: TrajectorySpec) -> Result<Self, TrajectoryError> {
        spec.validate()?;
        let noise = if spec.noise_sigma > 0.0 {
            Some(Normal::new(0.0, spec.noise_sigma).map_err(|_| TrajectoryError::Noise(spec.noise_sigma))?)
        } else {
            None
        };
        Ok(PoseGenerator {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            noise,
            next: 0,
            total: spec.frame_count(),
        })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    /// A frame whose driven joint reads `theta_deg`, plus noise.
    pub fn frame_at_angle(&mut self, frame_id: u64, t_ms: u64, theta_deg: f64) -> PoseFrame {
        let def = self.spec.joint;
        let interior = def.convention.invert(theta_deg).to_radians();
        let outward = if def.vertex.side() == Some(Side::Right) {
            -1.0
        } else {
            1.0
        };
        let (s, c) = (libm::sin(interior), libm::cos(interior));
        let arc = match def.projection_plane {
            Plane::Sagittal => Vec3::new(0.0, c, -s),
            Plane::None | Plane::Frontal => Vec3::new(outward * s, c, 0.0),
        };
        let position = |name: LandmarkName| {
            if name == def.vertex {
                VERTEX
            } else if name == def.ray_b {
                VERTEX + Vec3::new(0.0, RAY_B_LENGTH, 0.0)
            } else if name == def.ray_a {
                VERTEX + arc * ARC_RADIUS
            } else {
                neutral(name)
            }
        };
        let mut landmarks = Vec::with_capacity(LandmarkName::COUNT);
        for name in LandmarkName::ALL {
            let mut p = position(name);
            if let Some(noise) = &self.noise {
                p = p + Vec3::new(
                    noise.sample(&mut self.rng),
                    noise.sample(&mut self.rng),
                    noise.sample(&mut self.rng),
                );
            }
            landmarks.push(Landmark::new(
                name,
                p.x.clamp(0.0, 1.0),
                p.y.clamp(0.0, 1.0),
                p.z,
                1.0,
            ));
        }
        PoseFrame::new(frame_id, t_ms, landmarks).expect("generated landmarks are distinct and in range")
    }
}

impl Iterator for PoseGenerator {
    type Item = PoseFrame;

    fn next(&mut self) -> Option<PoseFrame> {
        if self.next >= self.total {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let t_ms = self.spec.t_ms(i);
        let theta = commanded_angle(&self.spec, t_ms);
        Some(self.frame_at_angle(i, t_ms, theta))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}
