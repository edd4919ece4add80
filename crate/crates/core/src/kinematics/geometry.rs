use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms at or below this are treated as zero-length.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("vector norm {norm} is below {EPSILON}")]
pub struct DegenerateVector {
    pub norm: f64,
}

/// Angle between two vectors in degrees, in `[0, 180]`.
pub fn angle_between(a: Vec3, b: Vec3) -> Result<f64, DegenerateVector> {
    let (na, nb) = (a.norm(), b.norm());
    for norm in [na, nb] {
        // NaN norms fail this comparison too
        if !(norm > EPSILON) || !norm.is_finite() {
            return Err(DegenerateVector { norm });
        }
    }
    let cos = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(libm::acos(cos).to_degrees())
}

/// Anatomical plane a joint angle may be projected onto before measuring.
///
/// In image coordinates the frontal plane is x/y (depth dropped) and the
/// sagittal plane is y/z (lateral dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    #[default]
    None,
    Frontal,
    Sagittal,
}

impl Plane {
    pub fn project(self, v: Vec3) -> Vec3 {
        match self {
            Plane::None => v,
            Plane::Frontal => Vec3::new(v.x, v.y, 0.0),
            Plane::Sagittal => Vec3::new(0.0, v.y, v.z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(a: [f64; 3], b: [f64; 3]) -> f64 {
        angle_between(Vec3::new(a[0], a[1], a[2]), Vec3::new(b[0], b[1], b[2])).unwrap()
    }

    #[test]
    fn reference_angles() {
        assert_eq!(deg([1.0, 0.0, 0.0], [2.0, 0.0, 0.0]), 0.0);
        assert!((deg([1.0, 0.0, 0.0], [0.0, 3.0, 0.0]) - 90.0).abs() < 1e-12);
        assert!((deg([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]) - 45.0).abs() < 1e-12);
        assert!((deg([1.0, 0.0, 0.0], [-4.0, 0.0, 0.0]) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn dot_product_oracle_orthogonal() {
        let (a, b) = ([1.0, 2.0, 2.0], [2.0, 1.0, -2.0]);
        let dot: f64 = a.iter().zip(b.iter()).map(|(p, q)| p * q).sum();
        assert_eq!(dot, 0.0);
        assert!((deg(a, b) - 90.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        assert!(angle_between(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)).is_err());
        assert!(angle_between(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1e-10, 0.0, 0.0)).is_err());
        assert!(angle_between(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z))
            .prop_filter("non-degenerate", |v| v.norm() > 1e-3)
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(a in vec3(), b in vec3(), k in 0.01..100.0f64) {
            let ab = angle_between(a, b).unwrap();
            let ba = angle_between(b, a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            let scaled = angle_between(a * k, b).unwrap();
            prop_assert!((ab - scaled).abs() < 1e-5);
            prop_assert!((0.0..=180.0).contains(&ab));
        }
    }
}
