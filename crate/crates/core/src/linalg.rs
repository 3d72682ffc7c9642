//! Fixed-size 3-vector and 3×3 matrix types.

pub use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Returns `None` for vectors with zero (or non-finite) length.
pub fn normalize(a: &Vec3) -> Option<Vec3> {
    let n = a.norm();
    (n > 0.0 && n.is_finite()).then(|| a / n)
}
