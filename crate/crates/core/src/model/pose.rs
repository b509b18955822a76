use nalgebra::{Isometry3, Quaternion, UnitQuaternion, Vector3};

use crate::scalar::Real;

/// End-effector pose in the base frame.
///
/// The orientation is kept in canonical form (`w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    orientation: UnitQuaternion<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vector3<T>, orientation: UnitQuaternion<T>) -> Self {
        Self { position, orientation: canonical(orientation) }
    }

    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), orientation: UnitQuaternion::identity() }
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    pub fn from_wxyz(position: Vector3<T>, w: T, x: T, y: T, z: T) -> Self {
        Self::new(position, UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn orientation(&self) -> &UnitQuaternion<T> {
        &self.orientation
    }

    /// Quaternion components as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [T; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

fn canonical<T: Real>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    if q.quaternion().w < T::zero() {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}
