//! Serial-chain description with kinematics and rigid-body dynamics queries.
//!
//! Every joint is revolute. Link `i`'s frame is its parent's frame composed
//! with the joint's fixed `parent` transform and then a rotation of `q[i]`
//! about `axis`. Inertial parameters are expressed in the link frame.

mod dynamics;
mod file;
mod kinematics;
mod pose;

use nalgebra::{Isometry3, Matrix3, Unit, Vector3};
use thiserror::Error;

pub use dynamics::DynamicsWorkspace;
pub use file::{load_model, parse_model};
pub use pose::Pose;

use crate::kv::SyntaxError;
use crate::scalar::{lit, Real};

/// Largest chain the fixed-width bookkeeping supports (clamp bitmasks are `u64`).
pub const MAX_JOINTS: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] SyntaxError),
    #[error("joint {joint}: field `{field}`: {message}")]
    Invalid { joint: usize, field: &'static str, message: String },
    #[error("model: {0}")]
    Chain(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint<T: Real> {
    /// Fixed transform from the parent link frame to this joint's frame at `q = 0`.
    pub parent: Isometry3<T>,
    pub axis: Unit<Vector3<T>>,
    pub mass: T,
    /// Centre of mass in the link frame.
    pub com: Vector3<T>,
    /// Inertia about the centre of mass, link frame.
    pub inertia: Matrix3<T>,
    /// Reflected rotor inertia (diagonal entry of `K_r`).
    pub rotor_inertia: T,
    pub coulomb: T,
    pub viscous: T,
    pub position_limits: (T, T),
    pub velocity_limit: T,
    pub torque_limit: T,
}

/// Kinematic and dynamic description of an N-joint revolute serial arm.
///
/// Immutable once constructed; all invariants are checked by [`ChainModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel<T: Real> {
    joints: Vec<Joint<T>>,
    gravity: Vector3<T>,
    ee: Isometry3<T>,
}

impl<T: Real> ChainModel<T> {
    pub fn new(joints: Vec<Joint<T>>, gravity: Vector3<T>, ee: Isometry3<T>) -> Result<Self, ModelError> {
        if joints.is_empty() {
            return Err(ModelError::Chain("chain needs at least one joint".into()));
        }
        if joints.len() > MAX_JOINTS {
            return Err(ModelError::Chain(format!("at most {MAX_JOINTS} joints supported")));
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(ModelError::Chain("gravity not finite".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            validate_joint(i + 1, j)?;
        }
        Ok(Self { joints, gravity, ee })
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint<T>] {
        &self.joints
    }

    pub fn gravity(&self) -> &Vector3<T> {
        &self.gravity
    }

    pub fn ee_transform(&self) -> &Isometry3<T> {
        &self.ee
    }

    /// Copy of the model with a different gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<T>) -> Self {
        Self { gravity, ..self.clone() }
    }

    /// Copy of the model with all friction parameters set to zero.
    pub fn without_friction(&self) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.coulomb = T::zero();
            j.viscous = T::zero();
        }
        out
    }

    pub fn rotor_inertia(&self, i: usize) -> T {
        self.joints[i].rotor_inertia
    }

    /// Whether every coordinate of `q` lies inside its position limits.
    pub fn within_limits(&self, q: &[T]) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(&v, j)| v >= j.position_limits.0 && v <= j.position_limits.1)
    }
}

/// Measured joint positions, velocities and link-side torques at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T: Real> {
    pub q: Vec<T>,
    pub qd: Vec<T>,
    pub tau: Vec<T>,
}

impl<T: Real> JointState<T> {
    pub fn zeros(n: usize) -> Self {
        Self { q: vec![T::zero(); n], qd: vec![T::zero(); n], tau: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).chain(&self.tau).all(|v| v.is_finite())
    }
}

fn invalid(joint: usize, field: &'static str, message: impl Into<String>) -> ModelError {
    ModelError::Invalid { joint, field, message: message.into() }
}

fn validate_joint<T: Real>(idx: usize, j: &Joint<T>) -> Result<(), ModelError> {
    let axis_norm = j.axis.as_ref().norm();
    if (axis_norm - T::one()).abs() >= lit(1e-9) {
        return Err(invalid(idx, "axis", "axis not unit norm"));
    }
    if !(j.mass > T::zero()) {
        return Err(invalid(idx, "mass", "mass must be positive"));
    }
    let sym = (j.inertia - j.inertia.transpose()).amax();
    if sym > lit(1e-12) || j.inertia.cholesky().is_none() {
        return Err(invalid(idx, "inertia", "inertia not symmetric positive definite"));
    }
    if !(j.rotor_inertia > T::zero()) {
        return Err(invalid(idx, "rotor", "rotor inertia must be positive"));
    }
    if !(j.coulomb >= T::zero()) {
        return Err(invalid(idx, "coulomb", "coulomb friction must be non-negative"));
    }
    if !(j.viscous >= T::zero()) {
        return Err(invalid(idx, "viscous", "viscous friction must be non-negative"));
    }
    if !(j.position_limits.0 < j.position_limits.1) {
        return Err(invalid(idx, "qmin", "qmin must be below qmax"));
    }
    if !(j.velocity_limit > T::zero()) {
        return Err(invalid(idx, "vmax", "velocity limit must be positive"));
    }
    if !(j.torque_limit > T::zero()) {
        return Err(invalid(idx, "taumax", "torque limit must be positive"));
    }
    Ok(())
}
