use nalgebra::{Isometry3, Matrix6xX, Translation3, UnitQuaternion, Vector3, Vector6};

use super::{ChainModel, Pose};
use crate::error::{check_len, DimensionMismatch};
use crate::scalar::Real;

impl<T: Real> ChainModel<T> {
    /// Walks the chain, handing each link's world frame to `visit`.
    ///
    /// The joint origin is the frame's translation and the joint axis in the
    /// base frame is `frame.rotation * axis`.
    pub(crate) fn walk(&self, q: &[T], mut visit: impl FnMut(usize, &Isometry3<T>)) -> Isometry3<T> {
        let mut frame = Isometry3::identity();
        for (i, (joint, &qi)) in self.joints.iter().zip(q).enumerate() {
            frame *= joint.parent;
            frame.rotation *= UnitQuaternion::from_axis_angle(&joint.axis, qi);
            visit(i, &frame);
        }
        frame
    }

    /// End-effector pose in the base frame.
    pub fn forward_kinematics(&self, q: &[T]) -> Result<Pose<T>, DimensionMismatch> {
        check_len("q", self.n_joints(), q.len())?;
        let last = self.walk(q, |_, _| {});
        Ok(Pose::from_isometry(&(last * self.ee)))
    }

    /// World frame of link `link` (0-based).
    pub fn link_frame(&self, q: &[T], link: usize) -> Result<Isometry3<T>, DimensionMismatch> {
        check_len("q", self.n_joints(), q.len())?;
        let mut out = Isometry3::identity();
        self.walk(q, |i, f| {
            if i == link {
                out = *f;
            }
        });
        Ok(out)
    }

    /// Writes the 6×n geometric Jacobian (linear rows first) at the
    /// end-effector point, base frame. `jac` must already be 6×n.
    pub fn jacobian_into(&self, q: &[T], jac: &mut Matrix6xX<T>) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("jacobian columns", n, jac.ncols())?;
        let ee = self.walk(q, |_, _| {}) * self.ee;
        let p_ee = ee.translation.vector;
        self.walk(q, |i, f| {
            let z = f.rotation * self.joints[i].axis.into_inner();
            let lin = z.cross(&(p_ee - f.translation.vector));
            jac.set_column(i, &Vector6::new(lin.x, lin.y, lin.z, z.x, z.y, z.z));
        });
        Ok(())
    }

    pub fn geometric_jacobian(&self, q: &[T]) -> Result<Matrix6xX<T>, DimensionMismatch> {
        let mut jac = Matrix6xX::zeros(self.n_joints());
        self.jacobian_into(q, &mut jac)?;
        Ok(jac)
    }

    /// Joint torques produced by a force applied at `point` (link frame of
    /// `link`, 0-based), i.e. `J_pointᵀ f`. Joints beyond `link` get zero.
    pub fn point_force_torques(
        &self,
        q: &[T],
        link: usize,
        point: &Vector3<T>,
        force: &Vector3<T>,
        out: &mut [T],
    ) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("out", n, out.len())?;
        if link >= n {
            return Err(DimensionMismatch { what: "link index", expected: n, got: link });
        }
        let p = self.link_frame(q, link)? * Translation3::from(*point);
        let p = p.translation.vector;
        out.iter_mut().for_each(|v| *v = T::zero());
        self.walk(q, |i, f| {
            if i <= link {
                let z = f.rotation * self.joints[i].axis.into_inner();
                out[i] = z.cross(&(p - f.translation.vector)).dot(force);
            }
        });
        Ok(())
    }
}
