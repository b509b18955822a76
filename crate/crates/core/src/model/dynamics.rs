use nalgebra::{DMatrix, Matrix3, Vector3};

use super::ChainModel;
use crate::error::{check_len, DimensionMismatch};
use crate::scalar::{lit, Real};

/// Preallocated per-link scratch for the dynamics routines.
///
/// Create once per chain; every `*_into` call reuses it without touching the heap.
#[derive(Debug, Clone)]
pub struct DynamicsWorkspace<T: Real> {
    origin: Vec<Vector3<T>>,
    axis: Vec<Vector3<T>>,
    com: Vec<Vector3<T>>,
    inertia: Vec<Matrix3<T>>,
    omega: Vec<Vector3<T>>,
    alpha: Vec<Vector3<T>>,
    force: Vec<Vector3<T>>,
    moment: Vec<Vector3<T>>,
}

impl<T: Real> DynamicsWorkspace<T> {
    pub fn new(n: usize) -> Self {
        let v = vec![Vector3::zeros(); n];
        Self {
            origin: v.clone(),
            axis: v.clone(),
            com: v.clone(),
            inertia: vec![Matrix3::zeros(); n],
            omega: v.clone(),
            alpha: v.clone(),
            force: v.clone(),
            moment: v,
        }
    }

    pub fn for_model(model: &ChainModel<T>) -> Self {
        Self::new(model.n_joints())
    }

    fn len(&self) -> usize {
        self.origin.len()
    }
}

#[inline]
fn at<T: Real>(v: Option<&[T]>, i: usize) -> T {
    v.map_or(T::zero(), |s| s[i])
}

impl<T: Real> ChainModel<T> {
    /// Fills joint origins, axes, COM positions and world inertias.
    fn place_links(&self, ws: &mut DynamicsWorkspace<T>, q: &[T]) {
        self.walk(q, |i, f| {
            let j = &self.joints[i];
            let r = f.rotation.to_rotation_matrix();
            ws.origin[i] = f.translation.vector;
            ws.axis[i] = r * j.axis.into_inner();
            ws.com[i] = f.transform_point(&nalgebra::Point3::from(j.com)).coords;
            ws.inertia[i] = r.matrix() * j.inertia * r.matrix().transpose();
        });
    }

    /// Recursive Newton–Euler in the base frame. `None` velocity or
    /// acceleration means zero; gravity enters as a base acceleration.
    fn rnea(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        qd: Option<&[T]>,
        qdd: Option<&[T]>,
        with_gravity: bool,
        out: &mut [T],
    ) {
        self.place_links(ws, q);
        let n = self.n_joints();

        let mut prev_origin = Vector3::zeros();
        let mut prev_omega = Vector3::zeros();
        let mut prev_alpha = Vector3::zeros();
        let mut acc = if with_gravity { -self.gravity } else { Vector3::zeros() };
        for i in 0..n {
            let r = ws.origin[i] - prev_origin;
            acc += prev_alpha.cross(&r) + prev_omega.cross(&prev_omega.cross(&r));
            let spin = ws.axis[i] * at(qd, i);
            let omega = prev_omega + spin;
            let alpha = prev_alpha + ws.axis[i] * at(qdd, i) + prev_omega.cross(&spin);

            let rc = ws.com[i] - ws.origin[i];
            let acc_com = acc + alpha.cross(&rc) + omega.cross(&omega.cross(&rc));
            let f = acc_com * self.joints[i].mass;
            let inertia = &ws.inertia[i];
            ws.force[i] = f;
            ws.moment[i] = inertia * alpha + omega.cross(&(inertia * omega)) + rc.cross(&f);
            ws.omega[i] = omega;
            ws.alpha[i] = alpha;

            prev_origin = ws.origin[i];
            prev_omega = omega;
            prev_alpha = alpha;
        }

        for i in (0..n).rev() {
            if i + 1 < n {
                let child_force = ws.force[i + 1];
                let lever = ws.origin[i + 1] - ws.origin[i];
                let child_moment = ws.moment[i + 1] + lever.cross(&child_force);
                ws.force[i] += child_force;
                ws.moment[i] += child_moment;
            }
            out[i] = ws.axis[i].dot(&ws.moment[i]);
        }
    }

    fn check_ws(&self, ws: &DynamicsWorkspace<T>) -> Result<(), DimensionMismatch> {
        check_len("workspace", self.n_joints(), ws.len())
    }

    /// `τ = M(q)q̈ + C(q,q̇)q̇ + g(q)` for the link side (rotor inertias excluded).
    pub fn inverse_dynamics_into(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        qd: &[T],
        qdd: &[T],
        out: &mut [T],
    ) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("qd", n, qd.len())?;
        check_len("qdd", n, qdd.len())?;
        check_len("out", n, out.len())?;
        self.check_ws(ws)?;
        self.rnea(ws, q, Some(qd), Some(qdd), true, out);
        Ok(())
    }

    pub fn inverse_dynamics(&self, q: &[T], qd: &[T], qdd: &[T]) -> Result<Vec<T>, DimensionMismatch> {
        let mut out = vec![T::zero(); self.n_joints()];
        self.inverse_dynamics_into(&mut DynamicsWorkspace::for_model(self), q, qd, qdd, &mut out)?;
        Ok(out)
    }

    /// `C(q,q̇)q̇ + g(q)`: inverse dynamics with zero acceleration.
    pub fn bias_torques_into(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        qd: &[T],
        out: &mut [T],
    ) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("qd", n, qd.len())?;
        check_len("out", n, out.len())?;
        self.check_ws(ws)?;
        self.rnea(ws, q, Some(qd), None, true, out);
        Ok(())
    }

    /// Torques that hold the arm static at `q`; add them to the motor command
    /// to cancel gravity.
    pub fn gravity_torques_into(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        out: &mut [T],
    ) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("out", n, out.len())?;
        self.check_ws(ws)?;
        self.rnea(ws, q, None, None, true, out);
        Ok(())
    }

    pub fn gravity_torques(&self, q: &[T]) -> Result<Vec<T>, DimensionMismatch> {
        let mut out = vec![T::zero(); self.n_joints()];
        self.gravity_torques_into(&mut DynamicsWorkspace::for_model(self), q, &mut out)?;
        Ok(out)
    }

    /// Link-side joint-space inertia, assembled from the COM Jacobians of
    /// each link: `M = Σ mₖ Jᵥₖᵀ Jᵥₖ + J_ωₖᵀ Iₖ J_ωₖ`.
    pub fn mass_matrix_into(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        m: &mut DMatrix<T>,
    ) -> Result<(), DimensionMismatch> {
        let n = self.n_joints();
        check_len("q", n, q.len())?;
        check_len("mass matrix rows", n, m.nrows())?;
        check_len("mass matrix cols", n, m.ncols())?;
        self.check_ws(ws)?;
        self.place_links(ws, q);
        m.fill(T::zero());
        for k in 0..n {
            let mass = self.joints[k].mass;
            let c = ws.com[k];
            for i in 0..=k {
                let vi = ws.axis[i].cross(&(c - ws.origin[i]));
                let ii = ws.inertia[k] * ws.axis[i];
                for j in 0..=i {
                    let vj = ws.axis[j].cross(&(c - ws.origin[j]));
                    m[(i, j)] += mass * vi.dot(&vj) + ws.axis[j].dot(&ii);
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &[T]) -> Result<DMatrix<T>, DimensionMismatch> {
        let n = self.n_joints();
        let mut m = DMatrix::zeros(n, n);
        self.mass_matrix_into(&mut DynamicsWorkspace::for_model(self), q, &mut m)?;
        Ok(m)
    }

    /// Gravitational potential energy, zero at the base origin.
    pub fn potential_energy(&self, q: &[T]) -> Result<T, DimensionMismatch> {
        check_len("q", self.n_joints(), q.len())?;
        let mut u = T::zero();
        self.walk(q, |i, f| {
            let c = f.transform_point(&nalgebra::Point3::from(self.joints[i].com)).coords;
            u -= self.joints[i].mass * self.gravity.dot(&c);
        });
        Ok(u)
    }

    /// `½ q̇ᵀ (M(q) + K_r) q̇` using a caller-supplied mass-matrix buffer.
    pub fn kinetic_energy_into(
        &self,
        ws: &mut DynamicsWorkspace<T>,
        q: &[T],
        qd: &[T],
        m: &mut DMatrix<T>,
    ) -> Result<T, DimensionMismatch> {
        check_len("qd", self.n_joints(), qd.len())?;
        self.mass_matrix_into(ws, q, m)?;
        let mut e = T::zero();
        for i in 0..qd.len() {
            e += qd[i] * qd[i] * self.joints[i].rotor_inertia;
            for j in 0..qd.len() {
                e += qd[i] * m[(i, j)] * qd[j];
            }
        }
        Ok(e * lit(0.5))
    }
}
