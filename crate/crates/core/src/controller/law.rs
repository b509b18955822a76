//! The individual impedance terms. Each writes into a caller buffer and never allocates.

use nalgebra::{Matrix6xX, Quaternion, Vector3, Vector6};

use super::{GainSet, Reference, TorqueCommand};
use crate::error::{check_len, DimensionMismatch};
use crate::model::Pose;
use crate::scalar::{clamp_sym, lit, Real};

/// Pose difference `x ⊖ x*`: position rows `p − p*`, orientation rows the
/// rotation vector of `R R*ᵀ` in the base frame.
///
/// At exactly half a turn the quaternion sign is ambiguous; the axis is then
/// oriented so that its largest-magnitude component is positive.
pub fn pose_error<T: Real>(x: &Pose<T>, x_star: &Pose<T>) -> Vector6<T> {
    let dp = x.position - x_star.position;
    let rot = rotation_vector(x.orientation().quaternion(), x_star.orientation().quaternion());
    Vector6::new(dp.x, dp.y, dp.z, rot.x, rot.y, rot.z)
}

/// Rotation vector of `a ⊗ b⁻¹`. The product is expanded by hand so that
/// equal inputs give an exactly zero vector part.
fn rotation_vector<T: Real>(a: &Quaternion<T>, b: &Quaternion<T>) -> Vector3<T> {
    let (va, vb) = (a.vector(), b.vector());
    let mut w = a.w * b.w + va.dot(&vb);
    let mut v = va * b.w - vb * a.w - va.cross(&vb);
    if w < T::zero() {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if w <= lit(1e-12) {
        let pivot = v.iamax();
        if v[pivot] < T::zero() {
            v = -v;
        }
        return v * (T::pi() / s);
    }
    if s < lit(1e-8) {
        return v * (lit::<T>(2.0) / w);
    }
    v * (lit::<T>(2.0) * s.atan2(w) / s)
}

/// Joint-space PD with a bounded derivative term:
/// `τ_q = s_q (−K_p (q − q*) − clamp(K_d (q̇ − q̇*), ±τ_d,max))`.
pub fn joint_torque<T: Real>(
    gains: &GainSet<T>,
    q: &[T],
    qd: &[T],
    reference: &Reference<T>,
    out: &mut [T],
) -> Result<(), DimensionMismatch> {
    let n = gains.kp.len();
    check_len("q", n, q.len())?;
    check_len("qd", n, qd.len())?;
    check_len("q_star", n, reference.q_star.len())?;
    check_len("out", n, out.len())?;
    let scale = gains.joint_scale;
    if scale == T::zero() {
        out.fill(T::zero());
        return Ok(());
    }
    for i in 0..n {
        let qd_star = if reference.passivity_mode { T::zero() } else { reference.qd_star[i] };
        let spring = gains.kp[i] * (q[i] - reference.q_star[i]);
        let damper = clamp_sym(gains.kd[i] * (qd[i] - qd_star), gains.tau_d_max[i]);
        out[i] = scale * (-spring - damper);
    }
    Ok(())
}

/// Task-space PD projected through the Jacobian transpose:
/// `τ_x = s_x Jᵀ (−K_px (x ⊖ x*) − clamp(K_dx (ẋ − ẋ*), ±w_d,max))`.
pub fn task_torque<T: Real>(
    gains: &GainSet<T>,
    jac: &Matrix6xX<T>,
    x: &Pose<T>,
    xd: &Vector6<T>,
    reference: &Reference<T>,
    out: &mut [T],
) -> Result<(), DimensionMismatch> {
    let n = gains.kp.len();
    check_len("jacobian columns", n, jac.ncols())?;
    check_len("out", n, out.len())?;
    let scale = gains.task_scale;
    if scale == T::zero() {
        out.fill(T::zero());
        return Ok(());
    }
    let err = pose_error(x, &reference.x_star);
    let mut wrench = Vector6::zeros();
    for k in 0..6 {
        let xd_star = if reference.passivity_mode { T::zero() } else { reference.xd_star[k] };
        let damper = clamp_sym(gains.kdx[k] * (xd[k] - xd_star), gains.wrench_d_max[k]);
        wrench[k] = -gains.kpx[k] * err[k] - damper;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = scale * jac.column(i).dot(&wrench);
    }
    Ok(())
}

/// `τ_m = clamp(τ_q + τ_x − τ̂_f + g, ±τ_max)` with the breakdown kept for logging.
pub fn compose_command<T: Real>(
    gains: &GainSet<T>,
    tau_q: &[T],
    tau_x: &[T],
    tau_f_hat: &[T],
    g_comp: &[T],
    cmd: &mut TorqueCommand<T>,
) -> Result<(), DimensionMismatch> {
    let n = gains.tau_max.len();
    for (what, v) in [("tau_q", tau_q), ("tau_x", tau_x), ("tau_f_hat", tau_f_hat), ("g_comp", g_comp)] {
        check_len(what, n, v.len())?;
    }
    check_len("command", n, cmd.tau_m.len())?;
    cmd.clamped = 0;
    for i in 0..n {
        cmd.tau_q[i] = tau_q[i];
        cmd.tau_x[i] = tau_x[i];
        cmd.tau_f_hat[i] = tau_f_hat[i];
        cmd.g_comp[i] = g_comp[i];
        let raw = tau_q[i] + tau_x[i] - tau_f_hat[i] + g_comp[i];
        let limited = clamp_sym(raw, gains.tau_max[i]);
        if limited != raw {
            cmd.clamped |= 1 << i;
        }
        cmd.tau_m[i] = limited;
    }
    Ok(())
}
