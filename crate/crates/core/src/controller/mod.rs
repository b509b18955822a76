//! Blended joint/task-space impedance controller.
//!
//! The motor command is `τ_m = τ_q + τ_x − τ̂_f + g`, where the joint and task
//! PD terms are scaled by `joint_scale` and `task_scale`. Sliding one scale
//! down while the other goes up moves continuously between joint-only,
//! hybrid and task-only behaviour without restarting anything.

mod law;

use nalgebra::{Matrix6xX, Vector6};
use thiserror::Error;

pub use law::{compose_command, joint_torque, pose_error, task_torque};

use crate::error::{check_len, DimensionMismatch};
use crate::model::{ChainModel, DynamicsWorkspace, Pose};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("gain `{name}` has {got} entries, expected {expected}")]
    Length { name: &'static str, expected: usize, got: usize },
    #[error("gain `{name}`[{index}] must be finite and non-negative")]
    Negative { name: &'static str, index: usize },
    #[error("scale `{name}` must lie in [0, 1]")]
    Scale { name: &'static str },
    #[error("tau_max[{index}] exceeds the model torque limit")]
    TorqueLimit { index: usize },
    #[error("integral window must be positive")]
    Window,
    #[error("blend must lie in [0, 1]")]
    Blend,
}

/// Every tunable of the controller and the friction observer.
///
/// Published as a complete snapshot; the control loop never sees a partial update.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T: Real> {
    pub kp: Vec<T>,
    pub kd: Vec<T>,
    /// Task stiffness: N/m on rows 0–2, N·m/rad on rows 3–5.
    pub kpx: Vector6<T>,
    pub kdx: Vector6<T>,
    pub joint_scale: T,
    pub task_scale: T,
    /// Per-joint bound on the joint derivative torque.
    pub tau_d_max: Vec<T>,
    /// Per-axis bound on the task derivative wrench.
    pub wrench_d_max: Vector6<T>,
    /// Per-joint clamp on the total command.
    pub tau_max: Vec<T>,
    pub kl: Vec<T>,
    pub klp: Vec<T>,
    pub kli: Vec<T>,
    /// Length of the observer's sliding integral window, seconds.
    pub t_int: T,
    /// Evaluate gravity compensation at the target `q*` rather than at the measured `q`.
    pub gravity_at_target: bool,
    /// Feed the task-space loop with the nominal rather than the measured state.
    pub task_uses_nominal: bool,
}

impl<T: Real> GainSet<T> {
    /// All gains zero, joint-only blend, one-second window, gravity at target.
    pub fn zeros(n: usize) -> Self {
        let z = vec![T::zero(); n];
        Self {
            kp: z.clone(),
            kd: z.clone(),
            kpx: Vector6::zeros(),
            kdx: Vector6::zeros(),
            joint_scale: T::one(),
            task_scale: T::one(),
            tau_d_max: z.clone(),
            wrench_d_max: Vector6::zeros(),
            tau_max: z.clone(),
            kl: z.clone(),
            klp: z.clone(),
            kli: z,
            t_int: T::one(),
            gravity_at_target: true,
            task_uses_nominal: false,
        }
    }

    /// Zero gains with `tau_max` set to the model's torque limits.
    pub fn for_model(model: &ChainModel<T>) -> Self {
        let mut g = Self::zeros(model.n_joints());
        g.tau_max = model.joints().iter().map(|j| j.torque_limit).collect();
        g
    }

    pub fn n_joints(&self) -> usize {
        self.kp.len()
    }

    pub fn validate(&self, model: &ChainModel<T>) -> Result<(), GainError> {
        let n = model.n_joints();
        let per_joint: [(&'static str, &Vec<T>); 7] = [
            ("kp", &self.kp),
            ("kd", &self.kd),
            ("tau_d_max", &self.tau_d_max),
            ("tau_max", &self.tau_max),
            ("kl", &self.kl),
            ("klp", &self.klp),
            ("kli", &self.kli),
        ];
        for (name, v) in per_joint {
            if v.len() != n {
                return Err(GainError::Length { name, expected: n, got: v.len() });
            }
            non_negative(name, v.iter())?;
        }
        non_negative("kpx", self.kpx.iter())?;
        non_negative("kdx", self.kdx.iter())?;
        non_negative("wrench_d_max", self.wrench_d_max.iter())?;
        for (name, s) in [("joint_scale", self.joint_scale), ("task_scale", self.task_scale)] {
            if !(s >= T::zero() && s <= T::one()) {
                return Err(GainError::Scale { name });
            }
        }
        for (i, (t, j)) in self.tau_max.iter().zip(model.joints()).enumerate() {
            if *t > j.torque_limit {
                return Err(GainError::TorqueLimit { index: i });
            }
        }
        if !(self.t_int > T::zero() && self.t_int.is_finite()) {
            return Err(GainError::Window);
        }
        Ok(())
    }

    /// Copy with `joint_scale = 1 − alpha` and `task_scale = alpha`.
    ///
    /// `alpha = 0` is joint-only, `alpha = 1` task-only, `0.5` the balanced hybrid.
    pub fn set_blend(&self, alpha: T) -> Result<Self, GainError> {
        let mut out = self.clone();
        out.apply_blend(alpha)?;
        Ok(out)
    }

    pub fn apply_blend(&mut self, alpha: T) -> Result<(), GainError> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(GainError::Blend);
        }
        self.joint_scale = T::one() - alpha;
        self.task_scale = alpha;
        Ok(())
    }
}

fn non_negative<'a, T: Real>(name: &'static str, vals: impl Iterator<Item = &'a T>) -> Result<(), GainError> {
    for (index, v) in vals.enumerate() {
        if !(*v >= T::zero() && v.is_finite()) {
            return Err(GainError::Negative { name, index });
        }
    }
    Ok(())
}

/// Desired state for one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference<T: Real> {
    pub q_star: Vec<T>,
    pub qd_star: Vec<T>,
    pub x_star: Pose<T>,
    /// Desired end-effector twist (linear, angular), base frame.
    pub xd_star: Vector6<T>,
    /// Treat both desired velocities as zero inside the PD laws.
    pub passivity_mode: bool,
}

impl<T: Real> Reference<T> {
    /// Reference with an identity task target; useful when the task loop is off.
    pub fn joint_only(q_star: Vec<T>, qd_star: Vec<T>) -> Self {
        Self { q_star, qd_star, x_star: Pose::identity(), xd_star: Vector6::zeros(), passivity_mode: false }
    }

    /// Holds `q` with zero velocity; the task target is `FK(q)`.
    pub fn hold(model: &ChainModel<T>, q: &[T]) -> Result<Self, DimensionMismatch> {
        let x_star = model.forward_kinematics(q)?;
        Ok(Self {
            q_star: q.to_vec(),
            qd_star: vec![T::zero(); q.len()],
            x_star,
            xd_star: Vector6::zeros(),
            passivity_mode: false,
        })
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.q_star.copy_from_slice(&other.q_star);
        self.qd_star.copy_from_slice(&other.qd_star);
        self.x_star = other.x_star;
        self.xd_star = other.xd_star;
        self.passivity_mode = other.passivity_mode;
    }
}

/// Motor torque command with its additive breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand<T: Real> {
    pub tau_m: Vec<T>,
    pub tau_q: Vec<T>,
    pub tau_x: Vec<T>,
    pub tau_f_hat: Vec<T>,
    pub g_comp: Vec<T>,
    /// Bit `i` set when joint `i` hit its torque clamp this tick.
    pub clamped: u64,
}

impl<T: Real> TorqueCommand<T> {
    pub fn zeros(n: usize) -> Self {
        let z = vec![T::zero(); n];
        Self { tau_m: z.clone(), tau_q: z.clone(), tau_x: z.clone(), tau_f_hat: z.clone(), g_comp: z, clamped: 0 }
    }

    /// The part of `tau_m` that is not friction compensation. Equals the
    /// unclamped `τ_q + τ_x + g` whenever no joint was clamped.
    pub fn drive_torque(&self, i: usize) -> T {
        self.tau_m[i] + self.tau_f_hat[i]
    }
}

/// Measured and nominal joint state fed to one controller evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a, T: Real> {
    pub q: &'a [T],
    pub qd: &'a [T],
    /// Nominal (friction-free) state from the observer; equals `q`, `qd` when it is off.
    pub q_n: &'a [T],
    pub qd_n: &'a [T],
    pub tau_f_hat: &'a [T],
}

/// Owns every buffer the control law needs so that [`ImpedanceController::compute`]
/// runs without heap traffic.
#[derive(Debug, Clone)]
pub struct ImpedanceController<T: Real> {
    ws: DynamicsWorkspace<T>,
    jac: Matrix6xX<T>,
    qd_task: Vec<T>,
    tau_q: Vec<T>,
    tau_x: Vec<T>,
    g: Vec<T>,
    x: Pose<T>,
    xd: Vector6<T>,
    command: TorqueCommand<T>,
}

impl<T: Real> ImpedanceController<T> {
    pub fn new(model: &ChainModel<T>) -> Self {
        let n = model.n_joints();
        Self {
            ws: DynamicsWorkspace::new(n),
            jac: Matrix6xX::zeros(n),
            qd_task: vec![T::zero(); n],
            tau_q: vec![T::zero(); n],
            tau_x: vec![T::zero(); n],
            g: vec![T::zero(); n],
            x: Pose::identity(),
            xd: Vector6::zeros(),
            command: TorqueCommand::zeros(n),
        }
    }

    /// One evaluation of the full law.
    ///
    /// The joint PD acts on the nominal state; the task PD acts on the
    /// measured state unless `task_uses_nominal` is set.
    pub fn compute(
        &mut self,
        model: &ChainModel<T>,
        gains: &GainSet<T>,
        input: &ControlInput<'_, T>,
        reference: &Reference<T>,
    ) -> Result<&TorqueCommand<T>, DimensionMismatch> {
        let n = model.n_joints();
        check_len("gains", n, gains.n_joints())?;
        for (what, v) in [("q", input.q), ("qd", input.qd), ("q_n", input.q_n), ("qd_n", input.qd_n)] {
            check_len(what, n, v.len())?;
        }

        joint_torque(gains, input.q_n, input.qd_n, reference, &mut self.tau_q)?;

        if gains.task_scale == T::zero() {
            self.tau_x.fill(T::zero());
        } else {
            let (q_task, qd_task) =
                if gains.task_uses_nominal { (input.q_n, input.qd_n) } else { (input.q, input.qd) };
            self.qd_task.copy_from_slice(qd_task);
            self.x = model.forward_kinematics(q_task)?;
            model.jacobian_into(q_task, &mut self.jac)?;
            self.xd.fill(T::zero());
            for (i, v) in self.qd_task.iter().enumerate() {
                self.xd += self.jac.column(i) * *v;
            }
            task_torque(gains, &self.jac, &self.x, &self.xd, reference, &mut self.tau_x)?;
        }

        let q_grav = if gains.gravity_at_target { &reference.q_star[..] } else { input.q };
        model.gravity_torques_into(&mut self.ws, q_grav, &mut self.g)?;

        compose_command(gains, &self.tau_q, &self.tau_x, input.tau_f_hat, &self.g, &mut self.command)?;
        Ok(&self.command)
    }

    pub fn command(&self) -> &TorqueCommand<T> {
        &self.command
    }

    /// End-effector pose seen by the task loop on the last evaluation
    /// (only refreshed while the task loop is active).
    pub fn last_pose(&self) -> &Pose<T> {
        &self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::planar2;

    #[test]
    fn blend_mapping() {
        let g = GainSet::<f64>::zeros(2);
        let j = g.set_blend(0.0).unwrap();
        assert_eq!((j.joint_scale, j.task_scale), (1.0, 0.0));
        let t = g.set_blend(1.0).unwrap();
        assert_eq!((t.joint_scale, t.task_scale), (0.0, 1.0));
        let h = g.set_blend(0.5).unwrap();
        assert_eq!((h.joint_scale, h.task_scale), (0.5, 0.5));
        assert_eq!(g.set_blend(1.5).unwrap_err(), GainError::Blend);
        assert_eq!(g.set_blend(f64::NAN).unwrap_err(), GainError::Blend);
    }

    #[test]
    fn validation() {
        let m = planar2();
        let mut g = GainSet::for_model(&m);
        g.validate(&m).unwrap();
        g.kp[1] = -1.0;
        assert_eq!(g.validate(&m).unwrap_err(), GainError::Negative { name: "kp", index: 1 });
        let mut g = GainSet::for_model(&m);
        g.tau_max[0] = 1e6;
        assert_eq!(g.validate(&m).unwrap_err(), GainError::TorqueLimit { index: 0 });
        let mut g = GainSet::for_model(&m);
        g.t_int = 0.0;
        assert_eq!(g.validate(&m).unwrap_err(), GainError::Window);
        let mut g = GainSet::for_model(&m);
        g.kl.pop();
        assert!(matches!(g.validate(&m).unwrap_err(), GainError::Length { name: "kl", .. }));
    }

    #[test]
    fn at_target_with_gravity_off_command_is_zero() {
        let m = planar2();
        let mut g = GainSet::for_model(&m);
        g.kp = vec![50.0; 2];
        g.kpx = Vector6::repeat(100.0);
        g.tau_d_max = vec![10.0; 2];
        let q = [0.3, 0.2];
        let r = Reference::hold(&m, &q).unwrap();
        let mut c = ImpedanceController::new(&m);
        let z = [0.0; 2];
        let input = ControlInput { q: &q, qd: &z, q_n: &q, qd_n: &z, tau_f_hat: &z };
        let cmd = c.compute(&m, &g, &input, &r).unwrap();
        // planar arm in the x-y plane: gravity along -z produces no torque
        assert!(cmd.tau_m.iter().all(|v| v.abs() < 1e-12), "{:?}", cmd.tau_m);
    }
}
