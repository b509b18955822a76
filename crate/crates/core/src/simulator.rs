//! Rigid-joint plant with reflected rotor inertia, smooth Coulomb plus viscous
//! friction, a link-side torque sensor and external disturbance injection.
//!
//! Dynamics: `(M(q) + K_r) q̈ + C(q,q̇)q̇ + g(q) = τ_m − τ_f + τ_ext` with
//! `τ_ext = Jᵀw + τ_joint`. The sensor reports the torque transmitted to the
//! links, `τ_s = M q̈ + C q̇ + g − τ_ext`, so that `τ_m − τ_s = K_r q̈ + τ_f`
//! holds exactly whatever the disturbance.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix6, Matrix6xX, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::error::{check_len, DimensionMismatch};
use crate::model::{ChainModel, DynamicsWorkspace, JointState};
use crate::scalar::{lit, Real};

/// Default smoothing velocity of the Coulomb term, rad/s.
pub const DEFAULT_FRICTION_EPS: f64 = 1e-3;

/// Runaway guard on joint positions.
pub const POSITION_GUARD: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error("time step must be positive and substeps at least one")]
    Step,
    #[error("simulation diverged at t = {t} s")]
    Divergence { t: f64 },
    #[error("disturbance window must satisfy t_start < t_end")]
    Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState<T: Real> {
    pub q: Vec<T>,
    pub qd: Vec<T>,
    pub t: T,
    /// Link-side torque at the last substep.
    pub last_tau_sensor: Vec<T>,
    pub last_qdd: Vec<T>,
    /// Ground-truth friction at the last substep (sign follows `q̇`).
    pub last_friction: Vec<T>,
}

/// External load active on `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDisturbance<T: Real> {
    /// Force (N) and moment (N·m) at the end effector, base frame.
    pub wrench: Vector6<T>,
    /// Optional additional torques applied directly on the joints.
    pub joint_torque: Option<Vec<T>>,
    /// Optional force on a point of an intermediate link.
    pub link_force: Option<LinkForce<T>>,
    pub t_start: T,
    pub t_end: T,
}

/// Force (N, base frame) applied at `point` (link frame) on link `link`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkForce<T: Real> {
    pub link: usize,
    pub point: Vector3<T>,
    pub force: Vector3<T>,
}

impl<T: Real> ExternalDisturbance<T> {
    pub fn wrench(wrench: Vector6<T>, t_start: T, t_end: T) -> Result<Self, SimError> {
        Self::validated(Self { wrench, joint_torque: None, link_force: None, t_start, t_end })
    }

    pub fn joint_torques(tau: Vec<T>, t_start: T, t_end: T) -> Result<Self, SimError> {
        Self::validated(Self { wrench: Vector6::zeros(), joint_torque: Some(tau), link_force: None, t_start, t_end })
    }

    pub fn link_force(force: LinkForce<T>, t_start: T, t_end: T) -> Result<Self, SimError> {
        Self::validated(Self { wrench: Vector6::zeros(), joint_torque: None, link_force: Some(force), t_start, t_end })
    }

    fn validated(d: Self) -> Result<Self, SimError> {
        if d.t_start < d.t_end {
            Ok(d)
        } else {
            Err(SimError::Window)
        }
    }

    pub fn active(&self, t: T) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// `τ_f,i = f_c,i tanh(q̇_i / ε) + f_v,i q̇_i`.
pub fn friction_torque<T: Real>(model: &ChainModel<T>, qd: &[T], v_eps: T, out: &mut [T]) -> Result<(), DimensionMismatch> {
    let n = model.n_joints();
    check_len("qd", n, qd.len())?;
    check_len("out", n, out.len())?;
    for ((o, j), &v) in out.iter_mut().zip(model.joints()).zip(qd) {
        *o = j.coulomb * (v / v_eps).tanh() + j.viscous * v;
    }
    Ok(())
}

/// Plant state plus the preallocated buffers to advance it.
#[derive(Debug, Clone)]
pub struct Plant<T: Real> {
    state: PlantState<T>,
    friction_eps: T,
    ws: DynamicsWorkspace<T>,
    mass: DMatrix<T>,
    system: DMatrix<T>,
    rhs: DVector<T>,
    bias: Vec<T>,
    tau_ext: Vec<T>,
    tau_link: Vec<T>,
    jac: Matrix6xX<T>,
}

impl<T: Real> Plant<T> {
    pub fn new(model: &ChainModel<T>, q: &[T], qd: &[T]) -> Result<Self, DimensionMismatch> {
        let n = model.n_joints();
        check_len("q", n, q.len())?;
        check_len("qd", n, qd.len())?;
        let z = vec![T::zero(); n];
        let mut plant = Self {
            state: PlantState {
                q: q.to_vec(),
                qd: qd.to_vec(),
                t: T::zero(),
                last_tau_sensor: z.clone(),
                last_qdd: z.clone(),
                last_friction: z.clone(),
            },
            friction_eps: lit(DEFAULT_FRICTION_EPS),
            ws: DynamicsWorkspace::new(n),
            mass: DMatrix::zeros(n, n),
            system: DMatrix::zeros(n, n),
            rhs: DVector::zeros(n),
            bias: z.clone(),
            tau_ext: z.clone(),
            tau_link: z,
            jac: Matrix6xX::zeros(n),
        };
        // Static sensor reading so the first control tick sees a consistent torque.
        model.gravity_torques_into(&mut plant.ws, q, &mut plant.state.last_tau_sensor)?;
        Ok(plant)
    }

    pub fn with_friction_eps(mut self, eps: T) -> Self {
        self.friction_eps = eps;
        self
    }

    pub fn state(&self) -> &PlantState<T> {
        &self.state
    }

    /// Advances by `dt` using `substeps` semi-implicit Euler steps with `tau_m` held.
    pub fn step(
        &mut self,
        model: &ChainModel<T>,
        tau_m: &[T],
        disturbances: &[ExternalDisturbance<T>],
        dt: T,
        substeps: usize,
    ) -> Result<(), SimError> {
        let n = model.n_joints();
        check_len("tau_m", n, tau_m.len())?;
        if !(dt > T::zero()) || substeps == 0 {
            return Err(SimError::Step);
        }
        let h = dt / T::from_usize(substeps).expect("substeps representable");
        for _ in 0..substeps {
            self.substep(model, tau_m, disturbances, h)?;
        }
        Ok(())
    }

    fn substep(
        &mut self,
        model: &ChainModel<T>,
        tau_m: &[T],
        disturbances: &[ExternalDisturbance<T>],
        h: T,
    ) -> Result<(), SimError> {
        let n = model.n_joints();
        let s = &mut self.state;

        self.tau_ext.fill(T::zero());
        let mut jac_ready = false;
        for d in disturbances.iter().filter(|d| d.active(s.t)) {
            if d.wrench != Vector6::zeros() {
                if !jac_ready {
                    model.jacobian_into(&s.q, &mut self.jac)?;
                    jac_ready = true;
                }
                for i in 0..n {
                    self.tau_ext[i] += self.jac.column(i).dot(&d.wrench);
                }
            }
            if let Some(tau) = &d.joint_torque {
                check_len("disturbance joint_torque", n, tau.len())?;
                for i in 0..n {
                    self.tau_ext[i] += tau[i];
                }
            }
            if let Some(f) = &d.link_force {
                model.point_force_torques(&s.q, f.link, &f.point, &f.force, &mut self.tau_link)?;
                for i in 0..n {
                    self.tau_ext[i] += self.tau_link[i];
                }
            }
        }

        friction_torque(model, &s.qd, self.friction_eps, &mut s.last_friction)?;
        model.bias_torques_into(&mut self.ws, &s.q, &s.qd, &mut self.bias)?;
        model.mass_matrix_into(&mut self.ws, &s.q, &mut self.mass)?;

        self.system.copy_from(&self.mass);
        for i in 0..n {
            self.system[(i, i)] += model.rotor_inertia(i);
            self.rhs[i] = tau_m[i] - s.last_friction[i] + self.tau_ext[i] - self.bias[i];
        }
        let system = std::mem::replace(&mut self.system, DMatrix::zeros(0, 0));
        let Some(chol) = Cholesky::new(system) else {
            return Err(SimError::Divergence { t: s.t.as_f64() });
        };
        chol.solve_mut(&mut self.rhs);
        self.system = chol.unpack_dirty();

        for i in 0..n {
            let qdd = self.rhs[i];
            s.last_qdd[i] = qdd;
            let mut link = self.bias[i] - self.tau_ext[i];
            for j in 0..n {
                link += self.mass[(i, j)] * self.rhs[j];
            }
            s.last_tau_sensor[i] = link;
        }
        let guard = lit::<T>(POSITION_GUARD);
        let mut finite = true;
        for i in 0..n {
            s.qd[i] += s.last_qdd[i] * h;
            s.q[i] += s.qd[i] * h;
            finite &= s.q[i].is_finite() && s.qd[i].is_finite() && s.q[i].abs() <= guard;
        }
        s.t += h;
        if finite {
            Ok(())
        } else {
            Err(SimError::Divergence { t: s.t.as_f64() })
        }
    }
}

/// Additive Gaussian noise standard deviations for the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorNoise<T: Real> {
    pub sigma_q: T,
    pub sigma_qd: T,
    pub sigma_tau: T,
}

/// Samples the plant's sensors with optional noise from a seeded generator.
#[derive(Debug, Clone)]
pub struct SensorReader<T: Real> {
    noise: SensorNoise<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> SensorReader<T> {
    pub fn new(noise: SensorNoise<T>, seed: u64) -> Self {
        Self { noise, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn noiseless() -> Self {
        Self::new(SensorNoise::default(), 0)
    }

    /// Copies `(q, q̇, τ_s)` into `out` and adds noise where σ > 0.
    pub fn read(&mut self, state: &PlantState<T>, out: &mut JointState<T>) -> Result<(), DimensionMismatch> {
        let n = state.q.len();
        check_len("joint state", n, out.len())?;
        out.q.copy_from_slice(&state.q);
        out.qd.copy_from_slice(&state.qd);
        out.tau.copy_from_slice(&state.last_tau_sensor);
        let SensorNoise { sigma_q, sigma_qd, sigma_tau } = self.noise;
        for (buf, sigma) in [(&mut out.q, sigma_q), (&mut out.qd, sigma_qd), (&mut out.tau, sigma_tau)] {
            if sigma > T::zero() {
                for v in buf.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *v += sigma * lit::<T>(z);
                }
            }
        }
        Ok(())
    }
}

/// Diagnostic end-effector wrench from joint torques, `(J Jᵀ + λI)⁻¹ J τ`.
pub fn estimate_ee_wrench<T: Real>(jac: &Matrix6xX<T>, tau: &[T], lambda: T) -> Result<Vector6<T>, DimensionMismatch> {
    check_len("tau", jac.ncols(), tau.len())?;
    let mut jjt = Matrix6::identity() * lambda;
    let mut jt = Vector6::zeros();
    for (i, &t) in tau.iter().enumerate() {
        let c = jac.column(i);
        jt += c * t;
        jjt += c * c.transpose();
    }
    Ok(jjt.cholesky().map(|ch| ch.solve(&jt)).unwrap_or_else(Vector6::zeros))
}
